from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamma_mnl.errors import DataLoadError, InvalidArgumentError
from gamma_mnl.model import (
    CoefMatrix,
    Dataset,
    Prior,
    load_dataset,
    log_likelihood,
    log_posterior_unaugmented,
    log_prior,
    save_dataset,
    softmax_probs,
)


def _scalar_softmax(x, B):
    # straightforward loop oracle
    scores = []
    for j in range(B.shape[1]):
        scores.append(sum(x[p] * B[p, j] for p in range(len(x))))
    m = max(scores)
    w = [math.exp(s - m) for s in scores]
    tot = sum(w)
    return np.array([v / tot for v in w])


def _random_instance(seed, N=6, P=2, C=3, n_max=3):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(N, P))
    n = rng.integers(1, n_max + 1, size=N)
    Y = np.array([rng.multinomial(k, np.ones(C) / C) for k in n])
    return Dataset.from_predictors(Z, Y), CoefMatrix(rng.normal(size=(P + 1, C)))


def test_softmax_zero_coefficients_uniform():
    p = softmax_probs([1.0, 0.3], CoefMatrix.zeros(1, 4))
    np.testing.assert_allclose(p, 0.25, rtol=0, atol=1e-15)


def test_softmax_two_categories_log_two():
    B = np.array([[math.log(2.0), 0.0]])
    np.testing.assert_allclose(softmax_probs([1.0], CoefMatrix(B)), [2 / 3, 1 / 3], rtol=1e-15)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_softmax_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    K, C = rng.integers(1, 5), rng.integers(2, 6)
    x, B = rng.normal(size=K) * 3, rng.normal(size=(K, C)) * 3
    p = softmax_probs(x, CoefMatrix(B))
    np.testing.assert_allclose(p, _scalar_softmax(x, B), rtol=1e-12, atol=1e-300)
    assert abs(p.sum() - 1) < 1e-12


def test_softmax_shift_invariance():
    rng = np.random.default_rng(0)
    x, B = rng.normal(size=3), rng.normal(size=(3, 4))
    shift = rng.normal(size=(3, 1))
    np.testing.assert_allclose(
        softmax_probs(x, CoefMatrix(B)), softmax_probs(x, CoefMatrix(B + shift)), rtol=1e-12
    )


def test_softmax_large_scores_do_not_overflow():
    B = np.array([[700.0, 699.0, -700.0]])
    p = softmax_probs([1.0], CoefMatrix(B))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p[:2], [1 / (1 + math.exp(-1)), math.exp(-1) / (1 + math.exp(-1))], rtol=1e-12)


def test_softmax_rejects_bad_rows():
    with pytest.raises(InvalidArgumentError):
        softmax_probs([1.0, 2.0], CoefMatrix.zeros(0, 2))
    with pytest.raises(InvalidArgumentError):
        softmax_probs([np.nan], CoefMatrix.zeros(0, 2))


def test_log_likelihood_at_zero():
    data = Dataset.from_predictors(np.zeros((1, 1)), [[1, 0]])
    assert log_likelihood(data, CoefMatrix.zeros(1, 2)) == pytest.approx(math.log(0.5), abs=1e-15)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_log_likelihood_matches_loop(seed):
    data, coefs = _random_instance(seed)
    ref = 0.0
    for i in range(data.N):
        p = _scalar_softmax(data.X[i], coefs.B)
        ref += sum(data.Y[i, j] * math.log(p[j]) for j in range(data.C))
    assert log_likelihood(data, coefs) == pytest.approx(ref, rel=1e-12)


def test_log_likelihood_empty_dataset():
    assert log_likelihood(Dataset.empty(2, 3), CoefMatrix.zeros(2, 3)) == 0.0


def test_log_prior_standard_bivariate_at_mean():
    assert log_prior(np.zeros(2), Prior.isotropic(2)) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)
    assert log_prior(np.ones(5), Prior.flat()) == 0.0


def test_log_prior_matches_explicit_inverse():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + 3 * np.eye(3)
    mean = rng.normal(size=3)
    b = rng.normal(size=3)
    r = b - mean
    ref = -1.5 * math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov)) - 0.5 * r @ np.linalg.inv(cov) @ r
    assert log_prior(b, Prior.normal(mean, cov)) == pytest.approx(ref, rel=1e-12)


def test_prior_validation():
    with pytest.raises(InvalidArgumentError):
        Prior.normal([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        Prior.normal([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        Prior.normal([0.0], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        Prior("laplace")
    p = Prior.isotropic(3, 2.0, 1.0)
    q = Prior.from_dict(p.to_dict())
    np.testing.assert_array_equal(q.cov, p.cov)
    np.testing.assert_array_equal(q.mean, p.mean)


def test_posterior_composition():
    data, coefs = _random_instance(4)
    prior = Prior.isotropic(data.P + 1, 4.0)
    lp = sum(log_prior(coefs.B[:, j], prior) for j in range(data.C))
    assert log_posterior_unaugmented(data, coefs, prior) == pytest.approx(
        log_likelihood(data, coefs) + lp, rel=1e-14
    )
    ref = coefs.to_reference()
    lp_ref = sum(log_prior(ref.B[:, j], prior) for j in range(data.C - 1))
    assert log_posterior_unaugmented(data, ref, prior) == pytest.approx(
        log_likelihood(data, ref) + lp_ref, rel=1e-14
    )


def test_reference_shift_keeps_likelihood():
    data, coefs = _random_instance(5)
    ref = coefs.to_reference()
    assert np.all(ref.B[:, -1] == 0)
    assert log_likelihood(data, ref) == pytest.approx(log_likelihood(data, coefs), rel=1e-12)
    assert list(ref.free_columns) == list(range(data.C - 1))


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        Dataset(np.ones((2, 1)), [[1, 0]])
    with pytest.raises(InvalidArgumentError):
        Dataset(np.ones((1, 1)), [[1, 0]], n=[2])
    with pytest.raises(InvalidArgumentError):
        Dataset(np.ones((1, 1)), [[-1, 2]])
    with pytest.raises(InvalidArgumentError):
        Dataset(np.ones((1, 1)), [[0, 0]])
    with pytest.raises(InvalidArgumentError):
        Dataset(np.full((1, 1), np.inf), [[1, 0]])
    d = Dataset.from_predictors([[0.5]], [[0, 2]])
    assert (d.N, d.P, d.C) == (1, 1, 2)
    assert d.n.tolist() == [2]
    with pytest.raises(ValueError):
        d.X[0, 0] = 3.0


def test_coef_matrix_validation():
    with pytest.raises(InvalidArgumentError):
        CoefMatrix(np.ones((2, 1)))
    with pytest.raises(InvalidArgumentError):
        CoefMatrix(np.ones((2, 2)), reference_constrained=True)
    with pytest.raises(InvalidArgumentError):
        log_likelihood(Dataset.empty(1, 2), CoefMatrix.zeros(2, 2))


def test_load_category_column(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x1,x2,y\n0.5,1.0,1\n-1.0,2.0,3\n0.0,0.0,2\n")
    d = load_dataset(f)
    assert (d.N, d.P, d.C) == (3, 2, 3)
    np.testing.assert_array_equal(d.X[:, 0], 1.0)
    assert d.Y.tolist() == [[1, 0, 0], [0, 0, 1], [0, 1, 0]]


def test_load_count_columns_round_trip(tmp_path):
    data, _ = _random_instance(8)
    f = tmp_path / "d.csv"
    save_dataset(data, f)
    back = load_dataset(f)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.Y, data.Y)


@pytest.mark.parametrize(
    "body,row",
    [
        ("x1,y\n0.5,1\nabc,2\n", 3),
        ("x1,y\n0.5,1\n0.1,1.5\n", 3),
        ("x1,y\n0.5,1\n0.1,2\n0.3\n", 4),
        ("x1,y1,y2\n0.5,1,0\n0.1,0,0\n", 3),
        ("x1,y\n0.5,2\n1.0,0\n", 3),
    ],
)
def test_load_errors_name_the_row(tmp_path, body, row):
    f = tmp_path / "bad.csv"
    f.write_text(body)
    with pytest.raises(DataLoadError) as info:
        load_dataset(f)
    assert info.value.row == row


def test_load_structural_errors(tmp_path):
    for body in ("", "x1,z\n1,2\n", "x1,y\n", "x1,y1,y3\n1,0,1\n"):
        f = tmp_path / "bad.csv"
        f.write_text(body)
        with pytest.raises(DataLoadError):
            load_dataset(f)
    with pytest.raises(DataLoadError):
        load_dataset(tmp_path / "missing.csv")
