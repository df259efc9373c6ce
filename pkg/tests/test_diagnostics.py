from __future__ import annotations

import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamma_mnl.diagnostics import (
    DEFAULT_LEVELS,
    autocorrelation,
    coverage,
    credible_interval,
    esr,
    ess,
    format_coverage,
    interval_report,
    mcse,
    summarize,
    summarize_draws,
)
from gamma_mnl.errors import DegenerateChainWarning, InvalidArgumentError
from gamma_mnl.model import CoefMatrix, Prior
from gamma_mnl.samplers import SamplerConfig, run_chain
from gamma_mnl.simharness import DgpConfig, generate_data


def _ar1(rho, T, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(T)
    x = np.empty(T)
    x[0] = e[0] / math.sqrt(1 - rho**2)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_autocorrelation_matches_direct_sum():
    x = _ar1(0.6, 500, 1)
    xc = x - x.mean()
    direct = np.array([xc[: x.size - k] @ xc[k:] for k in range(20)]) / (xc @ xc)
    np.testing.assert_allclose(autocorrelation(x)[:20], direct, rtol=1e-10, atol=1e-12)


def test_iid_chain_ess_near_length():
    x = np.random.default_rng(0).standard_normal(20_000)
    assert abs(ess(x) / x.size - 1) < 0.1


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_ar1_ess(rho):
    T = 50_000
    target = T * (1 - rho) / (1 + rho)
    assert abs(ess(_ar1(rho, T, 2)) / target - 1) < 0.15


def test_ess_bounds_and_warning():
    x = np.random.default_rng(1).standard_normal(200)
    assert 0 < ess(x) <= x.size
    with pytest.warns(DegenerateChainWarning):
        assert ess(np.full(50, 2.5)) == 50.0
    with pytest.raises(InvalidArgumentError):
        ess(np.ones(5))
    with pytest.raises(InvalidArgumentError):
        ess(np.array([1.0] * 20 + [np.nan]))


def test_antithetic_chain_capped_at_length():
    x = np.tile([1.0, -1.0], 500) + np.random.default_rng(0).normal(0, 1e-3, 1000)
    assert ess(x) == 1000.0


def test_thinning_raises_ess_per_draw():
    x = _ar1(0.9, 40_000, 3)
    assert ess(x[::10]) / 4000 > ess(x) / 40_000


def test_esr():
    assert esr(1000.0, 10.0) == 100.0
    with pytest.raises(InvalidArgumentError):
        esr(10.0, 0.0)


def test_interval_on_uniform_grid():
    # type-7 quantiles of 1..1000 at 0.25 and 0.75
    lo, hi = credible_interval(np.arange(1, 1001), 0.5)
    assert (lo, hi) == (250.75, 750.25)


@given(seed=st.integers(0, 1000), level=st.sampled_from(DEFAULT_LEVELS))
@settings(max_examples=30, deadline=None)
def test_interval_matches_sort_oracle(seed, level):
    x = np.random.default_rng(seed).normal(size=333)
    s = np.sort(x)
    a = (1 - level) / 2

    def q(prob):
        h = (s.size - 1) * prob
        k = math.floor(h)
        return s[k] + (h - k) * (s[min(k + 1, s.size - 1)] - s[k])

    lo, hi = credible_interval(x, level)
    assert lo == pytest.approx(q(a), abs=1e-12)
    assert hi == pytest.approx(q(1 - a), abs=1e-12)


def test_intervals_nest_and_are_symmetric():
    x = np.random.default_rng(2).normal(size=(5000, 1, 1))
    rep = interval_report(x, np.ones((1, 1), dtype=bool))
    widths = (rep.upper - rep.lower)[:, 0, 0]
    assert np.all(np.diff(widths) < 0)  # levels are in decreasing order
    sym = np.concatenate([x, -x])
    r2 = interval_report(sym, np.ones((1, 1), dtype=bool))
    np.testing.assert_allclose(r2.lower, -r2.upper, atol=1e-12)


def test_interval_argument_checks():
    with pytest.raises(InvalidArgumentError):
        credible_interval(np.arange(50.0), 0.9)
    with pytest.raises(InvalidArgumentError):
        credible_interval(np.arange(500.0), 1.0)


def test_coverage_fraction_and_closed_endpoints():
    T, K, C = 200, 11, 5
    draws = np.broadcast_to(np.linspace(-1, 1, T)[:, None, None], (T, K, C)).copy()
    constrained = np.ones((K, C), dtype=bool)
    constrained[:, -1] = False
    draws[:, :, -1] = 0.0
    rep = interval_report(draws, constrained, levels=(0.95,))
    lo, hi = rep.lower[0, 0, 0], rep.upper[0, 0, 0]
    B = np.zeros((K, C))
    free_idx = list(zip(*np.nonzero(constrained)))
    B[free_idx[0]] = hi + 1.0
    B[free_idx[1]] = lo - 1.0
    B[free_idx[2]] = lo  # endpoint counts as covered
    B[free_idx[3]] = hi
    cov = coverage(rep, CoefMatrix(B))
    assert cov[0.95] == pytest.approx(42 / 44)


def test_coverage_shifts_truth_to_reference_scale():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(3, 3))
    ref = B - B[:, -1:]
    draws = ref[None] + rng.normal(scale=1e-3, size=(400, 3, 3))
    draws[:, :, -1] = 0.0
    free = np.ones((3, 3), dtype=bool)
    free[:, -1] = False
    rep = interval_report(draws, free, levels=(0.99,))
    assert coverage(rep, CoefMatrix(B))[0.99] == 1.0
    with pytest.raises(InvalidArgumentError):
        coverage(rep, CoefMatrix(np.zeros((2, 3))))


def test_summarize_composes_components():
    data, truth = generate_data(DgpConfig(N=200, P=2, C=3, seed=1))
    out = run_chain(data, Prior.isotropic(3, 4.0), SamplerConfig(seed=2, reference_constrained=True))
    s = summarize(out, truth=truth)
    free = out.free_mask
    for p, j in zip(*np.nonzero(free)):
        assert s.ess_report.ess[p, j] == ess(out.draws[:, p, j])
        lo, hi = credible_interval(out.draws[:, p, j], 0.95)
        k = s.intervals.levels.index(0.95)
        assert (s.intervals.lower[k, p, j], s.intervals.upper[k, p, j]) == pytest.approx((lo, hi), abs=1e-14)
    assert s.ess_report.median_ess == float(np.median(s.ess_report.ess[free]))
    assert s.ess_report.esr == pytest.approx(s.ess_report.median_ess / out.elapsed_seconds)
    assert np.all(np.isnan(s.mean[:, -1]))
    assert set(s.intervals.coverage) == set(DEFAULT_LEVELS)
    d = json.loads(s.to_json())
    assert d["intervals"]["n_estimated"] == 6
    assert d["mean"][0][-1] is None
    text = s.to_text()
    assert "beta_1_0" in text and "beta_3_0" not in text


def test_summary_without_timing_skips_rate():
    draws = np.random.default_rng(0).normal(size=(300, 2, 2))
    s = summarize_draws(draws, 0.0)
    assert math.isnan(s.ess_report.esr)
    assert "ESR" not in s.to_text()


def test_degenerate_coefficients_flagged():
    draws = np.random.default_rng(0).normal(size=(300, 2, 2))
    draws[:, 1, 1] = 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = summarize_draws(draws, 1.0)
    assert s.ess_report.degenerate.tolist() == [[False, False], [False, True]]


def test_mcse_iid():
    x = np.random.default_rng(4).normal(size=10_000)
    assert mcse(x) == pytest.approx(x.std(ddof=1) / math.sqrt(ess(x)))
    assert 0.008 < mcse(x) < 0.012


def test_format_coverage_columns():
    table = {"da-mh": dict(zip(DEFAULT_LEVELS, [1, 0.955, 0.9, 0.75, 0.5])), "da-ess": dict(zip(DEFAULT_LEVELS, [1] * 5))}
    lines = format_coverage(table).splitlines()
    assert len(lines) == 3
    assert lines[0].split()[1:] == ["0.990", "0.950", "0.900", "0.750", "0.500"]
    assert lines[1].split()[0] == "da-mh" and lines[1].split()[2] == "0.955"
