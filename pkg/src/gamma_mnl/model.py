"""Multinomial logistic regression: data, coefficients, priors and densities.

Coefficients are stored as a ``(P+1, C)`` matrix whose column ``j`` is the
coefficient vector of category ``j``; row 0 multiplies the intercept column of
the design matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataLoadError, InvalidArgumentError


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (N, P+1), counts ``Y`` (N, C) and trials ``n`` (N,).

    ``N = 0`` is allowed so that samplers can be exercised on the prior alone.
    """

    X: np.ndarray
    Y: np.ndarray
    n: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        Y = np.asarray(self.Y)
        if X.ndim != 2 or Y.ndim != 2:
            raise InvalidArgumentError("X and Y must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise InvalidArgumentError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if X.shape[1] < 1:
            raise InvalidArgumentError("X needs at least the intercept column")
        if Y.shape[1] < 2:
            raise InvalidArgumentError("need at least two categories")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("X contains non-finite entries")
        if np.any(Y != np.round(Y)) or np.any(Y < 0):
            raise InvalidArgumentError("Y must hold non-negative integer counts")
        Y = np.array(Y, dtype=np.int64, copy=True)
        n = Y.sum(axis=1) if self.n is None else np.array(self.n, dtype=np.int64, copy=True)
        if n.shape != (X.shape[0],):
            raise InvalidArgumentError("n must have one entry per row")
        if np.any(n < 1):
            raise InvalidArgumentError("every row needs n_i >= 1")
        if np.any(Y.sum(axis=1) != n):
            bad = int(np.flatnonzero(Y.sum(axis=1) != n)[0])
            raise InvalidArgumentError(f"row {bad}: counts do not sum to n_i")
        for a in (X, Y, n):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "n", n)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        """Number of predictors, excluding the intercept."""
        return self.X.shape[1] - 1

    @property
    def C(self) -> int:
        return self.Y.shape[1]

    @cached_property
    def Xt(self) -> np.ndarray:
        """Contiguous transpose; row ``p`` is predictor ``p`` across observations."""
        return np.ascontiguousarray(self.X.T)

    @cached_property
    def XtY(self) -> np.ndarray:
        """``X' Y``, the sufficient statistic of the linear term, shape (P+1, C)."""
        return self.X.T @ self.Y.astype(np.float64)

    @classmethod
    def empty(cls, P: int, C: int) -> "Dataset":
        return cls(np.empty((0, P + 1)), np.empty((0, C), dtype=np.int64))

    @classmethod
    def from_predictors(cls, Z, Y, n=None) -> "Dataset":
        """Build from raw predictors ``Z`` (N, P), prepending the intercept."""
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[:, None]
        return cls(np.column_stack([np.ones(Z.shape[0]), Z]), Y, n)


@dataclass
class CoefMatrix:
    """Coefficient matrix ``B`` with optional ``beta_C = 0`` constraint."""

    B: np.ndarray
    reference_constrained: bool = False

    def __post_init__(self):
        self.B = np.array(self.B, dtype=np.float64, copy=True)
        if self.B.ndim != 2 or self.B.shape[1] < 2:
            raise InvalidArgumentError("B must be (P+1, C) with C >= 2")
        if not np.all(np.isfinite(self.B)):
            raise InvalidArgumentError("B contains non-finite entries")
        if self.reference_constrained and np.any(self.B[:, -1] != 0.0):
            raise InvalidArgumentError("reference column must be zero when constrained")

    @classmethod
    def zeros(cls, P: int, C: int, reference_constrained: bool = False) -> "CoefMatrix":
        return cls(np.zeros((P + 1, C)), reference_constrained)

    @property
    def P(self) -> int:
        return self.B.shape[0] - 1

    @property
    def C(self) -> int:
        return self.B.shape[1]

    @property
    def free_columns(self) -> range:
        return range(self.C - 1 if self.reference_constrained else self.C)

    def to_reference(self) -> "CoefMatrix":
        """Shift every column by ``-beta_C``; the implied probabilities are unchanged."""
        return CoefMatrix(self.B - self.B[:, -1:], reference_constrained=True)


class Prior:
    """Flat, or the same multivariate normal on every free category."""

    FLAT = "flat"
    NORMAL = "normal"

    def __init__(self, variant: str = FLAT, mean=None, cov=None):
        if variant not in (self.FLAT, self.NORMAL):
            raise InvalidArgumentError(f"unknown prior variant {variant!r}")
        self.variant = variant
        self.mean = self.cov = self.chol = self.precision = None
        self._log_norm = 0.0
        if variant == self.NORMAL:
            if mean is None or cov is None:
                raise InvalidArgumentError("normal prior needs mean and cov")
            mean = np.array(mean, dtype=np.float64)
            cov = np.array(cov, dtype=np.float64)
            if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
                raise InvalidArgumentError("prior mean/cov shapes disagree")
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
                raise InvalidArgumentError("prior mean/cov must be finite")
            if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
                raise InvalidArgumentError("prior covariance is not symmetric")
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise InvalidArgumentError("prior covariance is not positive definite") from exc
            self.mean, self.cov, self.chol = mean, cov, chol
            eye = np.eye(mean.size)
            chol_inv = np.linalg.solve(chol, eye)
            self.precision = chol_inv.T @ chol_inv
            self._log_norm = -0.5 * mean.size * np.log(2 * np.pi) - np.sum(np.log(np.diag(chol)))

    @classmethod
    def flat(cls) -> "Prior":
        return cls(cls.FLAT)

    @classmethod
    def normal(cls, mean, cov) -> "Prior":
        return cls(cls.NORMAL, mean, cov)

    @classmethod
    def isotropic(cls, dim: int, variance: float = 1.0, mean: float = 0.0) -> "Prior":
        return cls.normal(np.full(dim, float(mean)), float(variance) * np.eye(dim))

    @property
    def is_normal(self) -> bool:
        return self.variant == self.NORMAL

    @property
    def dim(self) -> int | None:
        return None if self.mean is None else self.mean.size

    def check_dim(self, dim: int) -> None:
        if self.is_normal and self.dim != dim:
            raise InvalidArgumentError(f"prior is {self.dim}-dimensional, coefficients are {dim}")

    def to_dict(self) -> dict:
        if not self.is_normal:
            return {"variant": self.FLAT}
        return {"variant": self.NORMAL, "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Prior":
        if d["variant"] == cls.FLAT:
            return cls.flat()
        return cls.normal(d["mean"], d["cov"])

    def __repr__(self) -> str:
        if not self.is_normal:
            return "Prior.flat()"
        return f"Prior.normal(dim={self.dim})"


def _check_coefs(data: Dataset, coefs: CoefMatrix) -> None:
    if coefs.B.shape != (data.P + 1, data.C):
        raise InvalidArgumentError(
            f"coefficients are {coefs.B.shape}, data needs {(data.P + 1, data.C)}"
        )


def log_softmax_rows(eta: np.ndarray) -> np.ndarray:
    m = eta.max(axis=-1, keepdims=True)
    z = eta - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_probs(x_row, coefs: CoefMatrix) -> np.ndarray:
    """Category probabilities for one predictor row (intercept included)."""
    x_row = np.asarray(x_row, dtype=np.float64)
    if x_row.shape != (coefs.B.shape[0],):
        raise InvalidArgumentError(f"x_row must have length {coefs.B.shape[0]}")
    if not np.all(np.isfinite(x_row)):
        raise InvalidArgumentError("x_row contains non-finite entries")
    eta = x_row @ coefs.B
    eta = eta - eta.max()
    w = np.exp(eta)
    return w / w.sum()


def log_likelihood(data: Dataset, coefs: CoefMatrix) -> float:
    """Multinomial log-likelihood without the multinomial coefficient."""
    _check_coefs(data, coefs)
    if data.N == 0:
        return 0.0
    return float(np.sum(data.Y * log_softmax_rows(data.X @ coefs.B)))


def log_prior(beta_j, prior: Prior) -> float:
    """Log prior density of one category's coefficient vector."""
    if not prior.is_normal:
        return 0.0
    r = np.asarray(beta_j, dtype=np.float64) - prior.mean
    return float(prior._log_norm - 0.5 * r @ prior.precision @ r)


def log_posterior_unaugmented(data: Dataset, coefs: CoefMatrix, prior: Prior) -> float:
    """Unnormalized log posterior of ``B`` with the softmax denominator intact."""
    lp = sum(log_prior(coefs.B[:, j], prior) for j in coefs.free_columns)
    return log_likelihood(data, coefs) + lp


def load_dataset(path, n_categories: int | None = None) -> Dataset:
    """Read a CSV dataset.

    The response is either a single integer column ``y`` with categories
    ``1..C`` (one trial per row) or count columns ``y1..yC``.  Every other
    column is a numeric predictor; an intercept column is prepended.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataLoadError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataLoadError(f"{path} has a header but no data rows")

    count_cols = sorted(
        (i for i, h in enumerate(header) if h.startswith("y") and h[1:].isdigit()),
        key=lambda i: int(header[i][1:]),
    )
    if count_cols:
        labels = [int(header[i][1:]) for i in count_cols]
        if labels != list(range(1, len(labels) + 1)):
            raise DataLoadError("count columns must be named y1..yC without gaps")
        resp = count_cols
    elif "y" in header:
        resp = [header.index("y")]
    else:
        raise DataLoadError("no response column (expected 'y' or 'y1..yC')")
    pred = [i for i in range(len(header)) if i not in resp]

    Z = np.empty((len(body), len(pred)))
    raw_y = np.empty((len(body), len(resp)), dtype=np.int64)
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataLoadError(f"expected {len(header)} fields, got {len(row)}", row=r)
        try:
            Z[r - 2] = [float(row[i]) for i in pred]
            vals = [float(row[i]) for i in resp]
        except ValueError as exc:
            raise DataLoadError(f"non-numeric value ({exc})", row=r) from None
        if not np.all(np.isfinite(Z[r - 2])):
            raise DataLoadError("non-finite predictor", row=r)
        if any(v != int(v) or v < 0 for v in vals):
            raise DataLoadError("response must be a non-negative integer", row=r)
        raw_y[r - 2] = [int(v) for v in vals]

    if len(resp) == 1:
        C = n_categories if n_categories is not None else int(raw_y.max())
        if C < 2:
            raise DataLoadError("need at least two categories")
        cats = raw_y[:, 0]
        bad = np.flatnonzero((cats < 1) | (cats > C))
        if bad.size:
            raise DataLoadError(f"category must be in 1..{C}", row=int(bad[0]) + 2)
        Y = np.zeros((len(body), C), dtype=np.int64)
        Y[np.arange(len(body)), cats - 1] = 1
    else:
        Y = raw_y
        zero = np.flatnonzero(Y.sum(axis=1) == 0)
        if zero.size:
            raise DataLoadError("row has no observations", row=int(zero[0]) + 2)
    try:
        return Dataset.from_predictors(Z, Y)
    except InvalidArgumentError as exc:
        raise DataLoadError(str(exc)) from exc


def save_dataset(data: Dataset, path) -> None:
    """Write in the count-column layout read by :func:`load_dataset`."""
    header = [f"x{p}" for p in range(1, data.P + 1)] + [f"y{j}" for j in range(1, data.C + 1)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.N):
            w.writerow([repr(float(v)) for v in data.X[i, 1:]] + [int(v) for v in data.Y[i]])
