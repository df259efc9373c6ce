"""Gamma auxiliary variables that decouple the categories.

Given ``phi_i ~ Gamma(n_i, rate=sum_k exp(x_i' beta_k))`` the joint density of
``(y, phi)`` factorizes over categories, so each ``beta_j`` has a conditional
that involves only its own column.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np

from .errors import InvalidArgumentError, NumericalRangeError
from .model import CoefMatrix, Dataset, Prior, _check_coefs, log_prior
from .rng import TAG_PHI, CounterRNG


@dataclass(frozen=True)
class LatentPhi:
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise InvalidArgumentError("phi must be finite and strictly positive")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def __len__(self) -> int:
        return self.phi.size


def phi_rate(data: Dataset, B: np.ndarray) -> np.ndarray:
    """Per-row Gamma rate ``sum_k exp(x_i' beta_k)``."""
    with np.errstate(over="ignore"):
        rate = np.exp(data.X @ B).sum(axis=1)
    bad = np.flatnonzero(~np.isfinite(rate))
    if bad.size:
        raise NumericalRangeError(f"phi rate overflows at row {int(bad[0])}")
    return rate


def phi_from_standard_gamma(data: Dataset, B: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Scale Gamma(n_i, 1) variates ``g`` to the conditional of ``phi``."""
    return g / phi_rate(data, B)


def draw_phi(data: Dataset, coefs: CoefMatrix, rng: CounterRNG, scan: int = 0) -> LatentPhi:
    """Draw ``phi`` from its full conditional.

    Observation ``i`` reads only the counter stream ``(seed, scan, i)``.
    """
    _check_coefs(data, coefs)
    g = rng.standard_gamma(scan, np.arange(data.N), data.n, tag=TAG_PHI)
    return LatentPhi(phi_from_standard_gamma(data, coefs.B, g))


def _check_phi(data: Dataset, phi: LatentPhi) -> None:
    if len(phi) != data.N:
        raise InvalidArgumentError(f"phi has length {len(phi)}, data has {data.N} rows")


def augmented_joint_log_density(
    data: Dataset, phi: LatentPhi, coefs: CoefMatrix, include_constants: bool = False
) -> float:
    """``log p(y, phi | B)``.

    By default the multinomial coefficient and ``Gamma(n_i)`` are dropped; they
    depend on neither ``phi`` nor ``B``.
    """
    _check_coefs(data, coefs)
    _check_phi(data, phi)
    if data.N == 0:
        return 0.0
    eta = data.X @ coefs.B
    logphi = np.log(phi.phi)
    val = np.sum((data.n - 1) * logphi)
    val += np.sum(data.Y * eta) - np.sum(phi.phi[:, None] * np.exp(eta))
    if include_constants:
        for i in range(data.N):
            val += lgamma(data.n[i] + 1) - sum(lgamma(y + 1) for y in data.Y[i]) - lgamma(data.n[i])
    return float(val)


def augmented_log_conditional(
    j: int, data: Dataset, phi: LatentPhi, beta_j, prior: Prior
) -> float:
    """Unnormalized log conditional of category ``j`` (0-based) given ``phi``."""
    _check_phi(data, phi)
    if not 0 <= j < data.C:
        raise InvalidArgumentError(f"category index {j} outside 0..{data.C - 1}")
    beta_j = np.asarray(beta_j, dtype=np.float64)
    if beta_j.shape != (data.P + 1,):
        raise InvalidArgumentError(f"beta_j must have length {data.P + 1}")
    lp = log_prior(beta_j, prior)
    if data.N == 0:
        return lp
    eta = data.X @ beta_j
    return float(data.Y[:, j] @ eta - phi.phi @ np.exp(eta)) + lp
