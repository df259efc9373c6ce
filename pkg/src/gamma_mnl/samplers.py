"""Posterior samplers for multinomial logistic regression.

``DA_MH``
    Gamma augmentation, then a univariate random-walk Metropolis pass over
    the coefficients of each category, with proposal scales tuned in windows
    during burn-in.
``DA_ESS``
    Gamma augmentation, then one elliptical slice update of each category's
    full coefficient vector.  Needs a normal prior.
``NAIVE_MH``
    The same random-walk machinery run directly against the unaugmented
    posterior; categories are coupled through the softmax denominator and are
    updated one after another.

All randomness is read from :class:`ScanStreams`, whose values depend only on
``(seed, scan, unit)``; running category updates in any order or on any number
of threads gives the same chain.
"""

from __future__ import annotations

import enum
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .augmentation import LatentPhi, phi_rate
from .errors import InvalidArgumentError, SamplerError, UnsupportedConfigurationError
from .model import CoefMatrix, Dataset, Prior
from . import _kernels
from .rng import TAG_ESS, TAG_ESS_SHRINK, TAG_MH, TAG_PHI, CounterRNG

_TWO_PI = 2.0 * np.pi


class SamplerKind(str, enum.Enum):
    DA_MH = "da-mh"
    DA_ESS = "da-ess"
    NAIVE_MH = "naive-mh"

    @classmethod
    def parse(cls, value) -> "SamplerKind":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "-").replace("+", "-")
        for kind in cls:
            if kind.value == v:
                return kind
        raise InvalidArgumentError(f"unknown sampler {value!r}")


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 3000
    n_burn: int = 2000
    tune_window: int = 100
    accept_low: float = 0.20
    accept_high: float = 0.40
    scale_up: float = 2.0
    scale_down: float = 0.9
    sigma_init: float = 1.0
    sampler_kind: SamplerKind = SamplerKind.DA_MH
    seed: int = 0
    reference_constrained: bool = False
    threads: int = 1
    # cache granularity of the random streams; never changes the values drawn
    chunk_scans: int = 128
    max_shrink: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "sampler_kind", SamplerKind.parse(self.sampler_kind))
        if self.n_iter < 1:
            raise InvalidArgumentError("n_iter must be positive")
        if not 0 <= self.n_burn < self.n_iter:
            raise InvalidArgumentError("need 0 <= n_burn < n_iter")
        if self.tune_window < 1:
            raise InvalidArgumentError("tune_window must be positive")
        if not 0 < self.accept_low < self.accept_high < 1:
            raise InvalidArgumentError("need 0 < accept_low < accept_high < 1")
        if self.scale_up <= 1 or not 0 < self.scale_down < 1:
            raise InvalidArgumentError("need scale_up > 1 and 0 < scale_down < 1")
        if not self.sigma_init > 0:
            raise InvalidArgumentError("sigma_init must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
        if self.threads < 0:
            raise InvalidArgumentError("threads must be >= 0 (0 = auto)")
        if self.chunk_scans < 1 or self.max_shrink < 1:
            raise InvalidArgumentError("chunk_scans and max_shrink must be positive")

    @property
    def n_keep(self) -> int:
        return self.n_iter - self.n_burn

    @property
    def tunes(self) -> bool:
        return self.sampler_kind is not SamplerKind.DA_ESS

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["sampler_kind"] = self.sampler_kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(**d)


@dataclass
class AugmentedState:
    coefs: CoefMatrix
    sigma: np.ndarray
    phi: LatentPhi | None = None
    accept_counts: np.ndarray = None
    accept_total: np.ndarray = None
    scan_index: int = 0
    tuning: bool = True
    nonfinite_rejections: int = 0
    max_shrink_steps: int = 0

    def __post_init__(self):
        shape = self.coefs.B.shape
        self.sigma = np.array(self.sigma, dtype=np.float64)
        if self.sigma.shape != shape or np.any(self.sigma <= 0):
            raise InvalidArgumentError("sigma must be positive with the shape of B")
        if self.accept_counts is None:
            self.accept_counts = np.zeros(shape, dtype=np.int64)
        if self.accept_total is None:
            self.accept_total = np.zeros(shape, dtype=np.int64)

    @classmethod
    def initial(cls, data: Dataset, cfg: SamplerConfig) -> "AugmentedState":
        coefs = CoefMatrix.zeros(data.P, data.C, cfg.reference_constrained)
        return cls(coefs, np.full(coefs.B.shape, cfg.sigma_init))

    def _record(self, accepted: np.ndarray) -> None:
        if self.tuning:
            self.accept_counts += accepted
        else:
            self.accept_total += accepted


@dataclass
class ChainOutput:
    draws: np.ndarray
    elapsed_seconds: float
    seed: int
    final_sigma: np.ndarray
    post_burn_accept_rate: np.ndarray
    sampler_kind: SamplerKind
    reference_constrained: bool = False
    nonfinite_rejections: int = 0
    max_shrink_steps: int = 0
    config: SamplerConfig | None = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.draws.shape[1:], dtype=bool)
        if self.reference_constrained:
            mask[:, -1] = False
        return mask

    def metadata(self) -> dict:
        return {
            "sampler": self.sampler_kind.value,
            "seed": self.seed,
            "n_draws": self.n_draws,
            "elapsed_seconds": self.elapsed_seconds,
            "reference_constrained": self.reference_constrained,
            "nonfinite_rejections": self.nonfinite_rejections,
            "max_shrink_steps": self.max_shrink_steps,
            "final_sigma": self.final_sigma.tolist(),
            "post_burn_accept_rate": np.where(
                np.isfinite(self.post_burn_accept_rate), self.post_burn_accept_rate, None
            ).tolist(),
        }


class ScanStreams:
    """Per-scan random inputs for one chain, generated a chunk of scans at a time.

    Units: observation ``i`` for the Gamma variates, coefficient
    ``j * (P+1) + p`` for Metropolis steps, category ``j`` for elliptical
    slice draws.
    """

    def __init__(self, rng: CounterRNG, data: Dataset, chunk: int = 128, n_shrink: int = 32):
        self.rng = rng
        self.n = data.n
        self.N, self.K, self.C = data.N, data.P + 1, data.C
        self.chunk = chunk
        self.n_shrink = n_shrink
        self._cache: dict[str, tuple[int, object]] = {}

    def _get(self, name: str, scan: int, make):
        start, block = self._cache.get(name, (None, None))
        if start is None or not start <= scan < start + self.chunk:
            start = scan - scan % self.chunk
            block = make(np.arange(start, start + self.chunk))
            self._cache[name] = (start, block)
        return block, scan - start

    def gamma(self, scan: int) -> np.ndarray:
        """Gamma(n_i, 1) variates, shape (N,)."""
        if self.N == 0:
            return np.empty(0)

        def make(scans):
            return self.rng.standard_gamma(
                scans[:, None], np.arange(self.N)[None, :], self.n[None, :], tag=TAG_PHI
            )

        block, k = self._get("gamma", scan, make)
        return block[k]

    def mh(self, scan: int) -> tuple[np.ndarray, np.ndarray]:
        """Standard normal increments and acceptance uniforms, each (P+1, C)."""

        def make(scans):
            units = np.arange(self.K * self.C).reshape(self.C, self.K).T
            u = self.rng.uniform(scans[:, None, None], units[None], TAG_MH, 3)
            z = np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(_TWO_PI * u[..., 1])
            return z, u[..., 2]

        (z, u), k = self._get("mh", scan, make)
        return z[k], u[k]

    def ess(self, scan: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Standard normals (C, P+1), log slice heights (C,), initial angles (C,)."""
        offset = 2 * ((self.K + 1) // 2)

        def make(scans):
            s, j = scans[:, None], np.arange(self.C)[None, :]
            nu = self.rng.normal(s, j, TAG_ESS, self.K)
            u = self.rng.uniform(s, j, TAG_ESS, 2, offset=offset)
            return nu, np.log(u[..., 0]), _TWO_PI * u[..., 1]

        (nu, logu, theta), k = self._get("ess", scan, make)
        return nu[k], logu[k], theta[k]

    def shrink(self, scan: int) -> np.ndarray:
        """First ``n_shrink`` bracket-shrink uniforms per category, (C, n_shrink)."""

        def make(scans):
            return self.rng.uniform(
                scans[:, None], np.arange(self.C)[None, :], TAG_ESS_SHRINK, self.n_shrink
            )

        block, k = self._get("shrink", scan, make)
        return block[k]

    def shrink_extra(self, scan: int, j: int, k: int) -> float:
        """Shrink uniform number ``k`` of category ``j``, for any ``k``."""
        even = k - k % 2
        return float(self.rng.uniform(scan, j, TAG_ESS_SHRINK, 2, offset=even)[k % 2])


def _as_streams(rng, data: Dataset) -> ScanStreams:
    if isinstance(rng, ScanStreams):
        return rng
    if isinstance(rng, CounterRNG):
        return ScanStreams(rng, data, chunk=1)
    raise InvalidArgumentError("rng must be a CounterRNG or ScanStreams")


def autotune(accept_counts, sigma, cfg: SamplerConfig):
    """Adjust proposal scales after a tuning window of ``cfg.tune_window`` scans.

    Works elementwise on arrays.  Strictly more than ``accept_high * window``
    acceptances scales up; strictly fewer than ``accept_low * window`` scales
    down; anything else is kept.
    """
    counts = np.asarray(accept_counts)
    s = np.asarray(sigma, dtype=np.float64)
    eta = cfg.tune_window
    out = np.where(
        counts > cfg.accept_high * eta,
        cfg.scale_up * s,
        np.where(counts < cfg.accept_low * eta, cfg.scale_down * s, s),
    )
    return float(out) if out.ndim == 0 else out


_NO_Q = np.zeros((1, 1))
_NO_MU = np.zeros(1)


def _prior_arrays(prior: Prior):
    if prior.is_normal:
        return prior.precision, prior.mean, True
    return _NO_Q, _NO_MU, False


def _draw_phi_state(state: AugmentedState, data: Dataset, streams: ScanStreams) -> np.ndarray:
    g = streams.gamma(state.scan_index)
    phi = g / phi_rate(data, state.coefs.B) if data.N else g
    state.phi = LatentPhi(phi)
    return state.phi.phi


def damh_scan(state, data, prior, cfg, rng, order=None, executor=None) -> AugmentedState:
    """One Gibbs scan of DA+MH: redraw ``phi``, then update every free category.

    Within a category the coefficients are visited in ascending order.
    ``order`` permutes the category visits and ``executor`` (anything with a
    ``map`` method) runs them concurrently; neither changes the result.
    """
    streams = _as_streams(rng, data)
    phi = _draw_phi_state(state, data, streams)
    z, u = streams.mh(state.scan_index)
    logu = np.log(u)
    B, sigma = state.coefs.B, state.sigma
    Q, mu, normal = _prior_arrays(prior)
    Xt, XtY = data.Xt, data.XtY
    cols = list(state.coefs.free_columns) if order is None else list(order)

    def upd(j):
        return _kernels.mh_category(
            Xt, XtY[:, j], phi, B[:, j], sigma[:, j], z[:, j], logu[:, j], Q, mu, normal
        )

    results = list((executor.map if executor is not None else map)(upd, cols))
    accepted = np.zeros(B.shape, dtype=np.int64)
    for j, (beta, acc, bad) in zip(cols, results):
        B[:, j] = beta
        accepted[:, j] = acc
        state.nonfinite_rejections += bad
    state._record(accepted)
    return state


def _ess_update(data, streams, t, j, phi, beta, nu, mu, logu, theta, shrink_u, cfg):
    while True:
        new, k, status = _kernels.ess_category(
            data.X, data.XtY[:, j], phi, beta, nu, mu, logu, theta, shrink_u, cfg.max_shrink
        )
        if status == 0:
            return new, k
        if status != 1:
            raise SamplerError(f"elliptical slice failed after {k} shrink steps (category {j})", scan=t)
        n = min(4 * shrink_u.size, cfg.max_shrink + 2)
        shrink_u = streams.rng.uniform(t, j, TAG_ESS_SHRINK, n)


def daess_scan(state, data, prior, cfg, rng, order=None, executor=None) -> AugmentedState:
    """One scan of DA+ESS: redraw ``phi``, then slice-update each free category.

    The prior draw defining each ellipse is centred at the prior mean.  Every
    update ends on an accepted point.
    """
    if not prior.is_normal:
        raise UnsupportedConfigurationError("elliptical slice sampling requires a normal prior")
    streams = _as_streams(rng, data)
    t = state.scan_index
    phi = _draw_phi_state(state, data, streams)
    nu_std, logu, theta0 = streams.ess(t)
    shrink_u = streams.shrink(t)
    nu = nu_std @ prior.chol.T
    B = state.coefs.B
    cols = list(state.coefs.free_columns) if order is None else list(order)

    def upd(j):
        return _ess_update(
            data, streams, t, j, phi, B[:, j].copy(), nu[j], prior.mean,
            logu[j], theta0[j], shrink_u[j], cfg,
        )

    results = list((executor.map if executor is not None else map)(upd, cols))
    for j, (beta, k) in zip(cols, results):
        B[:, j] = beta
        state.max_shrink_steps = max(state.max_shrink_steps, k)
    accepted = np.zeros(B.shape, dtype=np.int64)
    accepted[:, cols] = 1
    state._record(accepted)
    return state


def naive_mh_scan(state, data, prior, cfg, rng) -> AugmentedState:
    """One scan of random-walk Metropolis on the unaugmented posterior.

    Every proposal re-evaluates the softmax denominator over all categories,
    so categories are visited in sequence.
    """
    streams = _as_streams(rng, data)
    z, u = streams.mh(state.scan_index)
    Q, mu, normal = _prior_arrays(prior)
    B, accepted, bad = _kernels.naive_scan(
        data.X, data.Xt, data.XtY.astype(np.float64), data.n.astype(np.float64),
        state.coefs.B, state.sigma, z, np.log(u), Q, mu, normal,
        len(state.coefs.free_columns),
    )
    state.coefs.B[:] = B
    state.nonfinite_rejections += bad
    state._record(accepted)
    return state


_SCANS = {
    SamplerKind.DA_MH: damh_scan,
    SamplerKind.DA_ESS: daess_scan,
    SamplerKind.NAIVE_MH: naive_mh_scan,
}


def check_configuration(data: Dataset, prior: Prior, cfg: SamplerConfig) -> None:
    prior.check_dim(data.P + 1)
    if cfg.sampler_kind is SamplerKind.DA_ESS and not prior.is_normal:
        raise UnsupportedConfigurationError("elliptical slice sampling requires a normal prior")


def run_chain(data: Dataset, prior: Prior, cfg: SamplerConfig) -> ChainOutput:
    """Run one chain from ``B = 0`` and keep the post-burn-in draws.

    Proposal scales are tuned during burn-in (Metropolis samplers only) once
    per complete window of ``cfg.tune_window`` scans and frozen afterwards.
    """
    check_configuration(data, prior, cfg)
    _kernels.warmup()
    state = AugmentedState.initial(data, cfg)
    streams = ScanStreams(CounterRNG(cfg.seed), data, chunk=cfg.chunk_scans)
    scan = _SCANS[cfg.sampler_kind]
    draws = np.empty((cfg.n_keep,) + state.coefs.B.shape)
    n_windows = cfg.n_burn // cfg.tune_window

    threads = cfg.threads or os.cpu_count() or 1
    executor = None
    if threads > 1 and cfg.sampler_kind is not SamplerKind.NAIVE_MH:
        executor = ThreadPoolExecutor(max_workers=threads)
    kwargs = {"executor": executor} if executor is not None else {}

    try:
        t0 = time.perf_counter()
        for t in range(cfg.n_iter):
            state.scan_index = t
            state.tuning = t < cfg.n_burn
            scan(state, data, prior, cfg, streams, **kwargs)
            B = state.coefs.B
            if not np.all(np.isfinite(B)):
                raise SamplerError("non-finite coefficient draw", scan=t)
            if state.tuning:
                if cfg.tunes and (t + 1) % cfg.tune_window == 0 and (t + 1) // cfg.tune_window <= n_windows:
                    state.sigma = autotune(state.accept_counts, state.sigma, cfg)
                    state.accept_counts[:] = 0
            else:
                draws[t - cfg.n_burn] = B
        elapsed = time.perf_counter() - t0
    finally:
        if executor is not None:
            executor.shutdown()

    rate = state.accept_total / cfg.n_keep
    if cfg.reference_constrained:
        rate = rate.astype(np.float64)
        rate[:, -1] = np.nan
    return ChainOutput(
        draws=draws,
        elapsed_seconds=elapsed,
        seed=cfg.seed,
        final_sigma=state.sigma.copy(),
        post_burn_accept_rate=rate,
        sampler_kind=cfg.sampler_kind,
        reference_constrained=cfg.reference_constrained,
        nonfinite_rejections=state.nonfinite_rejections,
        max_shrink_steps=state.max_shrink_steps,
        config=cfg,
    )
