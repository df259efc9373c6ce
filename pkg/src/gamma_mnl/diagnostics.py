"""Chain summaries: effective sample size, sampling rate, intervals, coverage."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChainWarning, InvalidArgumentError
from .model import CoefMatrix
from .samplers import ChainOutput

DEFAULT_LEVELS = (0.99, 0.95, 0.90, 0.75, 0.50)


def autocorrelation(x) -> np.ndarray:
    """Empirical autocorrelations at lags ``0..T-1`` (biased normalization)."""
    x = np.asarray(x, dtype=np.float64)
    T = x.size
    xc = x - x.mean()
    n = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(xc, n=n)
    acov = np.fft.irfft(f * np.conj(f), n=n)[:T] / T
    return acov / acov[0]


def _ess_flag(chain) -> tuple[float, bool]:
    x = np.asarray(chain, dtype=np.float64).ravel()
    T = x.size
    if T < 10:
        raise InvalidArgumentError("ESS needs at least 10 draws")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("chain contains non-finite values")
    scale = max(np.abs(x).max(), 1.0)
    if np.ptp(x) <= 1e-14 * scale:
        return float(T), True
    rho = autocorrelation(x)
    m = T // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    # initial positive sequence, then made monotone
    nonpos = np.flatnonzero(pairs <= 0)
    if nonpos.size:
        pairs = pairs[: nonpos[0]]
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    if tau <= 0:
        return float(T), False
    return float(min(T / tau, T)), False


def ess(chain) -> float:
    """Effective sample size by Geyer's initial monotone sequence estimator.

    The result lies in ``(0, T]``.  A constant chain returns ``T`` and emits a
    :class:`DegenerateChainWarning`.
    """
    value, degenerate = _ess_flag(chain)
    if degenerate:
        warnings.warn("chain has zero variance; ESS set to chain length", DegenerateChainWarning, stacklevel=2)
    return value


def esr(ess_value: float, elapsed_seconds: float) -> float:
    """Effective samples per second of sampling."""
    if not elapsed_seconds > 0:
        raise InvalidArgumentError("elapsed_seconds must be positive")
    return float(ess_value) / float(elapsed_seconds)


def credible_interval(draws, level: float) -> tuple[float, float]:
    """Equal-tailed interval from linearly interpolated empirical quantiles."""
    if not 0 < level < 1:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    x = np.asarray(draws, dtype=np.float64).ravel()
    if x.size < 100:
        raise InvalidArgumentError("credible intervals need at least 100 draws")
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [a, 1.0 - a])
    return float(lo), float(hi)


@dataclass
class EssReport:
    ess: np.ndarray
    median_ess: float
    elapsed_seconds: float
    esr: float
    degenerate: np.ndarray

    def to_dict(self) -> dict:
        return {
            "ess": _nan_to_none(self.ess),
            "median_ess": self.median_ess,
            "elapsed_seconds": self.elapsed_seconds,
            "esr": self.esr,
            "degenerate": self.degenerate.tolist(),
        }


@dataclass
class IntervalReport:
    """Intervals indexed ``[level, p, j]``; ``free`` marks estimated coefficients."""

    levels: tuple
    lower: np.ndarray
    upper: np.ndarray
    free: np.ndarray
    truth: CoefMatrix | None = None
    coverage: dict | None = None

    @property
    def reference_constrained(self) -> bool:
        return not bool(self.free[:, -1].any())

    def to_dict(self) -> dict:
        d = {
            "levels": list(self.levels),
            "lower": _nan_to_none(self.lower),
            "upper": _nan_to_none(self.upper),
            "n_estimated": int(self.free.sum()),
        }
        if self.truth is not None:
            d["truth"] = self.truth.B.tolist()
        if self.coverage is not None:
            d["coverage"] = {f"{k:g}": v for k, v in self.coverage.items()}
        return d


def interval_report(draws: np.ndarray, free: np.ndarray, levels=DEFAULT_LEVELS) -> IntervalReport:
    levels = tuple(float(v) for v in levels)
    for v in levels:
        if not 0 < v < 1:
            raise InvalidArgumentError(f"level must lie in (0, 1), got {v}")
    if draws.shape[0] < 100:
        raise InvalidArgumentError("credible intervals need at least 100 draws")
    tails = np.array([(1.0 - v) / 2.0 for v in levels])
    q = np.quantile(draws, np.concatenate([tails, 1.0 - tails]), axis=0)
    L = len(levels)
    lower, upper = q[:L], q[L:]
    lower[:, ~free] = np.nan
    upper[:, ~free] = np.nan
    return IntervalReport(levels, lower, upper, free)


def coverage(report: IntervalReport, truth: CoefMatrix) -> dict:
    """Fraction of estimated coefficients whose true value lies in the closed interval.

    With a reference-constrained report the truth is first shifted to the
    reference scale (``beta_j - beta_C``), which leaves the model unchanged.
    """
    if truth.B.shape != report.free.shape:
        raise InvalidArgumentError(f"truth is {truth.B.shape}, draws are {report.free.shape}")
    B = truth.B
    if report.reference_constrained:
        B = B - B[:, -1:]
    free = report.free
    out = {}
    for k, level in enumerate(report.levels):
        inside = (report.lower[k] <= B) & (B <= report.upper[k])
        out[level] = float(inside[free].mean())
    report.truth = truth
    report.coverage = out
    return out


@dataclass
class Summary:
    mean: np.ndarray
    sd: np.ndarray
    ess_report: EssReport
    intervals: IntervalReport
    sampler: str = ""

    def to_dict(self) -> dict:
        return {
            "sampler": self.sampler,
            "mean": _nan_to_none(self.mean),
            "sd": _nan_to_none(self.sd),
            "ess": self.ess_report.to_dict(),
            "intervals": self.intervals.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_text(self) -> str:
        return format_summary(self)


def _free_mask(draws: np.ndarray, reference_constrained: bool) -> np.ndarray:
    free = np.ones(draws.shape[1:], dtype=bool)
    if reference_constrained:
        free[:, -1] = False
    return free


def summarize_draws(
    draws: np.ndarray,
    elapsed_seconds: float,
    reference_constrained: bool = False,
    levels=DEFAULT_LEVELS,
    truth: CoefMatrix | None = None,
    sampler: str = "",
) -> Summary:
    """Summaries of a ``(T, P+1, C)`` draw array."""
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim != 3:
        raise InvalidArgumentError("draws must have shape (T, P+1, C)")
    free = _free_mask(draws, reference_constrained)
    K, C = free.shape
    ess_m = np.full((K, C), np.nan)
    degenerate = np.zeros((K, C), dtype=bool)
    for p in range(K):
        for j in range(C):
            if free[p, j]:
                ess_m[p, j], degenerate[p, j] = _ess_flag(draws[:, p, j])
    med = float(np.median(ess_m[free]))
    rate = esr(med, elapsed_seconds) if elapsed_seconds > 0 else float("nan")
    mean = draws.mean(axis=0)
    sd = draws.std(axis=0, ddof=1)
    mean[~free] = np.nan
    sd[~free] = np.nan
    ivals = interval_report(draws, free, levels)
    if truth is not None:
        coverage(ivals, truth)
    return Summary(mean, sd, EssReport(ess_m, med, float(elapsed_seconds), rate, degenerate), ivals, sampler)


def summarize(output: ChainOutput, levels=DEFAULT_LEVELS, truth: CoefMatrix | None = None) -> Summary:
    """Per-coefficient mean, SD, ESS and intervals of a chain."""
    return summarize_draws(
        output.draws,
        output.elapsed_seconds,
        output.reference_constrained,
        levels,
        truth,
        sampler=output.sampler_kind.value,
    )


def mcse(draws) -> float:
    """Monte Carlo standard error of the mean, ``sd / sqrt(ESS)``."""
    x = np.asarray(draws, dtype=np.float64)
    value, _ = _ess_flag(x)
    return float(x.std(ddof=1) / np.sqrt(value))


def format_summary(summary: Summary) -> str:
    free = summary.intervals.free
    K, C = free.shape
    lv = summary.intervals.levels
    i95 = lv.index(0.95) if 0.95 in lv else 0
    head = f"{'coef':>10} {'mean':>10} {'sd':>9} {'ess':>8} {'lo':>10} {'hi':>10}"
    lines = [f"sampler: {summary.sampler or '-'}", f"interval level: {lv[i95]:g}", head]
    for j in range(C):
        for p in range(K):
            if not free[p, j]:
                continue
            lines.append(
                f"{f'beta_{j + 1}_{p}':>10} {summary.mean[p, j]:10.4f} {summary.sd[p, j]:9.4f} "
                f"{summary.ess_report.ess[p, j]:8.1f} {summary.intervals.lower[i95, p, j]:10.4f} "
                f"{summary.intervals.upper[i95, p, j]:10.4f}"
            )
    er = summary.ess_report
    if er.elapsed_seconds > 0:
        lines.append(f"median ESS {er.median_ess:.1f}  seconds {er.elapsed_seconds:.3f}  ESR {er.esr:.2f}")
    else:
        lines.append(f"median ESS {er.median_ess:.1f}")
    if er.degenerate.any():
        lines.append(f"degenerate chains: {int(er.degenerate.sum())}")
    if summary.intervals.coverage is not None:
        lines.append(format_coverage({summary.sampler or "sampler": summary.intervals.coverage}))
    return "\n".join(lines)


def format_coverage(table: dict) -> str:
    """Coverage table with one row per sampler and one column per level."""
    levels = sorted({lv for row in table.values() for lv in row}, reverse=True)
    width = max([len("Sampler:")] + [len(k) for k in table]) + 1
    out = ["Sampler:".ljust(width) + "".join(f"{lv:>8.3f}" for lv in levels)]
    for name, row in table.items():
        out.append(name.ljust(width) + "".join(f"{row.get(lv, float('nan')):>8.3f}" for lv in levels))
    return "\n".join(out)


def _nan_to_none(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return None if np.isnan(a) else float(a)
    return [_nan_to_none(v) for v in a]
