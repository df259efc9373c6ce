"""Simulation studies: synthetic data, a timing/ESS grid, and interval coverage."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import DEFAULT_LEVELS, coverage, interval_report, summarize
from .errors import InvalidArgumentError
from .model import CoefMatrix, Dataset, Prior
from .samplers import SamplerConfig, SamplerKind, run_chain

log = logging.getLogger(__name__)

ALL_SAMPLERS = (SamplerKind.DA_MH, SamplerKind.DA_ESS, SamplerKind.NAIVE_MH)


@dataclass(frozen=True)
class DgpConfig:
    N: int = 1000
    P: int = 15
    C: int = 5
    n_i: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.P < 0 or self.n_i < 1 or self.seed < 0:
            raise InvalidArgumentError("need N >= 1, P >= 0, n_i >= 1, seed >= 0")
        if self.C < 2:
            raise InvalidArgumentError("need C >= 2")


# profile -> (dgp defaults, C grid, replicates)
PROFILES = {
    "full": (DgpConfig(N=1000, P=15), (5, 10, 15, 20), 10),
    "desk": (DgpConfig(N=500, P=15), (3, 5, 8), 3),
    "smoke": (DgpConfig(N=100, P=3), (2, 3), 1),
}


def generate_data(cfg: DgpConfig) -> tuple[Dataset, CoefMatrix]:
    """Standard normal predictors and coefficients, multinomial responses.

    The returned truth is unconstrained; ``truth.to_reference()`` gives the
    equivalent coefficients with the last category as reference.
    """
    rng = np.random.default_rng(cfg.seed)
    Z = rng.standard_normal((cfg.N, cfg.P))
    B = rng.standard_normal((cfg.P + 1, cfg.C))
    X = np.column_stack([np.ones(cfg.N), Z])
    eta = X @ B
    eta -= eta.max(axis=1, keepdims=True)
    probs = np.exp(eta)
    probs /= probs.sum(axis=1, keepdims=True)
    Y = rng.multinomial(cfg.n_i, probs)
    return Dataset(X, Y, np.full(cfg.N, cfg.n_i)), CoefMatrix(B)


def default_prior(dim: int) -> Prior:
    """Normal(0, I), the distribution the coefficients are generated from."""
    return Prior.isotropic(dim, 1.0)


@dataclass
class BenchmarkResult:
    cells: list = field(default_factory=list)
    replicates: int = 0

    COLUMNS = ("sampler", "C", "replicate", "seconds", "median_ess", "esr")

    def aggregate(self) -> list[dict]:
        """Median of each metric across successful replicates per (sampler, C)."""
        groups: dict[tuple, list] = {}
        for c in self.cells:
            groups.setdefault((c["sampler"], c["C"]), []).append(c)
        out = []
        for (s, C), rows in groups.items():
            ok = [r for r in rows if r["status"] == "ok"]
            agg = {"sampler": s, "C": C, "n_ok": len(ok)}
            for k in ("seconds", "median_ess", "esr"):
                agg[k] = float(np.median([r[k] for r in ok])) if ok else float("nan")
            out.append(agg)
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS + ("status",))
            for c in self.cells:
                w.writerow([c[k] for k in self.COLUMNS] + [c["status"]])

    def write_plot_csv(self, path) -> None:
        """Long format for the run time, ESS and ESR panels: panel, sampler, C, value."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["panel", "sampler", "C", "value"])
            for panel in ("seconds", "median_ess", "esr"):
                for a in self.aggregate():
                    w.writerow([panel, a["sampler"], a["C"], a[panel]])

    def to_dict(self) -> dict:
        return {"replicates": self.replicates, "cells": self.cells, "aggregate": self.aggregate()}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, allow_nan=True))


def _run_cell(sampler, C, rep, base_cfg, chain_cfg, prior) -> dict:
    dgp = replace(base_cfg, C=C, seed=base_cfg.seed + rep)
    data, _ = generate_data(dgp)
    pr = prior if prior is not None else default_prior(data.P + 1)
    cfg = replace(chain_cfg, sampler_kind=sampler, seed=chain_cfg.seed + rep)
    cell = {"sampler": cfg.sampler_kind.value, "C": C, "replicate": rep}
    try:
        out = run_chain(data, pr, cfg)
        s = summarize(out)
        cell.update(
            seconds=out.elapsed_seconds,
            median_ess=s.ess_report.median_ess,
            esr=s.ess_report.esr,
            status="ok",
        )
    except Exception as exc:  # one failed cell must not stop the grid
        log.warning("cell %s C=%d rep=%d failed: %s", cfg.sampler_kind.value, C, rep, exc)
        cell.update(seconds=float("nan"), median_ess=float("nan"), esr=float("nan"), status=f"error: {exc}")
    return cell


def run_benchmark(
    samplers,
    C_grid,
    replicates: int,
    base_cfg: DgpConfig,
    chain_cfg: SamplerConfig,
    prior: Prior | None = None,
    serial_timing: bool = True,
    jobs: int = 1,
) -> BenchmarkResult:
    """Time each sampler on fresh data for every (C, replicate) cell.

    Timing covers sampling only.  Cells can run in ``jobs`` worker processes,
    but only with ``serial_timing=False`` because concurrent cells distort
    wall-clock measurements.
    """
    if replicates < 1:
        raise InvalidArgumentError("replicates must be positive")
    kinds = [SamplerKind.parse(s) for s in samplers]
    tasks = [(k, int(C), r) for C in C_grid for r in range(replicates) for k in kinds]
    result = BenchmarkResult(replicates=replicates)
    if jobs > 1 and not serial_timing:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_run_cell, k, C, r, base_cfg, chain_cfg, prior) for k, C, r in tasks]
            result.cells = [f.result() for f in futs]
    else:
        result.cells = [_run_cell(k, C, r, base_cfg, chain_cfg, prior) for k, C, r in tasks]
    return result


@dataclass
class CoverageResult:
    table: dict
    truth: CoefMatrix
    n_params: int
    levels: tuple
    seconds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_params": self.n_params,
            "levels": list(self.levels),
            "coverage": {s: {f"{k:g}": v for k, v in row.items()} for s, row in self.table.items()},
            "seconds": self.seconds,
            "truth": self.truth.B.tolist(),
        }


def run_coverage_experiment(
    base_cfg: DgpConfig = DgpConfig(N=1000, P=10, C=5),
    samplers=(SamplerKind.DA_MH, SamplerKind.DA_ESS),
    levels=DEFAULT_LEVELS,
    chain_cfg: SamplerConfig | None = None,
    prior: Prior | None = None,
) -> CoverageResult:
    """Fit each sampler with the last category as reference and score its intervals.

    The generated truth is shifted to the reference scale before scoring; the
    ``(P+1)(C-1)`` free coefficients are the estimands.
    """
    chain_cfg = chain_cfg or SamplerConfig()
    data, truth = generate_data(base_cfg)
    ref_truth = truth.to_reference()
    pr = prior if prior is not None else Prior.isotropic(data.P + 1, 4.0)
    table, seconds = {}, {}
    for s in samplers:
        cfg = replace(chain_cfg, sampler_kind=s, reference_constrained=True)
        out = run_chain(data, pr, cfg)
        rep = interval_report(out.draws, out.free_mask, levels)
        table[cfg.sampler_kind.value] = coverage(rep, ref_truth)
        seconds[cfg.sampler_kind.value] = out.elapsed_seconds
    n_params = (data.P + 1) * (data.C - 1)
    return CoverageResult(table, ref_truth, n_params, tuple(levels), seconds)


def dgp_to_dict(cfg: DgpConfig) -> dict:
    return asdict(cfg)
