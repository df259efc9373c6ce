"""Command line: ``gamma-mnl {fit,simulate,benchmark,report}``.

Exit codes: 0 success, 1 usage, 2 input error, 3 runtime/sampler error.
Settings resolve as flags > ``--config`` file > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import DEFAULT_LEVELS, format_coverage, summarize, summarize_draws
from .errors import (
    DataLoadError,
    InvalidArgumentError,
    NumericalRangeError,
    SamplerError,
    UnsupportedConfigurationError,
)
from .model import CoefMatrix, Prior, load_dataset, save_dataset
from .samplers import SamplerConfig, run_chain
from .simharness import ALL_SAMPLERS, PROFILES, DgpConfig, generate_data, run_benchmark

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("gamma_mnl")

# flag dest -> default; the config file uses the same keys (dashes allowed)
DEFAULTS = {
    "sampler": "da-mh",
    "prior": "normal",
    "prior_mean": "0",
    "prior_cov": "1",
    "iters": 3000,
    "burn": 2000,
    "tune_window": 100,
    "sigma_init": 1.0,
    "seed": 0,
    "threads": 1,
    "reference_constrained": False,
    "format": "csv",
    "N": None,
    "P": None,
    "C": None,
    "n_trials": 1,
    "profile": "desk",
    "C_grid": None,
    "replicates": None,
    "samplers": "da-mh,da-ess",
    "serial_timing": True,
    "jobs": 1,
    "levels": ",".join(f"{v:g}" for v in DEFAULT_LEVELS),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    seed: int
    sampler: dict | None = None
    dgp: dict | None = None
    prior: dict | None = None
    artifacts: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def read_config(path) -> dict:
    """Flat ``key = value`` file ('#' comments), or a flat JSON object."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip().strip('"').strip("'")
    out = {}
    for k, v in raw.items():
        key = k.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}: unknown setting {k!r}")
        out[key] = v
    return out


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) or key in ("N", "P", "C", "replicates"):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def resolve(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v
    try:
        return {k: _coerce(k, v) for k, v in settings.items()}
    except ValueError as exc:
        raise UsageError(f"bad setting: {exc}") from None


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def build_prior(s: dict, dim: int) -> Prior:
    if s["prior"] == "flat":
        return Prior.flat()
    if s["prior"] != "normal":
        raise UsageError(f"unknown prior {s['prior']!r}")
    mean = _floats(s["prior_mean"])
    mean = np.full(dim, mean[0]) if len(mean) == 1 else np.array(mean)
    spec = str(s["prior_cov"])
    if Path(spec).is_file():
        cov = np.loadtxt(spec, delimiter=",", ndmin=2)
    else:
        vals = _floats(spec)
        if len(vals) == 1:
            cov = vals[0] * np.eye(dim)
        elif len(vals) == dim:
            cov = np.diag(vals)
        elif len(vals) == dim * dim:
            cov = np.array(vals).reshape(dim, dim)
        else:
            raise UsageError("--prior-cov needs 1, P+1 or (P+1)^2 values, or a CSV file")
    if mean.size != dim:
        raise UsageError(f"--prior-mean needs 1 or {dim} values")
    return Prior.normal(mean, cov)


def build_sampler_config(s: dict) -> SamplerConfig:
    return SamplerConfig(
        n_iter=s["iters"],
        n_burn=s["burn"],
        tune_window=s["tune_window"],
        sigma_init=s["sigma_init"],
        sampler_kind=s["sampler"],
        seed=s["seed"],
        reference_constrained=s["reference_constrained"],
        threads=s["threads"],
    )


def draw_columns(K: int, C: int) -> list[str]:
    return [f"beta_{j + 1}_{p}" for j in range(C) for p in range(K)]


def write_draws(draws: np.ndarray, path, fmt: str = "csv") -> Path:
    T, K, C = draws.shape
    path = Path(path)
    if fmt == "npy":
        path = path.with_suffix(".npy")
        np.save(path, draws)
        return path
    flat = draws.transpose(0, 2, 1).reshape(T, C * K)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(draw_columns(K, C))
        for row in flat:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_draws(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        try:
            a = np.load(path)
        except (OSError, ValueError) as exc:
            raise DataLoadError(f"cannot read {path}: {exc}") from None
        if a.ndim != 3:
            raise DataLoadError("draws array must be 3-D")
        return a
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise DataLoadError(f"{path} has no draws")
    idx = []
    for name in rows[0]:
        parts = name.strip().split("_")
        if len(parts) != 3 or parts[0] != "beta" or not (parts[1].isdigit() and parts[2].isdigit()):
            raise DataLoadError(f"bad draws column {name!r} (expected beta_j_p)", row=1)
        idx.append((int(parts[1]) - 1, int(parts[2])))
    C = max(j for j, _ in idx) + 1
    K = max(p for _, p in idx) + 1
    if sorted(idx) != sorted((j, p) for j in range(C) for p in range(K)):
        raise DataLoadError("draws columns do not form a full (P+1) x C grid", row=1)
    out = np.empty((len(rows) - 1, K, C))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(idx):
            raise DataLoadError(f"expected {len(idx)} fields, got {len(row)}", row=r)
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise DataLoadError("non-numeric draw", row=r) from None
        if not all(np.isfinite(vals)):
            raise DataLoadError("non-finite draw", row=r)
        for (j, p), v in zip(idx, vals):
            out[r - 2, p, j] = v
    return out


def write_truth(B: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"beta_{j + 1}" for j in range(B.shape[1])])
        for row in B:
            w.writerow([repr(float(v)) for v in row])


def read_truth(path) -> np.ndarray:
    try:
        with Path(path).open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        return np.array([[float(v) for v in r] for r in rows[1:]])
    except (OSError, ValueError) as exc:
        raise DataLoadError(f"cannot read truth file {path}: {exc}") from None


# -- commands --------------------------------------------------------------


def cmd_fit(args) -> int:
    s = resolve(args)
    if not args.data:
        raise UsageError("fit needs --data")
    out_dir = Path(args.out or "fit_out")
    started = _now()
    data = load_dataset(args.data)
    prior = build_prior(s, data.P + 1)
    cfg = build_sampler_config(s)
    out = run_chain(data, prior, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    draws_path = write_draws(out.draws, out_dir / "draws.csv", s["format"])
    summary = summarize(out)
    (out_dir / "summary.json").write_text(
        json.dumps({"summary": summary.to_dict(), "chain": out.metadata()}, indent=2)
    )
    (out_dir / "summary.txt").write_text(summary.to_text() + "\n")
    manifest = RunManifest(
        command="fit",
        seed=cfg.seed,
        sampler=cfg.to_dict(),
        prior=prior.to_dict(),
        artifacts={
            "data": str(args.data),
            "draws": str(draws_path),
            "summary": str(out_dir / "summary.json"),
        },
        settings=s,
        started=started,
        finished=_now(),
    )
    manifest.write(out_dir / "manifest.json")
    print(summary.to_text())
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = resolve(args)
    base = PROFILES[s["profile"]][0]
    dgp = DgpConfig(
        N=s["N"] if s["N"] is not None else base.N,
        P=s["P"] if s["P"] is not None else base.P,
        C=s["C"] if s["C"] is not None else base.C,
        n_i=s["n_trials"],
        seed=s["seed"],
    )
    out_dir = Path(args.out or "sim_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    data, truth = generate_data(dgp)
    save_dataset(data, out_dir / "data.csv")
    write_truth(truth.B, out_dir / "truth.csv")
    write_truth(truth.to_reference().B, out_dir / "truth_reference.csv")
    RunManifest(
        command="simulate",
        seed=dgp.seed,
        dgp=asdict(dgp),
        artifacts={
            "data": str(out_dir / "data.csv"),
            "truth": str(out_dir / "truth.csv"),
            "truth_reference": str(out_dir / "truth_reference.csv"),
        },
        settings=s,
        started=started,
        finished=_now(),
    ).write(out_dir / "manifest.json")
    print(f"wrote {data.N} rows, P={data.P}, C={data.C} to {out_dir}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    s = resolve(args)
    if s["profile"] not in PROFILES:
        raise UsageError(f"unknown profile {s['profile']!r}")
    base, grid, reps = PROFILES[s["profile"]]
    base = replace(
        base,
        N=s["N"] if s["N"] is not None else base.N,
        P=s["P"] if s["P"] is not None else base.P,
        seed=s["seed"],
    )
    if s["C_grid"]:
        grid = tuple(int(c) for c in _floats(s["C_grid"]))
    if s["replicates"] is not None:
        reps = s["replicates"]
    samplers = [t.strip() for t in s["samplers"].split(",") if t.strip()]
    cfg = build_sampler_config(s)
    prior = build_prior(s, base.P + 1)
    out_dir = Path(args.out or "bench_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    res = run_benchmark(samplers, grid, reps, base, cfg, prior, serial_timing=s["serial_timing"], jobs=s["jobs"])
    res.write_csv(out_dir / "benchmark.csv")
    res.write_json(out_dir / "benchmark.json")
    res.write_plot_csv(out_dir / "benchmark_plot.csv")
    RunManifest(
        command="benchmark",
        seed=s["seed"],
        sampler=cfg.to_dict(),
        dgp=asdict(base),
        artifacts={
            "cells": str(out_dir / "benchmark.csv"),
            "summary": str(out_dir / "benchmark.json"),
            "plot": str(out_dir / "benchmark_plot.csv"),
        },
        settings=s,
        started=started,
        finished=_now(),
    ).write(out_dir / "manifest.json")
    for a in res.aggregate():
        print(f"{a['sampler']:>9} C={a['C']:<3} seconds={a['seconds']:.3f} "
              f"median_ess={a['median_ess']:.1f} esr={a['esr']:.2f}")
    return EXIT_OK


def cmd_report(args) -> int:
    s = resolve(args)
    draws = read_draws(args.draws)
    if draws.shape[0] < 100:
        raise DataLoadError("report needs at least 100 draws")
    constrained = s["reference_constrained"] or bool(np.all(draws[:, :, -1] == 0.0))
    truth = None
    if args.truth:
        B = read_truth(args.truth)
        if B.shape != draws.shape[1:]:
            raise DataLoadError(f"truth is {B.shape}, draws are {draws.shape[1:]}")
        truth = CoefMatrix(B)
    levels = tuple(_floats(s["levels"]))
    summary = summarize_draws(draws, 0.0, constrained, levels, truth, sampler=args.label or "")
    if args.json:
        print(summary.to_json(indent=2))
    else:
        print(summary.to_text())
        if truth is not None:
            n = int(summary.intervals.free.sum())
            print(f"coverage over {n} estimated parameters")
    return EXIT_OK


def _add_sampler_flags(p):
    p.add_argument("--sampler", choices=["da-mh", "da-ess", "naive-mh"], default=None)
    p.add_argument("--prior", choices=["flat", "normal"], default=None)
    p.add_argument("--prior-mean", dest="prior_mean", default=None,
                   help="scalar or comma list of P+1 values")
    p.add_argument("--prior-cov", dest="prior_cov", default=None,
                   help="variance scalar, P+1 diagonal values, a full matrix, or a CSV file")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burn", type=int, default=None)
    p.add_argument("--tune-window", dest="tune_window", type=int, default=None)
    p.add_argument("--sigma-init", dest="sigma_init", type=float, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker cap, 0 = auto")
    p.add_argument("--reference-constrained", dest="reference_constrained",
                   action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gamma-mnl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=None, help="flat key = value settings file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("fit", help="sample the posterior for a CSV dataset")
    common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--format", choices=["csv", "npy"], default=None)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic dataset and its truth")
    common(p)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--P", type=int, default=None)
    p.add_argument("--C", type=int, default=None)
    p.add_argument("--n-trials", dest="n_trials", type=int, default=None)
    p.add_argument("--profile", choices=sorted(PROFILES), default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="run time / ESS / ESR grid over C")
    common(p)
    p.add_argument("--profile", choices=sorted(PROFILES), default=None)
    p.add_argument("--C-grid", dest="C_grid", default=None, help="comma list, e.g. 5,10,15,20")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--samplers", default=None, help=f"comma list from {','.join(k.value for k in ALL_SAMPLERS)}")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--P", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel cells (requires --no-serial-timing)")
    p.add_argument("--serial-timing", dest="serial_timing", action="store_const", const=True, default=None)
    p.add_argument("--no-serial-timing", dest="serial_timing", action="store_const", const=False)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="summaries and coverage from a draws file")
    p.add_argument("--config", default=None)
    p.add_argument("--draws", required=True)
    p.add_argument("--truth", default=None, help="(P+1) x C CSV of true coefficients")
    p.add_argument("--levels", default=None)
    p.add_argument("--label", default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--reference-constrained", dest="reference_constrained",
                   action="store_const", const=True, default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gamma-mnl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataLoadError, InvalidArgumentError, OSError) as exc:
        print(f"gamma-mnl: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnsupportedConfigurationError, SamplerError, NumericalRangeError, RuntimeError) as exc:
        print(f"gamma-mnl: sampler error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
