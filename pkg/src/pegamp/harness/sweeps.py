"""Experiment sweeps: phase-transition grids, SNR-versus-M curves and image
recovery.

Every trial draws its problem from a seed derived from the base seed, the
cell coordinates and the trial index, never from the variant or the
position of the cell in the grid.  All variants in a cell therefore see the
same problems, and editing the grid does not change the other cells.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..channels import AwgnParams, BemParams, BgmParams
from ..gamp import (
    DivergenceError,
    SolverOptions,
    default_input_params,
    default_output_params,
    run_oracle_gamp,
    run_pe_gamp,
    run_pe_lasso,
)
from .problems import Problem, ProblemSpec, generate_problem, snr, success

VARIANTS = ("pe_bgm", "pe_bem", "pe_lasso", "oracle")
PTC_COLUMNS = ("sigma", "rho", "variant", "success_rate", "trials", "mean_iters")
SNR_COLUMNS = ("M", "variant", "mean_snr_db", "std_snr_db", "trials")
IMAGE_COLUMNS = ("sigma", "variant", "psnr_db", "iterations")
# floor for the oracle's noise variance on noiseless problems
ORACLE_NOISE_FLOOR = 1e-10


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 200
    sigma_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
    rho_grid: tuple = (0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95)
    trials: int = 10
    signal_family: str = "BG"
    noise_scale: float = 0.0
    variants: tuple = ("pe_bgm", "oracle")
    seed: int = 0
    # SNR sweeps fix the number of nonzeros and vary M
    S: int = 100
    m_grid: tuple = (150, 200, 300)
    # image recovery
    image_snr_db: float = 30.0
    workers: int = 1

    def __post_init__(self):
        for name in ("sigma_grid", "rho_grid", "m_grid", "variants"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        for name in ("sigma_grid", "rho_grid"):
            grid = getattr(self, name)
            if not grid or any(not 0 < v <= 1 for v in grid):
                raise ValueError(f"{name} values must lie in (0, 1]")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ValueError("m_grid must be strictly increasing")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown or not self.variants:
            raise ValueError(f"unknown variant(s) {sorted(unknown)}; choose from {VARIANTS}")
        if self.signal_family not in ("BG", "BE"):
            raise ValueError("signal_family must be BG or BE")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass
class SweepResult:
    kind: str
    columns: tuple
    records: list
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def write(self, out_dir, stem: Optional[str] = None) -> Path:
        """Write ``<stem>.csv`` and the ``<stem>.json`` sidecar; returns the CSV path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.kind
        csv_path = out / f"{stem}.csv"
        write_csv(csv_path, self.columns, self.records)
        sidecar = {"kind": self.kind, "config": self.config, "seeds": self.seeds}
        (out / f"{stem}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return csv_path


def _fmt(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_csv(path, columns, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec[c]) for c in columns])


def read_csv(path) -> list:
    """Parse a sweep CSV back into records with numeric fields restored."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        rec = {}
        for key, text in row.items():
            if key == "variant":
                rec[key] = text
            elif key in ("trials", "M"):
                rec[key] = int(text)
            else:
                rec[key] = float(text)
        out.append(rec)
    return out


# --- seeding -------------------------------------------------------------------


def _coord(value: float) -> int:
    # grid coordinates enter the seed as integers in millionths
    return int(round(value * 1_000_000))


def trial_seed(base: int, cell: tuple, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), *(_coord(c) for c in cell), int(trial)])


# --- solving one problem ---------------------------------------------------------


def oracle_params(spec: ProblemSpec):
    lam = spec.S / spec.N
    if spec.family == "BG":
        prior = BgmParams(lam, [1.0], [0.0], [1.0])
    else:
        prior = BemParams(lam, [1.0], [1.0])
    return prior, AwgnParams(max(spec.noise_scale**2, ORACLE_NOISE_FLOOR))


def solve(variant: str, problem: Problem, spec: Optional[ProblemSpec], opts: SolverOptions):
    """Run one solver variant; ``spec`` is needed only by the oracle."""
    A, y = problem.A, problem.y
    if variant == "pe_bgm":
        prior = default_input_params("bgm", A, y, opts.n_components)
        return run_pe_gamp(A, y, prior, default_output_params(y), opts)
    if variant == "pe_bem":
        prior = default_input_params("bem", A, y, opts.n_components)
        return run_pe_gamp(A, y, prior, default_output_params(y), opts)
    if variant == "pe_lasso":
        return run_pe_lasso(A, y, opts)
    if variant == "oracle":
        if spec is None:
            raise ValueError("the oracle variant needs the true problem parameters")
        prior, noise = oracle_params(spec)
        return run_oracle_gamp(A, y, prior, noise, opts)
    raise ValueError(f"unknown variant {variant!r}")


def _run_trial(args):
    """Worker: solve one problem with every variant; returns per-variant outcomes."""
    spec, seed, variants, opts = args
    problem = generate_problem(spec, seed)
    out = {}
    for variant in variants:
        start = time.perf_counter()
        try:
            result = solve(variant, problem, spec, opts)
            x_hat, iters = result.x_hat, result.iterations_used
            diverged = False
        except DivergenceError as exc:
            x_hat, iters, diverged = None, exc.iteration, True
        elapsed = time.perf_counter() - start
        if diverged:
            ok, score = False, 0.0
        else:
            ok, score = success(problem.x, x_hat), snr(problem.x, x_hat)
        out[variant] = {"success": ok, "snr": score, "iters": iters,
                        "runtime": elapsed, "diverged": diverged}
    return out


def _map(fn, jobs, workers: int):
    if workers == 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _config_dict(cfg: ExperimentConfig, opts: SolverOptions) -> dict:
    solver = asdict(opts)
    solver.pop("boxes")
    solver.pop("line_search")
    return {"experiment": asdict(cfg), "solver": solver}


def run_ptc_sweep(cfg: ExperimentConfig, opts: SolverOptions = SolverOptions()) -> SweepResult:
    """Success rate of every variant on every (sigma, rho) cell."""
    cells, jobs, seeds = [], [], {}
    for sigma in cfg.sigma_grid:
        for rho in cfg.rho_grid:
            spec = ProblemSpec.from_ratios(cfg.N, sigma, rho, cfg.signal_family, cfg.noise_scale)
            cells.append((sigma, rho))
            for trial in range(cfg.trials):
                ss = trial_seed(cfg.seed, (sigma, rho), trial)
                jobs.append((spec, ss, cfg.variants, opts))
            seeds[f"{sigma},{rho}"] = [cfg.seed, _coord(sigma), _coord(rho)]
    outcomes = _map(_run_trial, jobs, cfg.workers)

    records = []
    for k, (sigma, rho) in enumerate(cells):
        block = outcomes[k * cfg.trials : (k + 1) * cfg.trials]
        for variant in cfg.variants:
            runs = [o[variant] for o in block]
            records.append({
                "sigma": sigma, "rho": rho, "variant": variant,
                "success_rate": sum(r["success"] for r in runs) / len(runs),
                "trials": len(runs),
                "mean_iters": float(np.mean([r["iters"] for r in runs])),
                "mean_runtime": float(np.mean([r["runtime"] for r in runs])),
                "divergences": sum(r["diverged"] for r in runs),
            })
    return SweepResult("ptc", PTC_COLUMNS, records, _config_dict(cfg, opts), seeds)


def run_snr_sweep(cfg: ExperimentConfig, opts: SolverOptions = SolverOptions()) -> SweepResult:
    """Mean reconstruction SNR of every variant as M grows with N and S fixed."""
    jobs, seeds = [], {}
    for M in cfg.m_grid:
        spec = ProblemSpec(cfg.N, M, cfg.S, cfg.signal_family, cfg.noise_scale)
        for trial in range(cfg.trials):
            # M and S enter the seed as integers, in the same slots the grid uses
            jobs.append((spec, np.random.SeedSequence([cfg.seed, M, cfg.S, trial]),
                         cfg.variants, opts))
        seeds[str(M)] = [cfg.seed, M, cfg.S]
    outcomes = _map(_run_trial, jobs, cfg.workers)

    records = []
    for k, M in enumerate(cfg.m_grid):
        block = outcomes[k * cfg.trials : (k + 1) * cfg.trials]
        for variant in cfg.variants:
            runs = [o[variant] for o in block]
            vals = np.array([r["snr"] for r in runs])
            records.append({
                "M": M, "variant": variant,
                "mean_snr_db": float(vals.mean()), "std_snr_db": float(vals.std()),
                "trials": len(runs),
                "mean_runtime": float(np.mean([r["runtime"] for r in runs])),
                "divergences": sum(r["diverged"] for r in runs),
            })
    return SweepResult("snr", SNR_COLUMNS, records, _config_dict(cfg, opts), seeds)
