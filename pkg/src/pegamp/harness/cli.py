"""Command-line entry point: ``pegamp <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..gamp import DivergenceError, SensingOperator
from ..state_evolution import se_run, write_trajectory_csv
from .config import ConfigError, dump_defaults, load_config
from .image import load_image, run_image_recovery
from .problems import Problem
from .sweeps import VARIANTS, run_ptc_sweep, run_snr_sweep, solve


def read_matrix(path) -> np.ndarray:
    """Plain-text matrix: first line ``M N``, then M*N row-major values."""
    try:
        with open(path) as fh:
            header = fh.readline().split()
            body = fh.read().split()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if len(header) != 2:
        raise ConfigError(f"{path}: first line must be 'M N'")
    try:
        M, N = int(header[0]), int(header[1])
        values = np.array([float(v) for v in body])
    except ValueError:
        raise ConfigError(f"{path}: non-numeric entry") from None
    if M < 1 or N < 1 or values.size != M * N:
        raise ConfigError(f"{path}: expected {M}x{N} values, found {values.size}")
    return values.reshape(M, N)


def write_matrix(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for row in a:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _cmd_recover(args, cfg) -> int:
    A = read_matrix(args.matrix)
    y = read_matrix(args.measurements).ravel()
    if y.size != A.shape[0]:
        raise ConfigError("measurement length does not match the matrix row count")
    variant = (args.variant or ["pe_bgm"])[0]
    if variant == "oracle":
        raise ConfigError("recover has no ground truth; choose a pe_* variant")
    A_op = SensingOperator(A)
    problem = Problem(A_op, np.zeros(A.shape[1]), y, np.zeros(A.shape[0]))
    try:
        result = solve(variant, problem, None, cfg.solver)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "x_hat.txt", result.x_hat.reshape(-1, 1))
    summary = {
        "variant": variant,
        "iterations_used": result.iterations_used,
        "converged": result.converged,
        "input_params": result.final_params_input.to_dict(),
        "output_params": result.final_params_output.to_dict(),
    }
    (out / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{variant}: {result.iterations_used} iterations, converged={result.converged}")
    return 0


def _experiment(args, cfg):
    exp = cfg.experiment
    if args.variant:
        exp = replace(exp, variants=tuple(args.variant))
    return exp


def _cmd_ptc(args, cfg) -> int:
    result = run_ptc_sweep(_experiment(args, cfg), cfg.solver)
    path = result.write(args.out)
    print(f"wrote {path}")
    return 0


def _cmd_snr(args, cfg) -> int:
    result = run_snr_sweep(_experiment(args, cfg), cfg.solver)
    path = result.write(args.out)
    print(f"wrote {path}")
    return 0


def _cmd_image(args, cfg) -> int:
    exp = cfg.experiment
    variants = tuple(args.variant) if args.variant else ("pe_bgm", "pe_lasso")
    img = load_image(args.image or cfg.image_path)
    result = run_image_recovery(img, exp.sigma_grid, exp.image_snr_db, variants,
                                cfg.solver, exp.seed)
    path = result.write(args.out)
    print(f"wrote {path}")
    return 0


def _cmd_se(args, cfg) -> int:
    traj = se_run(cfg.se)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    write_trajectory_csv(traj, path)
    print(f"wrote {path} ({len(traj) - 1} steps, final mse {traj[-1].mse:.3e})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pegamp", description=__doc__)
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the default config as TOML and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, variants=True):
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        if variants:
            p.add_argument("--variant", action="append", choices=VARIANTS,
                           help="solver variant (repeat for several)")

    p = sub.add_parser("recover", help="recover one signal from matrix/measurement files")
    common(p)
    p.add_argument("--matrix", required=True, help="matrix file ('M N' header, row-major)")
    p.add_argument("--measurements", required=True, help="measurement file ('M 1' header)")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("ptc", help="phase-transition sweep over (sigma, rho)")
    common(p)
    p.set_defaults(func=_cmd_ptc)

    p = sub.add_parser("snr-sweep", help="reconstruction SNR versus M")
    common(p)
    p.set_defaults(func=_cmd_snr)

    p = sub.add_parser("image", help="compressive imaging PSNR versus sigma")
    common(p)
    p.add_argument("--image", help="square grayscale image (default: bundled 64x64)")
    p.set_defaults(func=_cmd_image)

    p = sub.add_parser("se-predict", help="state-evolution MSE trajectory")
    common(p, variants=False)
    p.set_defaults(func=_cmd_se)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(dump_defaults())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
