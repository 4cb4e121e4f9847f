"""Flat TOML configuration.

One file holds experiment, solver and state-evolution keys side by side, all
at the top level.  Unknown keys are rejected so typos surface immediately.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from ..channels import AwgnParams, BgmParams
from ..gamp import PER_ITERATION_SEARCH, SolverOptions
from ..param_est import LineSearchConfig, ParameterBoxes
from ..state_evolution import SeConfig
from .sweeps import ExperimentConfig


class ConfigError(ValueError):
    pass


_BOX_KEYS = {
    "sparsity_box": "sparsity",
    "weight_logit_box": "weight_logit",
    "mean_box": "mean",
    "scale_box": "scale",
    "noise_box": "noise",
}
_LS_KEYS = {
    "ls_shrink": "shrink",
    "ls_step_up": "step_up",
    "ls_step_down": "step_down",
    "ls_max_outer_iters": "max_outer_iters",
    "ls_tol": "convergence_tol",
}
_SE_KEYS = {
    "se_beta", "se_sparsity", "se_noise_variance", "se_mc_samples", "se_max_iters",
    "se_tol", "se_estimate_params", "se_xi_squared",
}
_IMAGE_KEYS = {"image_path"}


def _names(cls) -> set:
    return {f.name for f in fields(cls)}


_EXPERIMENT_KEYS = _names(ExperimentConfig)
_SOLVER_KEYS = _names(SolverOptions) - {"boxes", "line_search"}
KNOWN_KEYS = (
    _EXPERIMENT_KEYS | _SOLVER_KEYS | set(_BOX_KEYS) | set(_LS_KEYS) | _SE_KEYS | _IMAGE_KEYS
)


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    solver: SolverOptions
    se: SeConfig
    image_path: str | None = None


def read_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    nested = [k for k, v in raw.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found table(s) {nested}")
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return raw


def _box(value, key):
    if value is None:
        return None
    if len(value) != 2 or not value[0] <= value[1]:
        raise ConfigError(f"{key} must be [lo, hi] with lo <= hi")
    return (float(value[0]), float(value[1]))


def build_config(raw: dict, seed_override=None) -> RunConfig:
    """Turn a flat key/value mapping into typed configs; raises ConfigError."""
    raw = dict(raw)
    if seed_override is not None:
        raw["seed"] = seed_override
    try:
        boxes = ParameterBoxes(**{
            attr: _box(raw[key], key) for key, attr in _BOX_KEYS.items() if key in raw
        })
        ls_args = {attr: raw[key] for key, attr in _LS_KEYS.items() if key in raw}
        solver_search = (
            LineSearchConfig(**{"max_outer_iters": PER_ITERATION_SEARCH.max_outer_iters,
                                **ls_args})
            if ls_args else None
        )
        line_search = LineSearchConfig(**ls_args) if ls_args else None
        solver = SolverOptions(
            boxes=boxes, line_search=solver_search,
            **{k: raw[k] for k in _SOLVER_KEYS if k in raw},
        )
        experiment = ExperimentConfig(**{k: raw[k] for k in _EXPERIMENT_KEYS if k in raw})
        sparsity = float(raw.get("se_sparsity", 0.1))
        se = SeConfig(
            beta=float(raw.get("se_beta", 2.0)),
            prior=BgmParams(sparsity, [1.0], [0.0], [1.0]),
            noise=AwgnParams(float(raw.get("se_noise_variance", 1e-4))),
            estimate_params=bool(raw.get("se_estimate_params", False)),
            mc_samples=int(raw.get("se_mc_samples", 100_000)),
            max_iters=int(raw.get("se_max_iters", 100)),
            tol=float(raw.get("se_tol", 1e-6)),
            seed=int(raw.get("seed", 0)),
            xi_squared=bool(raw.get("se_xi_squared", True)),
            boxes=boxes,
            line_search=line_search,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    image_path = raw.get("image_path")
    if "image_snr_db" in raw and isinstance(raw["image_snr_db"], str):
        raise ConfigError("image_snr_db must be a number (use inf for noiseless)")
    if math.isnan(experiment.image_snr_db) or experiment.image_snr_db <= 0:
        raise ConfigError("image_snr_db must be positive")
    return RunConfig(experiment, solver, se, image_path)


def load_config(path=None, seed_override=None) -> RunConfig:
    raw = read_config(path) if path is not None else {}
    return build_config(raw, seed_override)


def dump_defaults() -> str:
    """The default configuration as flat TOML text."""
    exp = ExperimentConfig()
    opts = SolverOptions()
    lines = []
    for f in fields(ExperimentConfig):
        lines.append(f"{f.name} = {_toml(getattr(exp, f.name))}")
    for name in sorted(_SOLVER_KEYS - {"seed"}):
        lines.append(f"{name} = {_toml(getattr(opts, name))}")
    return "\n".join(lines) + "\n"


def _toml(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml(v) for v in value) + "]"
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)

