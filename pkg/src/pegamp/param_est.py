"""MAP estimation of channel parameters.

Every GAMP iteration re-estimates each channel parameter by maximizing its
log evidence, the sum over samples of ``log int p(x | params) N(x; r_j, tau_r) dx``
(or the output-side analogue over ``(q_i, y_i)``), with every other parameter
frozen at its previous value.  The maximization is a sign-of-gradient line
search with geometric step shrinking.

Parameters are searched in unconstrained coordinates: mixture weights through
softmax logits, variances and rates through their logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels, _search
from .channels import AwgnParams, BemParams, BgmParams, InputParams, LaplaceParams


class Param(NamedTuple):
    """Selects one scalar parameter: ``kind`` in {sparsity, weight, mean,
    variance, rate, noise}; ``index`` picks the mixture component."""

    kind: str
    index: int = 0


class EvidenceGradient(NamedTuple):
    value: float
    gradient: float


@dataclass(frozen=True)
class LineSearchConfig:
    shrink: float = 0.5
    step_up: float = 0.05
    step_down: float = -0.05
    max_outer_iters: int = 20
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not (self.step_up > 0 and self.step_down < 0):
            raise ValueError("step_up must be positive and step_down negative")
        if self.max_outer_iters < 1 or not self.convergence_tol > 0:
            raise ValueError("max_outer_iters and convergence_tol must be positive")

    @classmethod
    def for_box(cls, lo: float, hi: float, **overrides) -> "LineSearchConfig":
        """Default config with steps and tolerance scaled to the box width."""
        width = hi - lo
        kwargs = dict(step_up=0.05 * width, step_down=-0.05 * width, convergence_tol=1e-6 * width)
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass(frozen=True)
class ParameterBoxes:
    """Feasibility boxes, in natural units (logit units for weights).

    ``mean=None`` derives a symmetric box from the data at each update.
    A box with ``lo == hi`` pins the parameter to that value.
    """

    sparsity: tuple = (1e-6, 1.0 - 1e-6)
    weight_logit: tuple = (-10.0, 10.0)
    mean: tuple | None = None
    scale: tuple = (1e-8, 1e8)
    noise: tuple = (1e-8, 1e8)


def _finite_or_raise(grad) -> None:
    if not np.all(np.isfinite(grad)):
        raise ValueError("degenerate evidence")


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


# --- evidence values and gradients ------------------------------------------

_BGM_OFFSETS = {"sparsity": None, "weight": 1, "mean": 2, "variance": 3}
_BEM_OFFSETS = {"sparsity": None, "weight": 1, "rate": 2}


def _grad_index(which: Param, n_components: int, offsets: dict) -> int:
    if which.kind not in offsets:
        raise ValueError(f"parameter {which.kind!r} not defined for this channel")
    block = offsets[which.kind]
    if block is None:
        return 0
    if not 0 <= which.index < n_components:
        raise ValueError("component index out of range")
    return 1 + (block - 1) * n_components + which.index


def evidence_and_grad_bgm(params: BgmParams, which: Param, r_vec, tau_r) -> EvidenceGradient:
    """Evidence of a BGm prior and its derivative in one parameter.

    The weight derivative is taken with respect to its softmax logit.
    """
    tau = float(tau_r)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    value, grad = _kernels.bgm_evidence(
        np.asarray(r_vec, dtype=np.float64), tau, params.sparsity,
        params.weights, params.means, params.variances,
    )
    _finite_or_raise(grad)
    return EvidenceGradient(value, grad[_grad_index(which, params.n_components, _BGM_OFFSETS)])


def evidence_and_grad_bem(params: BemParams, which: Param, r_vec, tau_r) -> EvidenceGradient:
    tau = float(tau_r)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    value, grad = _kernels.bem_evidence(
        np.asarray(r_vec, dtype=np.float64), tau, params.sparsity, params.weights, params.rates
    )
    _finite_or_raise(grad)
    return EvidenceGradient(value, grad[_grad_index(which, params.n_components, _BEM_OFFSETS)])


def evidence_and_grad_laplace(params: LaplaceParams, r_vec, tau_r) -> EvidenceGradient:
    tau = float(tau_r)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    value, grad = _kernels.laplace_evidence(np.asarray(r_vec, dtype=np.float64), tau, params.rate)
    _finite_or_raise(grad)
    return EvidenceGradient(value, grad)


def _awgn_value_grad(theta: float, q, y, tau_q: float):
    total = theta + tau_q
    resid2 = (np.asarray(y) - np.asarray(q)) ** 2
    value = -0.5 * resid2.size * math.log(total) - resid2.sum() / (2.0 * total)
    grad = resid2.sum() / (2.0 * total * total) - resid2.size / (2.0 * total)
    return value, grad


def evidence_and_grad_awgn(params: AwgnParams, q_vec, y_vec, tau_q) -> EvidenceGradient:
    """Sum over measurements of ``-log(theta + tau_q)/2 - (y - q)^2 / (2 (theta + tau_q))``."""
    q_vec = np.asarray(q_vec, dtype=np.float64)
    y_vec = np.asarray(y_vec, dtype=np.float64)
    if q_vec.shape != y_vec.shape:
        raise ValueError("q and y must have the same length")
    if not tau_q > 0:
        raise ValueError("nonpositive pseudo-variance")
    if not params.variance > 0:
        raise ValueError("out of feasibility box")
    return EvidenceGradient(*_awgn_value_grad(params.variance, q_vec, y_vec, float(tau_q)))


# --- line search --------------------------------------------------------------


def line_search_maximize(
    grad_fn: Callable[[float], EvidenceGradient],
    start: float,
    box: tuple,
    cfg: LineSearchConfig | None = None,
    trace: list | None = None,
) -> float:
    """Maximize a scalar objective by sign-of-gradient steps with shrinking.

    Each outer iteration steps in the direction of the gradient sign and
    halves (``cfg.shrink``) the step until the objective does not decrease;
    the shrunk step size persists into later iterations.  If no
    non-decreasing candidate is found before the step falls below the
    tolerance, the current point is kept.  Accepted points are appended to
    ``trace`` as ``(x, value)`` when given.
    """
    lo, hi = float(box[0]), float(box[1])
    if not lo < hi:
        raise ValueError("box must satisfy lo < hi")
    if cfg is None:
        cfg = LineSearchConfig.for_box(lo, hi)
    x = min(max(float(start), lo), hi)
    cur = grad_fn(x)
    if not (math.isfinite(cur.value) and math.isfinite(cur.gradient)):
        raise ValueError("invalid start")
    if trace is not None:
        trace.append((x, cur.value))
    up, down = cfg.step_up, cfg.step_down
    for _ in range(cfg.max_outer_iters):
        if cur.gradient > 0:
            step = up
        elif cur.gradient < 0:
            step = down
        else:
            break
        cand_x = min(max(x + step, lo), hi)
        cand = grad_fn(cand_x)
        while not cand.value >= cur.value:
            step *= cfg.shrink
            if abs(step) < cfg.convergence_tol:
                cand = None
                break
            cand_x = min(max(x + step, lo), hi)
            cand = grad_fn(cand_x)
        if cur.gradient > 0:
            up = step
        else:
            down = step
        if cand is None or not math.isfinite(cand.gradient):
            break
        moved = abs(cand_x - x)
        x, cur = cand_x, cand
        if trace is not None:
            trace.append((x, cur.value))
        if moved < cfg.convergence_tol:
            break
    return x


# --- per-parameter objectives in search coordinates --------------------------


def _search_box(which: Param, boxes: ParameterBoxes, r_vec) -> tuple:
    kind = which.kind
    if kind == "sparsity":
        return boxes.sparsity
    if kind == "weight":
        return boxes.weight_logit
    if kind == "mean":
        if boxes.mean is not None:
            return boxes.mean
        half = max(1.0, 2.0 * float(np.max(np.abs(r_vec))) if np.size(r_vec) else 1.0)
        return (-half, half)
    if kind in ("variance", "rate"):
        return (math.log(boxes.scale[0]), math.log(boxes.scale[1]))
    if kind == "noise":
        return (math.log(boxes.noise[0]), math.log(boxes.noise[1]))
    raise ValueError(f"unknown parameter kind {kind!r}")


def _relative_steps(cfg: LineSearchConfig | None) -> tuple:
    """(up, down, tol) as box-width fractions, plus shrink and outer cap."""
    if cfg is None:
        cfg = LineSearchConfig.for_box(0.0, 1.0)
    rel = np.array([cfg.step_up, cfg.step_down, cfg.convergence_tol])
    return rel, cfg.shrink, cfg.max_outer_iters


def input_parameter_list(params: InputParams) -> list:
    """Update order: sparsity, weights, means or rates, variances."""
    if isinstance(params, LaplaceParams):
        return [Param("rate")]
    n = params.n_components
    out = [Param("sparsity")]
    if n > 1:
        out += [Param("weight", c) for c in range(n)]
    if isinstance(params, BgmParams):
        out += [Param("mean", c) for c in range(n)]
        out += [Param("variance", c) for c in range(n)]
    else:
        out += [Param("rate", c) for c in range(n)]
    return out


def _mixture_boxes(params, boxes: ParameterBoxes, r_vec) -> np.ndarray:
    n = params.n_components
    out = np.zeros((1 + 3 * n, 2))
    out[0] = boxes.sparsity
    out[1 : 1 + n] = boxes.weight_logit
    if isinstance(params, BgmParams):
        out[1 + n : 1 + 2 * n] = _search_box(Param("mean"), boxes, r_vec)
        out[1 + 2 * n :] = _search_box(Param("variance"), boxes, r_vec)
    else:
        out[1 + n : 1 + 2 * n] = _search_box(Param("rate"), boxes, r_vec)
    return out


def update_input_parameters(
    params: InputParams,
    r_vec,
    tau_r: float,
    boxes: ParameterBoxes = ParameterBoxes(),
    cfg: LineSearchConfig | None = None,
) -> InputParams:
    """One line search per input parameter against the frozen snapshot ``params``.

    ``cfg``, when given, holds steps and tolerance as fractions of each
    parameter's box width.
    """
    r_vec = np.ascontiguousarray(r_vec, dtype=np.float64)
    tau = float(tau_r)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    rel, shrink, max_outer = _relative_steps(cfg)

    if isinstance(params, LaplaceParams):
        lo, hi = _search_box(Param("rate"), boxes, r_vec)
        if lo == hi:
            return LaplaceParams(boxes.scale[0])
        width = hi - lo
        empty = np.zeros(0)
        coord, ok = _search.line_search(
            _search.LAPLACE, 0, math.log(params.rate), lo, hi,
            rel[0] * width, rel[1] * width, shrink, rel[2] * width, max_outer,
            r_vec, tau, 0.0, empty, empty, empty, np.zeros((1, 0)), 0.0,
        )
        if not ok:
            raise ValueError("degenerate evidence")
        return LaplaceParams(math.exp(coord))

    is_bgm = isinstance(params, BgmParams)
    n = params.n_components
    first = params.means if is_bgm else params.rates
    second = params.variances if is_bgm else np.zeros(0)
    coords, ok = _search.update_mixture(
        r_vec, tau, params.sparsity, params.weights, first, second, is_bgm,
        _mixture_boxes(params, boxes, r_vec), rel, shrink, max_outer,
    )
    if not ok:
        raise ValueError("degenerate evidence")
    if n == 1:
        coords[1] = 0.0
    box = _mixture_boxes(params, boxes, r_vec)
    return _apply_pins(_accept_joint_step(params, coords, r_vec, tau, box), boxes)


def _apply_pins(params, boxes: ParameterBoxes):
    # pinned values would otherwise pass through exp(log(.)) and pick up
    # an ulp of rounding, which breaks exact agreement with fixed parameters
    changes = {}
    if boxes.sparsity[0] == boxes.sparsity[1]:
        changes["sparsity"] = boxes.sparsity[0]
    if boxes.scale[0] == boxes.scale[1]:
        name = "variances" if isinstance(params, BgmParams) else "rates"
        changes[name] = np.full(params.n_components, boxes.scale[0])
    if isinstance(params, BgmParams) and boxes.mean is not None and boxes.mean[0] == boxes.mean[1]:
        changes["means"] = np.full(params.n_components, boxes.mean[0])
    return replace(params, **changes) if changes else params


def _mixture_coords(params) -> np.ndarray:
    if isinstance(params, BgmParams):
        rest = [params.means, np.log(params.variances)]
    else:
        rest = [np.log(params.rates)]
    return np.concatenate([[params.sparsity], np.log(params.weights), *rest])


def _mixture_from_coords(template, coords: np.ndarray):
    n = template.n_components
    weights = _softmax(coords[1 : 1 + n])
    if isinstance(template, BgmParams):
        return BgmParams(float(coords[0]), weights, coords[1 + n : 1 + 2 * n].copy(),
                         np.exp(coords[1 + 2 * n :]))
    return BemParams(float(coords[0]), weights, np.exp(coords[1 + n : 1 + 2 * n]))


def _joint_value(params, r_vec, tau) -> float:
    if isinstance(params, BgmParams):
        value, _ = _kernels.bgm_evidence(r_vec, tau, params.sparsity, params.weights,
                                         params.means, params.variances)
    else:
        value, _ = _kernels.bem_evidence(r_vec, tau, params.sparsity, params.weights,
                                         params.rates)
    return value


def _accept_joint_step(params, coords, r_vec, tau, box=None, max_halvings: int = 10):
    # Each coordinate was maximized with the others frozen, so the combined
    # move can overshoot when parameters are coupled (a weight moving onto a
    # component whose scale moved at the same time).  Halve the step in
    # search coordinates until the joint evidence does not drop.
    start = _mixture_coords(params)
    step = coords[: start.size] - start
    base = _joint_value(params, r_vec, tau)
    slack = 1e-12 * max(1.0, abs(base))
    # log-weights may sit outside the logit box (softmax is shift invariant),
    # so only the other coordinates are clipped back after rounding
    n = params.n_components
    keep = np.ones(start.size, dtype=bool)
    keep[1 : 1 + n] = False
    t = 1.0
    for _ in range(max_halvings + 1):
        point = coords[: start.size].copy() if t == 1.0 else start + t * step
        if box is not None:
            point[keep] = np.clip(point[keep], box[: start.size, 0][keep], box[: start.size, 1][keep])
        trial = _mixture_from_coords(params, point)
        if _joint_value(trial, r_vec, tau) >= base - slack:
            return trial
        t *= 0.5
    return _mixture_from_coords(params, start)


def update_output_parameters(
    theta: AwgnParams,
    q_vec,
    y_vec,
    tau_q: float,
    boxes: ParameterBoxes = ParameterBoxes(),
    cfg: LineSearchConfig | None = None,
) -> AwgnParams:
    q_vec = np.asarray(q_vec, dtype=np.float64)
    y_vec = np.asarray(y_vec, dtype=np.float64)
    tau = float(tau_q)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    if not theta.variance > 0:
        raise ValueError("out of feasibility box")
    lo, hi = _search_box(Param("noise"), boxes, None)
    if lo == hi:
        return AwgnParams(boxes.noise[0])
    rel, shrink, max_outer = _relative_steps(cfg)
    width = hi - lo
    sq = float(np.sum((y_vec - q_vec) ** 2))
    empty = np.zeros(0)
    coord, ok = _search.line_search(
        _search.NOISE, y_vec.size, math.log(theta.variance), lo, hi,
        rel[0] * width, rel[1] * width, shrink, rel[2] * width, max_outer,
        empty, tau, 0.0, empty, empty, empty, np.zeros((1, 0)), sq,
    )
    if not ok:
        raise ValueError("degenerate evidence")
    return AwgnParams(math.exp(coord))


def _validate_snapshot(params) -> None:
    # frozen dataclasses validate on construction; re-run it to catch tampering
    replace(params)


def update_all_parameters(
    state,
    y,
    input_params: InputParams,
    output_params: AwgnParams,
    boxes: ParameterBoxes = ParameterBoxes(),
    cfg: LineSearchConfig | None = None,
) -> tuple:
    """MAP update of every input and output parameter from a GAMP state.

    Uses ``state.r``, ``state.tau_r`` for the input side and ``state.q``,
    ``state.tau_q`` with ``y`` for the noise variance.  Either both channels
    are updated or an error is raised; the inputs are never modified.
    """
    _validate_snapshot(input_params)
    _validate_snapshot(output_params)
    new_in = update_input_parameters(input_params, state.r, state.tau_r, boxes, cfg)
    new_out = update_output_parameters(output_params, state.q, y, state.tau_q, boxes, cfg)
    return new_in, new_out
