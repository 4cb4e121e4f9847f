"""GAMP with scalar variances, with and without built-in parameter estimation.

One iteration runs the output linear step, the output nonlinearity, the
input linear step, the input nonlinearity and then (unless the run is an
oracle run) a MAP re-estimate of every channel parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .channels import (
    AwgnParams,
    BemParams,
    BgmParams,
    InputParams,
    LaplaceParams,
    gin_max_sum_laplace,
    gin_sum_product,
    gout_awgn_max_sum,
    gout_awgn_sum_product,
)
from .param_est import LineSearchConfig, ParameterBoxes, update_all_parameters

TAU_MIN = 1e-12
TAU_MAX = 1e12


class DivergenceError(RuntimeError):
    """Raised when the iteration produces non-finite state."""

    def __init__(self, iteration: int):
        super().__init__(f"divergence at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SensingOperator:
    """Dense M x N measurement matrix with cached squared norms."""

    entries: np.ndarray
    column_sq_norm: np.ndarray = field(init=False, repr=False)
    row_sq_norm: np.ndarray = field(init=False, repr=False)
    frobenius_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64, order="C")
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("sensing matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(a)):
            raise ValueError("sensing matrix has non-finite entries")
        a.setflags(write=False)
        sq = a * a
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "column_sq_norm", sq.sum(axis=0))
        object.__setattr__(self, "row_sq_norm", sq.sum(axis=1))
        object.__setattr__(self, "frobenius_sq", float(sq.sum()))

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.entries @ x

    def adjoint(self, s: np.ndarray) -> np.ndarray:
        return self.entries.T @ s


@dataclass
class GampState:
    x_hat: np.ndarray
    tau_x: float
    z_hat: np.ndarray
    q: np.ndarray
    tau_q: float
    s: np.ndarray
    tau_s: float
    r: np.ndarray
    tau_r: float
    s_prev: np.ndarray
    iteration: int = 0


# One ascent step of the line search per GAMP iteration.  Maximizing each
# parameter fully at every iteration lets estimation noise at small N feed
# back into the pseudo-data and the run wanders; a single step tracks the
# maximizer across iterations instead.
PER_ITERATION_SEARCH = LineSearchConfig(max_outer_iters=1)
LASSO_TOL = 1e-13
LASSO_MAX_ITERS = 1000


@dataclass(frozen=True)
class SolverOptions:
    """Solver settings.

    PE runs keep the initial parameters for ``warmup_iters`` iterations, or
    until the estimate settles on them if that happens first; a PE run stops
    only once the parameters no longer move the estimate.
    ``line_search=None`` means ``PER_ITERATION_SEARCH``.
    """

    max_iters: int = 200
    tol: float = 1e-6
    damping: float = 1.0
    oracle: bool = False
    boxes: ParameterBoxes = ParameterBoxes()
    line_search: Optional[LineSearchConfig] = None
    seed: int = 0
    n_components: int = 3
    warmup_iters: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be non-negative")


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iterations_used: int
    converged: bool
    final_params_input: InputParams
    final_params_output: AwgnParams
    residual_history: list
    tau_x_history: list
    phase1_params: Optional[tuple] = None


# --- default initial parameters ----------------------------------------------

_SPREAD = np.array([0.5, 1.0, 2.0])
_FLOOR = 1e-8


def _spread(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    return np.geomspace(_SPREAD[0], _SPREAD[-1], n)


def default_input_params(family: str, A: SensingOperator, y, n_components: int = 3) -> InputParams:
    """Scale-aware starting point for PE-GAMP.

    ``family`` is one of ``"bgm"``, ``"bem"``, ``"laplace"``.  Scales are
    set so the prior's second moment matches the per-entry energy
    ``||y||^2 / ||A||_F^2``; multi-component priors spread that scale
    over a factor of four, normalized so the mixture as a whole still
    matches the energy.
    """
    y = np.asarray(y, dtype=np.float64)
    energy = max(float(y @ y) / A.frobenius_sq, _FLOOR)
    sparsity = 0.1
    weights = np.full(n_components, 1.0 / n_components)
    if family == "bgm":
        spread = _spread(n_components)
        var = energy / sparsity * spread / spread.mean()
        return BgmParams(sparsity, weights, np.zeros(n_components), var)
    if family == "bem":
        # second moment of an exponential with rate a is 2 / a^2
        spread = _spread(n_components)
        rate = math.sqrt(2.0 * sparsity * np.mean(spread**-2) / energy)
        return BemParams(sparsity, weights, rate * spread)
    if family == "laplace":
        return LaplaceParams(math.sqrt(2.0 / energy))
    raise ValueError(f"unknown input family {family!r}")


def default_output_params(y) -> AwgnParams:
    y = np.asarray(y, dtype=np.float64)
    return AwgnParams(max(0.01 * float(y @ y) / y.size, _FLOOR))


# --- the iteration ------------------------------------------------------------


def _clamp(tau: float) -> float:
    return min(max(tau, TAU_MIN), TAU_MAX)


def _check_problem(A: SensingOperator, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.M,):
        raise ValueError("y must have length M")
    if not np.all(np.isfinite(y)):
        raise ValueError("y has non-finite entries")
    return y


def _initial_state(A: SensingOperator, mean: float, variance: float) -> GampState:
    x = np.full(A.N, mean)
    zeros = np.zeros(A.M)
    return GampState(
        x_hat=x, tau_x=variance, z_hat=A.forward(x), q=zeros.copy(), tau_q=1.0,
        s=zeros.copy(), tau_s=0.0, r=x.copy(), tau_r=1.0, s_prev=zeros,
    )


def _relative_change(new, old) -> float:
    return float(np.linalg.norm(new - old)) / max(float(np.linalg.norm(old)), 1e-12)


def _is_finite(state: GampState) -> bool:
    return all(
        np.all(np.isfinite(v)) for v in (state.q, state.s, state.r, state.x_hat)
    ) and all(math.isfinite(t) for t in (state.tau_q, state.tau_r, state.tau_x, state.tau_s))


def _iterate(A, y, prior, noise, opts, gin, gout, estimate, callback, start=None):
    """Shared loop; ``estimate`` maps (state, prior, noise) to new parameters or None.

    ``start`` overrides the (mean, variance) the signal estimate starts from;
    by default it is the prior's.
    """
    mean, var0 = start if start is not None else (prior.mean(), prior.variance())
    state = _initial_state(A, mean, var0)
    residuals, tau_hist = [], []
    learning = opts.warmup_iters == 0
    converged = False
    frob = A.frobenius_sq
    for t in range(1, opts.max_iters + 1):
        state.iteration = t
        # s_prev starts at zero, which is an initialization and not a message;
        # mixing it into the first s would shrink r without shrinking tau_r
        d = opts.damping if t > 1 else 1.0
        # output linear step
        state.tau_q = _clamp(state.tau_x * frob / A.M)
        state.z_hat = A.forward(state.x_hat)
        state.q = state.z_hat - state.tau_q * state.s_prev
        # output nonlinear step
        s_new, tau_s = gout(noise, state.q, state.tau_q, y)
        state.s = d * s_new + (1.0 - d) * state.s_prev if d < 1 else s_new
        state.tau_s = float(np.mean(tau_s))
        # input linear step
        state.tau_r = _clamp(1.0 / max(state.tau_s * frob / A.N, 1.0 / TAU_MAX))
        state.r = state.x_hat + state.tau_r * A.adjoint(state.s)
        # input nonlinear step
        x_new, var = gin(prior, state.r, state.tau_r)
        x_gin = x_new
        if d < 1:
            x_new = d * x_new + (1.0 - d) * state.x_hat
        x_old = state.x_hat
        state.x_hat = x_new
        state.tau_x = float(np.mean(var))
        state.s_prev = state.s
        if not _is_finite(state):
            raise DivergenceError(t)
        change = _relative_change(x_new, x_old)
        settled = estimate is None
        if estimate is not None and learning:
            prior, noise = estimate(state, prior, noise)
            # the new parameters only reach x_hat next iteration, so judge
            # them by how much they would move the estimate from this r
            settled = _relative_change(gin(prior, state.r, state.tau_r)[0], x_gin) < opts.tol
        elif estimate is not None and (t >= opts.warmup_iters or change < opts.tol):
            # a run that settles on its initial parameters starts learning early
            learning = True
        residuals.append(change)
        tau_hist.append(state.tau_x)
        if callback is not None:
            callback(state, prior, noise)
        # the first change is measured against the initialization, whose
        # variance is not yet consistent with any message; never stop there
        if change < opts.tol and settled and t > 1:
            converged = True
            break
    return RecoveryResult(
        x_hat=state.x_hat.copy(),
        iterations_used=len(residuals),
        converged=converged,
        final_params_input=prior,
        final_params_output=noise,
        residual_history=residuals,
        tau_x_history=tau_hist,
    )


def _pe_estimator(y, opts: SolverOptions):
    def estimate(state, prior, noise):
        cfg = opts.line_search if opts.line_search is not None else PER_ITERATION_SEARCH
        return update_all_parameters(state, y, prior, noise, opts.boxes, cfg)

    return estimate


def run_pe_gamp(
    A: SensingOperator,
    y,
    input_channel: InputParams,
    output_channel: AwgnParams,
    opts: SolverOptions = SolverOptions(),
    callback: Optional[Callable] = None,
) -> RecoveryResult:
    """Sum-product GAMP that re-estimates the channel parameters every iteration.

    ``input_channel`` and ``output_channel`` are the initial parameters.
    ``callback(state, input_params, output_params)`` is called after each
    iteration; it must not modify the state.  With ``opts.oracle`` set the
    parameters stay fixed.
    """
    y = _check_problem(A, y)
    estimate = None if opts.oracle else _pe_estimator(y, opts)
    return _iterate(A, y, input_channel, output_channel, opts,
                    gin_sum_product, gout_awgn_sum_product, estimate, callback)


def run_oracle_gamp(
    A: SensingOperator,
    y,
    input_channel: InputParams,
    output_channel: AwgnParams,
    opts: SolverOptions = SolverOptions(),
    callback: Optional[Callable] = None,
) -> RecoveryResult:
    """Sum-product GAMP with the parameters held at the supplied (true) values."""
    return run_pe_gamp(A, y, input_channel, output_channel, replace(opts, oracle=True), callback)


def run_max_sum_lasso(
    A: SensingOperator,
    y,
    rate: float,
    noise_variance: float,
    opts: SolverOptions = SolverOptions(),
    callback: Optional[Callable] = None,
) -> RecoveryResult:
    """Max-sum GAMP for the Lasso ``min ||y - Ax||^2 / (2 theta) + rate * ||x||_1``.

    The input step is soft thresholding; parameters stay fixed.
    """
    y = _check_problem(A, y)
    prior = LaplaceParams(rate)
    noise = AwgnParams(noise_variance)
    # the Laplace prior's own variance (2 / rate^2) is a poor starting
    # spread when the rate is small; use the data scale instead
    start = (0.0, max(float(y @ y) / A.frobenius_sq, _FLOOR))
    return _iterate(A, y, prior, noise, opts, gin_max_sum_laplace, gout_awgn_max_sum,
                    None, callback, start)


def run_pe_lasso(
    A: SensingOperator,
    y,
    opts: SolverOptions = SolverOptions(),
    input_channel: Optional[LaplaceParams] = None,
    output_channel: Optional[AwgnParams] = None,
) -> RecoveryResult:
    """Two-phase Lasso: estimate (rate, noise) by sum-product PE-GAMP with a
    Laplace prior, then run max-sum GAMP with them held fixed."""
    y = _check_problem(A, y)
    lap = input_channel or default_input_params("laplace", A, y)
    noise = output_channel or default_output_params(y)
    phase1 = run_pe_gamp(A, y, lap, noise, replace(opts, oracle=False))
    rate = phase1.final_params_input.rate
    theta = phase1.final_params_output.variance
    # phase 2 is a convex solve whose threshold rate*theta can be tiny on
    # noiseless data; stopping at the phase-1 tolerance leaves the
    # stationarity residual large compared with that threshold, and near
    # basis pursuit it routinely needs a few hundred iterations
    lasso_opts = replace(opts, tol=min(opts.tol, LASSO_TOL),
                         max_iters=max(opts.max_iters, LASSO_MAX_ITERS))
    result = run_max_sum_lasso(A, y, rate, theta, lasso_opts)
    result.phase1_params = (phase1.final_params_input, phase1.final_params_output)
    result.final_params_output = AwgnParams(theta)
    return result
