"""Monte-Carlo state evolution for sum-product PE-GAMP with a BGm prior and
AWGN output.

The recursion tracks the scalar variances of GAMP in the large-system limit
for a matrix with i.i.d. N(0, 1/M) entries.  Expectations are sample means
over a fixed pool of standard normal and uniform draws that is reused at
every step (common random numbers), so the trajectory is a smooth function
of the state and fully determined by the seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channels import AwgnParams, BgmParams, gin_sum_product
from .param_est import (
    LineSearchConfig,
    ParameterBoxes,
    update_input_parameters,
    update_output_parameters,
)

_PSD_TOL = 1e-9
TRAJECTORY_COLUMNS = ("t", "tau_x_bar", "tau_r_bar", "mse_pred", "lambda1_bar", "theta1_bar")


@dataclass(frozen=True)
class SamplePool:
    """Standard draws shared by every step of one trajectory."""

    u_active: np.ndarray
    u_component: np.ndarray
    g_signal: np.ndarray
    g_z: np.ndarray
    g_q: np.ndarray
    g_w: np.ndarray
    g_v: np.ndarray

    @classmethod
    def draw(cls, size: int, seed) -> "SamplePool":
        rng = np.random.default_rng(seed)
        return cls(
            u_active=rng.random(size),
            u_component=rng.random(size),
            g_signal=rng.standard_normal(size),
            g_z=rng.standard_normal(size),
            g_q=rng.standard_normal(size),
            g_w=rng.standard_normal(size),
            g_v=rng.standard_normal(size),
        )

    @property
    def size(self) -> int:
        return self.u_active.size

    def signal(self, prior: BgmParams) -> np.ndarray:
        """Draws of the BGm prior by inverse transform of the pooled uniforms."""
        cum = np.cumsum(prior.weights)
        comp = np.minimum(np.searchsorted(cum, self.u_component, side="right"), cum.size - 1)
        vals = prior.means[comp] + np.sqrt(prior.variances[comp]) * self.g_signal
        return np.where(self.u_active < prior.sparsity, vals, 0.0)


@dataclass(frozen=True)
class SeConfig:
    beta: float
    prior: BgmParams
    noise: AwgnParams
    init_prior: Optional[BgmParams] = None
    init_noise: Optional[AwgnParams] = None
    estimate_params: bool = False
    mc_samples: int = 100_000
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    xi_squared: bool = True
    boxes: ParameterBoxes = ParameterBoxes()
    line_search: Optional[LineSearchConfig] = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.mc_samples < 10_000:
            raise ValueError("mc_samples must be at least 1e4")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SeState:
    t: int
    tau_x_bar: float
    tau_q_bar: float
    tau_r_bar: float
    xi_r: float
    alpha_r: float
    Kx: np.ndarray
    Kq: np.ndarray
    beta: float
    mc_samples: int
    prior_bar: BgmParams
    noise_bar: AwgnParams
    mse: float = field(default=math.nan)

    @property
    def params_bar(self) -> tuple:
        return self.prior_bar, self.noise_bar


def _symmetric(K: np.ndarray) -> np.ndarray:
    return 0.5 * (K + K.T)


def _psd_factor(K: np.ndarray) -> np.ndarray:
    """A matrix L with L @ L.T == K, after clipping round-off negativity."""
    K = _symmetric(K)
    vals, vecs = np.linalg.eigh(K)
    scale = max(float(np.abs(vals).max()), 1e-300)
    if vals.min() < -_PSD_TOL * scale:
        raise ValueError("invalid covariance")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def initial_state(cfg: SeConfig) -> SeState:
    prior_bar = cfg.init_prior or cfg.prior
    noise_bar = cfg.init_noise or cfg.noise
    # the estimate starts at the prior mean of the working parameters
    x_mean = prior_bar.mean()
    second = cfg.prior.variance() + cfg.prior.mean() ** 2
    Kx = np.array([[second, cfg.prior.mean() * x_mean], [cfg.prior.mean() * x_mean, x_mean**2]])
    tau_x = prior_bar.variance()
    mse = second - 2.0 * cfg.prior.mean() * x_mean + x_mean**2
    return SeState(
        t=0, tau_x_bar=tau_x, tau_q_bar=cfg.beta * tau_x, tau_r_bar=math.nan, xi_r=math.nan,
        alpha_r=math.nan, Kx=Kx, Kq=cfg.beta * Kx, beta=cfg.beta, mc_samples=cfg.mc_samples,
        prior_bar=prior_bar, noise_bar=noise_bar, mse=mse,
    )


def se_step(state: SeState, cfg: SeConfig, pool: SamplePool) -> SeState:
    """One output update and one input update of the recursion."""
    theta_true = cfg.noise.variance
    theta_bar = state.noise_bar.variance
    # output side
    tau_q = max(state.beta * state.tau_x_bar, 1e-12)
    Kq = state.beta * _symmetric(state.Kx)
    L = _psd_factor(Kq)
    z = L[0, 0] * pool.g_z + L[0, 1] * pool.g_q
    q = L[1, 0] * pool.g_z + L[1, 1] * pool.g_q
    y = z + math.sqrt(theta_true) * pool.g_w
    total = theta_bar + tau_q
    g_out = (y - q) / total
    # for AWGN both derivatives of g_out are the constant 1 / (theta + tau_q)
    tau_r = total
    if cfg.xi_squared:
        xi_r = tau_r**2 * float(np.mean(g_out**2))
    else:
        xi_r = abs(tau_r**2 * float(np.mean(g_out)))
    alpha_r = tau_r / total
    # input side
    x = pool.signal(cfg.prior)
    r = alpha_r * x + math.sqrt(xi_r) * pool.g_v
    x_hat, post_var = gin_sum_product(state.prior_bar, r, tau_r)
    tau_x = float(np.mean(post_var))
    Kx = np.array([[np.mean(x * x), np.mean(x * x_hat)], [np.mean(x_hat * x), np.mean(x_hat * x_hat)]])
    mse = float(np.mean((x - x_hat) ** 2))

    prior_bar, noise_bar = state.prior_bar, state.noise_bar
    if cfg.estimate_params:
        prior_bar = update_input_parameters(prior_bar, r, tau_r, cfg.boxes, cfg.line_search)
        noise_bar = update_output_parameters(noise_bar, q, y, tau_q, cfg.boxes, cfg.line_search)
    return SeState(
        t=state.t + 1, tau_x_bar=tau_x, tau_q_bar=tau_q, tau_r_bar=tau_r, xi_r=xi_r,
        alpha_r=alpha_r, Kx=_symmetric(Kx), Kq=Kq, beta=state.beta, mc_samples=pool.size,
        prior_bar=prior_bar, noise_bar=noise_bar, mse=mse,
    )


def se_run(cfg: SeConfig) -> list:
    """Iterate until the predicted MSE changes by less than ``cfg.tol`` or
    ``cfg.max_iters`` steps; returns every state including t = 0."""
    pool = SamplePool.draw(cfg.mc_samples, cfg.seed)
    traj = [initial_state(cfg)]
    for _ in range(cfg.max_iters):
        nxt = se_step(traj[-1], cfg, pool)
        traj.append(nxt)
        if abs(nxt.mse - traj[-2].mse) < cfg.tol:
            break
    return traj


def trajectory_rows(traj: list) -> list:
    return [
        {
            "t": st.t,
            "tau_x_bar": st.tau_x_bar,
            "tau_r_bar": st.tau_r_bar,
            "mse_pred": st.mse,
            "lambda1_bar": st.prior_bar.sparsity,
            "theta1_bar": st.noise_bar.variance,
        }
        for st in traj
    ]


def write_trajectory_csv(traj: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
        writer.writeheader()
        for row in trajectory_rows(traj):
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
