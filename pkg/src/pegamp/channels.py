"""Input and output channels.

Input channels are sparse priors on the signal entries (BGm, BEm, Laplace);
the output channel is additive white Gaussian noise.  Each channel exposes
the scalar estimators GAMP needs:

* ``gin``: posterior mean and variance of x under prior(x) * N(x; r, tau_r)
* ``gout``: score ``s`` and curvature ``tau_s`` of the output evidence at q
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import _kernels

_WEIGHT_SUM_TOL = 1e-10


class PosteriorMoment(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


def _as_array(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=np.float64)).copy()


def _check_weights(weights: np.ndarray) -> None:
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("mixture needs at least one component")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
        raise ValueError("mixture weights must be non-negative and sum to 1")


def _check_sparsity(sparsity: float) -> None:
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")


@dataclass(frozen=True)
class BgmParams:
    """Bernoulli / Gaussian-mixture prior.

    ``(1 - sparsity) * delta(x) + sparsity * sum_c weights[c] * N(x; means[c], variances[c])``
    """

    sparsity: float
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sparsity", float(self.sparsity))
        for name in ("weights", "means", "variances"):
            object.__setattr__(self, name, _as_array(getattr(self, name)))
        _check_sparsity(self.sparsity)
        _check_weights(self.weights)
        if not self.weights.shape == self.means.shape == self.variances.shape:
            raise ValueError("weights, means and variances must have equal length")
        if np.any(~(self.variances > 0)) or not np.all(np.isfinite(self.means)):
            raise ValueError("component variances must be positive and means finite")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def mean(self) -> float:
        return self.sparsity * float(self.weights @ self.means)

    def variance(self) -> float:
        second = self.sparsity * float(self.weights @ (self.variances + self.means**2))
        return second - self.mean() ** 2

    def to_dict(self) -> dict:
        return {
            "sparsity": self.sparsity,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }


@dataclass(frozen=True)
class BemParams:
    """Bernoulli / exponential-mixture prior on non-negative signals.

    ``(1 - sparsity) * delta(x) + sparsity * sum_c weights[c] * rates[c] * exp(-rates[c] * x)``
    """

    sparsity: float
    weights: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sparsity", float(self.sparsity))
        for name in ("weights", "rates"):
            object.__setattr__(self, name, _as_array(getattr(self, name)))
        _check_sparsity(self.sparsity)
        _check_weights(self.weights)
        if self.weights.shape != self.rates.shape:
            raise ValueError("weights and rates must have equal length")
        if np.any(~(self.rates > 0)):
            raise ValueError("rates must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.size

    def mean(self) -> float:
        return self.sparsity * float(self.weights @ (1.0 / self.rates))

    def variance(self) -> float:
        second = self.sparsity * float(self.weights @ (2.0 / self.rates**2))
        return second - self.mean() ** 2

    def to_dict(self) -> dict:
        return {
            "sparsity": self.sparsity,
            "weights": self.weights.tolist(),
            "rates": self.rates.tolist(),
        }


@dataclass(frozen=True)
class LaplaceParams:
    """Laplace prior ``rate / 2 * exp(-rate * |x|)``."""

    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 2.0 / self.rate**2

    def to_dict(self) -> dict:
        return {"rate": self.rate}


@dataclass(frozen=True)
class AwgnParams:
    """White Gaussian noise with variance ``variance``."""

    variance: float

    def __post_init__(self):
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise ValueError("noise variance must be positive")

    def to_dict(self) -> dict:
        return {"variance": self.variance}


InputParams = Union[BgmParams, BemParams, LaplaceParams]


def _check_pseudo_variance(tau) -> float:
    tau = float(tau)
    if not tau > 0:
        raise ValueError("nonpositive pseudo-variance")
    return tau


def _wrap(mean: np.ndarray, var: np.ndarray, scalar: bool) -> PosteriorMoment:
    if scalar:
        return PosteriorMoment(float(mean[0]), float(var[0]))
    return PosteriorMoment(mean, var)


def gin_sum_product(prior: InputParams, r, tau_r) -> PosteriorMoment:
    """Posterior mean/variance of x given the pseudo-observation ``r = x + N(0, tau_r)``.

    ``r`` may be a scalar or an array; ``tau_r`` is a shared scalar.
    """
    tau = _check_pseudo_variance(tau_r)
    scalar = np.ndim(r) == 0
    r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
    if isinstance(prior, BgmParams):
        mean, var = _kernels.bgm_moments(
            r_arr, tau, prior.sparsity, prior.weights, prior.means, prior.variances
        )
    elif isinstance(prior, BemParams):
        mean, var = _kernels.bem_moments(r_arr, tau, prior.sparsity, prior.weights, prior.rates)
    elif isinstance(prior, LaplaceParams):
        mean, var = _kernels.laplace_moments(r_arr, tau, prior.rate)
    else:
        raise TypeError(f"unknown input channel {type(prior).__name__}")
    return _wrap(mean, var, scalar)


def gin_max_sum_laplace(prior: LaplaceParams, r, tau_r) -> PosteriorMoment:
    """Soft threshold at ``rate * tau_r``; the variance is tau_r on the support."""
    tau = _check_pseudo_variance(tau_r)
    r_arr = np.asarray(r, dtype=np.float64)
    thresh = prior.rate * tau
    mag = np.abs(r_arr) - thresh
    mean = np.where(mag > 0, np.sign(r_arr) * mag, 0.0)
    var = np.where(mag > 0, tau, 0.0)
    if mean.ndim == 0:
        return PosteriorMoment(float(mean), float(var))
    return PosteriorMoment(mean, var)


def gin_max_sum(prior: InputParams, r, tau_r) -> PosteriorMoment:
    # spike-and-slab priors put their mode at zero for every r
    if not isinstance(prior, LaplaceParams):
        raise ValueError("channel unsupported for max-sum")
    return gin_max_sum_laplace(prior, r, tau_r)


def awgn_log_evidence(theta: AwgnParams, q, tau_q, y):
    """H(q, tau_q, y) = log int N(y; z, theta) exp(-(z - q)^2 / (2 tau_q)) dz, up to 2*pi terms."""
    tau = _check_pseudo_variance(tau_q)
    total = theta.variance + tau
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * math.log(tau) - 0.5 * math.log(total) - (y - q) ** 2 / (2.0 * total)


def gout_awgn_sum_product(theta: AwgnParams, q, tau_q, y) -> PosteriorMoment:
    """Score ``s = dH/dq`` and curvature ``tau_s = -d^2H/dq^2`` for AWGN."""
    tau = _check_pseudo_variance(tau_q)
    total = theta.variance + tau
    s = (np.asarray(y, dtype=np.float64) - q) / total
    tau_s = np.full_like(s, 1.0 / total) if np.ndim(s) else 1.0 / total
    if np.ndim(s) == 0:
        return PosteriorMoment(float(s), float(tau_s))
    return PosteriorMoment(s, tau_s)


def awgn_map_z(theta: AwgnParams, q, tau_q, y):
    """Maximizer of N(y; z, theta) * exp(-(z - q)^2 / (2 tau_q)) over z."""
    tau = _check_pseudo_variance(tau_q)
    return (np.asarray(y, dtype=np.float64) * tau + np.asarray(q) * theta.variance) / (
        theta.variance + tau
    )


def gout_awgn_max_sum(theta: AwgnParams, q, tau_q, y) -> PosteriorMoment:
    """Max-sum output estimator, built from the displacement of the maximizing z.

    For Gaussian noise it coincides with :func:`gout_awgn_sum_product`.
    """
    tau = _check_pseudo_variance(tau_q)
    q = np.asarray(q, dtype=np.float64)
    # z_map - q, formed directly: subtracting q from z_map cancels badly
    # once tau is small next to theta
    shift = (np.asarray(y, dtype=np.float64) - q) * (tau / (theta.variance + tau))
    s = shift / tau
    # 1 - dz_map/dq = 1 - theta / (theta + tau) = tau / (theta + tau)
    tau_s = (tau / (theta.variance + tau)) / tau
    if np.ndim(s) == 0:
        return PosteriorMoment(float(s), float(tau_s))
    return PosteriorMoment(s, np.full_like(s, tau_s))


def sample_prior(prior: InputParams, count: int, seed) -> np.ndarray:
    """I.i.d. draws from the prior; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    if count <= 0:
        return np.zeros(0)
    if isinstance(prior, LaplaceParams):
        return rng.laplace(0.0, 1.0 / prior.rate, size=count)
    active = rng.random(count) < prior.sparsity
    comp = rng.choice(prior.n_components, size=count, p=prior.weights)
    out = np.zeros(count)
    if isinstance(prior, BgmParams):
        draws = rng.standard_normal(count)
        vals = prior.means[comp] + np.sqrt(prior.variances[comp]) * draws
    elif isinstance(prior, BemParams):
        vals = rng.exponential(1.0, size=count) / prior.rates[comp]
    else:
        raise TypeError(f"unknown input channel {type(prior).__name__}")
    out[active] = vals[active]
    return out
