"""Reference computations the tests compare against.

Posterior moments come from adaptive quadrature of the defining integrals
prior(x) * N(r; x, tau); nothing here reuses the package's closed forms.
Each continuous branch is integrated after dividing out its peak value, so
the quadrature never sees underflowing integrands.
"""

import math

import numpy as np
from scipy.integrate import quad

from pegamp.channels import BemParams, BgmParams, LaplaceParams

QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=500)


def _moments_of(logf, lo, hi, points):
    """(log Z, E[x], E[x^2] about the mean) of exp(logf) on [lo, hi]."""
    pts = sorted({p for p in points if lo < p < hi})
    peak = max(logf(p) for p in [lo, hi, *pts] if math.isfinite(p))
    f = lambda x: math.exp(logf(x) - peak)
    z = quad(f, lo, hi, points=pts or None, **QUAD)[0]
    m = quad(lambda x: x * f(x), lo, hi, points=pts or None, **QUAD)[0] / z
    v = quad(lambda x: (x - m) ** 2 * f(x), lo, hi, points=pts or None, **QUAD)[0] / z
    return peak + math.log(z), m, v


def _log_lik(x, r, tau):
    return -0.5 * math.log(2 * math.pi * tau) - (r - x) ** 2 / (2 * tau)


def _gauss_branch(r, tau, mu, var):
    # unnormalized branch is a Gaussian in x; integrate +-40 sd around its peak
    center = (mu * tau + r * var) / (var + tau)
    sd = math.sqrt(var * tau / (var + tau))
    logf = lambda x: (-0.5 * math.log(2 * math.pi * var) - (x - mu) ** 2 / (2 * var)
                      + _log_lik(x, r, tau))
    grid = center + sd * np.array([-40, -5, -1, 0, 1, 5, 40])
    return _moments_of(logf, grid[0], grid[-1], grid[1:-1])


def _exp_branch(r, tau, rate):
    """x >= 0 branch of rate * exp(-rate x) * N(r; x, tau)."""
    peak = max(0.0, r - rate * tau)
    sd = math.sqrt(tau)
    # near the boundary the integrand can fall off much faster than sd
    slope = max((rate * tau - r) / tau, 0.0)
    near = 1.0 / slope if slope > 0 else sd
    logf = lambda x: math.log(rate) - rate * x + _log_lik(x, r, tau)
    hi = peak + 40 * sd
    pts = [peak + k * sd for k in (1, 5)] + [min(near, sd) * k for k in (0.1, 1, 10)]
    if peak > 0:
        pts += [peak, max(peak - 5 * sd, 0.0)]
    return _moments_of(logf, 0.0, hi, pts)


def _combine(log_weights, moments):
    lw = np.array(log_weights)
    top = lw.max()
    p = np.exp(lw - top)
    p /= p.sum()
    means = np.array([m for m, _ in moments])
    var = np.array([v for _, v in moments])
    mean = float(p @ means)
    second = float(p @ (var + (means - mean) ** 2))
    return mean, second, top + math.log(np.exp(lw - top).sum())


def posterior(prior, r, tau):
    """(mean, variance, log evidence) of x given r = x + N(0, tau)."""
    if isinstance(prior, LaplaceParams):
        a = prior.rate
        lz_pos, m_pos, v_pos = _exp_branch(r, tau, a)
        lz_neg, m_neg, v_neg = _exp_branch(-r, tau, a)
        return _combine([math.log(0.5) + lz_pos, math.log(0.5) + lz_neg],
                        [(m_pos, v_pos), (-m_neg, v_neg)])
    lam = prior.sparsity
    logw = [math.log1p(-lam) + _log_lik(0.0, r, tau) if lam < 1 else -math.inf]
    moments = [(0.0, 0.0)]
    for c in range(prior.n_components):
        if isinstance(prior, BgmParams):
            lz, m, v = _gauss_branch(r, tau, prior.means[c], prior.variances[c])
        else:
            lz, m, v = _exp_branch(r, tau, prior.rates[c])
        logw.append(math.log(lam) + math.log(prior.weights[c]) + lz)
        moments.append((m, v))
    return _combine(logw, moments)


def log_evidence(prior, r_vec, tau):
    """Sum over entries of the log marginal density of r, by quadrature."""
    return sum(posterior(prior, float(r), tau)[2] for r in np.ravel(r_vec))


# --- random instances ------------------------------------------------------------


def random_prior(kind, rng, n_components=None):
    C = int(n_components or rng.integers(1, 4))
    w = rng.dirichlet(np.ones(C) * 2.0)
    if kind == "bgm":
        return BgmParams(rng.uniform(0.02, 0.98), w, rng.uniform(-2, 2, C),
                         np.exp(rng.uniform(math.log(0.05), math.log(5), C)))
    if kind == "bem":
        return BemParams(rng.uniform(0.02, 0.98), w,
                         np.exp(rng.uniform(math.log(0.1), math.log(10), C)))
    return LaplaceParams(math.exp(rng.uniform(math.log(0.1), math.log(10))))


def random_tau(rng):
    return math.exp(rng.uniform(math.log(1e-3), math.log(10)))


def close(actual, expected, rtol, atol=0.0):
    return abs(actual - expected) <= rtol * abs(expected) + atol


def central_difference(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def richardson_difference(f, x, h):
    """Centered difference extrapolated from steps h and h/2; error O(h^4).

    A larger base step than a plain centered difference keeps the rounding
    noise in f (about eps * |f| / h) well under the derivative itself.
    """
    d1 = central_difference(f, x, h)
    d2 = central_difference(f, x, h / 2)
    return (4 * d2 - d1) / 3
