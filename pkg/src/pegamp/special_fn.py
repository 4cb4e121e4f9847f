"""Scalar special functions used by the channel estimators.

The scalar cores are numba-compiled so the channel kernels can call them
from inside their own loops; the public wrappers accept floats or arrays.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, vectorize
from scipy.special import logsumexp

SQRT_PI = math.sqrt(math.pi)
LOG_2PI = math.log(2.0 * math.pi)

# Above this the asymptotic series is used; below it exp(x^2) * erfc(x)
# stays within double range and erfc keeps full relative accuracy.
_ERFCX_SPLIT = 26.0
# exp(x^2) overflows past sqrt(log(DBL_MAX)).
_EXP_SQ_LIMIT = 709.78


@njit(cache=True)
def _erfcx_asymptotic(x):
    # 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k, converged for x >= 26
    if x > 1e8:
        return 1.0 / (x * SQRT_PI)
    inv = 1.0 / (2.0 * x * x)
    term = 1.0
    total = 1.0
    for k in range(1, 12):
        term *= -(2.0 * k - 1.0) * inv
        total += term
    return total / (x * SQRT_PI)


@njit(cache=True)
def erfcx_scalar(x):
    if x >= _ERFCX_SPLIT:
        return _erfcx_asymptotic(x)
    x2 = x * x
    if x < 0.0 and x2 > _EXP_SQ_LIMIT:
        return math.inf
    return math.exp(x2) * math.erfc(x)


@njit(cache=True)
def log_erfcx_scalar(x):
    """log(erfcx(x)), finite for every finite x."""
    if x < 0.0:
        return x * x + math.log(math.erfc(x))
    if x >= _ERFCX_SPLIT:
        return math.log(_erfcx_asymptotic(x))
    return math.log(math.exp(x * x) * math.erfc(x))


@vectorize(["float64(float64)"], cache=True)
def _erfcx_ufunc(x):
    return erfcx_scalar(x)


@vectorize(["float64(float64)"], cache=True)
def _log_erfcx_ufunc(x):
    return log_erfcx_scalar(x)


def erfcx(x):
    """Scaled complementary error function ``exp(x**2) * erfc(x)``.

    Returns ``inf`` once ``exp(x**2)`` overflows (x below about -26.6);
    callers that can reach that regime should work with :func:`log_erfcx`.
    """
    out = _erfcx_ufunc(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def log_erfcx(x):
    out = _log_erfcx_ufunc(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def log_sum_exp(values) -> float:
    """Stable ``log(sum(exp(values)))``; ``-inf`` when every entry is ``-inf``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty reduction")
    if np.all(arr == -np.inf):
        return -math.inf
    return float(logsumexp(arr))


def gauss_log_pdf(x, mean, variance):
    """Log density of N(mean, variance) at ``x``."""
    if np.any(np.asarray(variance) <= 0):
        raise ValueError("nonpositive variance")
    x = np.asarray(x, dtype=np.float64)
    out = -0.5 * (LOG_2PI + np.log(variance)) - (x - mean) ** 2 / (2.0 * variance)
    return float(out) if np.ndim(out) == 0 else out
