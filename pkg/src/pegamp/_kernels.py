"""Compiled per-sample loops shared by the channel estimators and the
parameter evidence.

Every input-channel posterior is a mixture of "branches" (the spike at zero
plus one branch per mixture component).  Each loop computes the branch
log-weights in the log domain, normalizes them, and combines the branch
moments.
"""

import math

import numpy as np
from numba import njit

from .special_fn import log_erfcx_scalar

_HALF_LOG_PI_OVER_2 = 0.5 * math.log(math.pi / 2.0)
_TRUNC_SERIES_SPLIT = 25.0
_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@njit(cache=True)
def safe_log(x):
    if x <= 0.0:
        return -math.inf
    return math.log(x)


@njit(cache=True)
def _trunc_series(alpha):
    # s = 1/alpha^2; d = 1 - alpha * mills, e = 1 - alpha^2 * d
    s = 1.0 / (alpha * alpha)
    d = 0.0
    e = 0.0
    dfact = 1.0  # (2k-1)!!
    sk = 1.0
    sign = 1.0
    for k in range(1, 16):
        sk *= s
        e += sign * dfact * (2.0 * k + 1.0) * sk
        d += sign * dfact * sk
        dfact *= 2.0 * k + 1.0
        sign = -sign
    return d, e


@njit(cache=True)
def exp_branch(r, tau, a):
    """Exponential branch against a Gaussian pseudo-likelihood.

    Returns ``(log K, mean, var)`` where
    ``K = int_0^inf a exp(-a x) exp(-(x - r)^2 / (2 tau)) dx`` and mean/var
    are the moments of the resulting truncated normal N(r - a tau, tau) on
    [0, inf).
    """
    m = r - a * tau
    sd = math.sqrt(tau)
    alpha = -m / sd
    u = alpha / _SQRT2
    base = math.log(a) + _HALF_LOG_PI_OVER_2 + 0.5 * math.log(tau)
    if alpha < _TRUNC_SERIES_SPLIT:
        if u < 0.0:
            ec = math.erfc(u)
            log_k = base + 0.5 * a * a * tau - a * r + math.log(ec)
            h = _SQRT_2_OVER_PI * math.exp(-u * u) / ec
        else:
            x = math.exp(u * u) * math.erfc(u)
            log_k = base - r * r / (2.0 * tau) + math.log(x)
            h = _SQRT_2_OVER_PI / x
        mean = m + sd * h
        var = tau * (1.0 + alpha * h - h * h)
    else:
        log_k = base - r * r / (2.0 * tau) + log_erfcx_scalar(u)
        d, e = _trunc_series(alpha)
        one_minus_d = 1.0 - d
        mean = -m * d / one_minus_d
        var = tau * (e - 2.0 * d + d * d) / (one_minus_d * one_minus_d)
    if var < 0.0:
        var = 0.0
    if mean < 0.0:
        mean = 0.0
    return log_k, mean, var


@njit(cache=True)
def trunc_moments(m, tau):
    """Mean and variance of N(m, tau) restricted to [0, inf)."""
    # a = 1 shifts the location by tau; undo it through r
    _, mean, var = exp_branch(m + tau, tau, 1.0)
    return mean, var


@njit(cache=True)
def log_exp_branch(r, tau, a):
    """log of int_0^inf a exp(-a x) exp(-(x - r)^2 / (2 tau)) dx."""
    return exp_branch(r, tau, a)[0]


@njit(cache=True)
def _normalize(logw, p):
    top = -math.inf
    for k in range(logw.size):
        if logw[k] > top:
            top = logw[k]
    total = 0.0
    for k in range(logw.size):
        p[k] = math.exp(logw[k] - top)
        total += p[k]
    for k in range(logw.size):
        p[k] /= total
    return top + math.log(total)


@njit(cache=True)
def _combine(p, m, v):
    mean = 0.0
    for k in range(p.size):
        mean += p[k] * m[k]
    var = 0.0
    for k in range(p.size):
        dev = m[k] - mean
        var += p[k] * (v[k] + dev * dev)
    return mean, var


@njit(cache=True)
def _bgm_consts(tau, lam, w, v):
    # per-component terms that do not depend on the sample
    C = w.size
    offset = np.empty(C + 1)
    half_inv = np.empty(C + 1)
    offset[0] = safe_log(1.0 - lam)
    half_inv[0] = 0.5 / tau
    log_lam = safe_log(lam)
    for c in range(C):
        s = v[c] + tau
        offset[c + 1] = log_lam + safe_log(w[c]) + 0.5 * math.log(tau / s)
        half_inv[c + 1] = 0.5 / s
    return offset, half_inv


@njit(cache=True)
def _bgm_branches(rj, tau, offset, half_inv, mu, v, logw, m, V):
    logw[0] = offset[0] - rj * rj * half_inv[0]
    m[0] = 0.0
    V[0] = 0.0
    for c in range(mu.size):
        dev = mu[c] - rj
        logw[c + 1] = offset[c + 1] - dev * dev * half_inv[c + 1]
        frac = 2.0 * half_inv[c + 1]
        m[c + 1] = (mu[c] * tau + rj * v[c]) * frac
        V[c + 1] = v[c] * tau * frac


@njit(cache=True)
def _bem_branches(rj, tau, log_spike, log_lam, w, rate, logw, m, V):
    logw[0] = log_spike - rj * rj / (2.0 * tau)
    m[0] = 0.0
    V[0] = 0.0
    for c in range(w.size):
        lk, mc, vc = exp_branch(rj, tau, rate[c])
        logw[c + 1] = log_lam + safe_log(w[c]) + lk
        m[c + 1] = mc
        V[c + 1] = vc


@njit(cache=True)
def bgm_moments(r, tau, lam, w, mu, v):
    n = r.size
    k = w.size + 1
    mean = np.empty(n)
    var = np.empty(n)
    logw = np.empty(k)
    p = np.empty(k)
    m = np.empty(k)
    V = np.empty(k)
    offset, half_inv = _bgm_consts(tau, lam, w, v)
    for j in range(n):
        _bgm_branches(r[j], tau, offset, half_inv, mu, v, logw, m, V)
        _normalize(logw, p)
        mean[j], var[j] = _combine(p, m, V)
    return mean, var


@njit(cache=True)
def bem_moments(r, tau, lam, w, rate):
    n = r.size
    k = w.size + 1
    mean = np.empty(n)
    var = np.empty(n)
    logw = np.empty(k)
    p = np.empty(k)
    m = np.empty(k)
    V = np.empty(k)
    log_spike = safe_log(1.0 - lam)
    log_lam = safe_log(lam)
    for j in range(n):
        _bem_branches(r[j], tau, log_spike, log_lam, w, rate, logw, m, V)
        _normalize(logw, p)
        mean[j], var[j] = _combine(p, m, V)
    return mean, var


@njit(cache=True)
def _laplace_branches(rj, tau, lam, logw, m, V):
    logw[0], mp, vp = exp_branch(rj, tau, lam)
    logw[1], mn, vn = exp_branch(-rj, tau, lam)
    m[0] = mp
    V[0] = vp
    m[1] = -mn
    V[1] = vn


@njit(cache=True)
def laplace_moments(r, tau, lam):
    n = r.size
    mean = np.empty(n)
    var = np.empty(n)
    logw = np.empty(2)
    p = np.empty(2)
    m = np.empty(2)
    V = np.empty(2)
    for j in range(n):
        _laplace_branches(r[j], tau, lam, logw, m, V)
        _normalize(logw, p)
        mean[j], var[j] = _combine(p, m, V)
    return mean, var


# --- evidence and its gradient -------------------------------------------
# Layout of the gradient vector:
#   BGm: [sparsity, logits(C), means(C), variances(C)]
#   BEm: [sparsity, logits(C), rates(C)]
#   Laplace: [rate]


@njit(cache=True)
def bgm_evidence(r, tau, lam, w, mu, v):
    C = w.size
    grad = np.zeros(1 + 3 * C)
    logw = np.empty(C + 1)
    p = np.empty(C + 1)
    m = np.empty(C + 1)
    V = np.empty(C + 1)
    offset, half_inv = _bgm_consts(tau, lam, w, v)
    value = 0.0
    for j in range(r.size):
        rj = r[j]
        _bgm_branches(rj, tau, offset, half_inv, mu, v, logw, m, V)
        value += _normalize(logw, p)
        p0 = p[0]
        grad[0] += (1.0 - p0) / lam - p0 / (1.0 - lam)
        for c in range(C):
            pc = p[c + 1]
            s = v[c] + tau
            dev = rj - mu[c]
            grad[1 + c] += pc - w[c] * (1.0 - p0)
            grad[1 + C + c] += pc * dev / s
            grad[1 + 2 * C + c] += pc * (dev * dev / (2.0 * s * s) - 0.5 / s)
    return value, grad


@njit(cache=True)
def bem_evidence(r, tau, lam, w, rate):
    C = w.size
    grad = np.zeros(1 + 2 * C)
    logw = np.empty(C + 1)
    p = np.empty(C + 1)
    m = np.empty(C + 1)
    V = np.empty(C + 1)
    log_spike = safe_log(1.0 - lam)
    log_lam = safe_log(lam)
    value = 0.0
    for j in range(r.size):
        _bem_branches(r[j], tau, log_spike, log_lam, w, rate, logw, m, V)
        value += _normalize(logw, p)
        p0 = p[0]
        grad[0] += (1.0 - p0) / lam - p0 / (1.0 - lam)
        for c in range(C):
            pc = p[c + 1]
            grad[1 + c] += pc - w[c] * (1.0 - p0)
            # d/da log(a-weighted truncated integral) = 1/a - E[x | branch]
            grad[1 + C + c] += pc * (1.0 / rate[c] - m[c + 1])
    return value, grad


@njit(cache=True)
def laplace_evidence(r, tau, lam):
    logw = np.empty(2)
    p = np.empty(2)
    m = np.empty(2)
    V = np.empty(2)
    const = math.log(0.5)
    value = 0.0
    grad = 0.0
    for j in range(r.size):
        _laplace_branches(r[j], tau, lam, logw, m, V)
        value += _normalize(logw, p) + const
        # d/dlam log Z = 1/lam - E|x|
        grad += 1.0 / lam - (p[0] * m[0] - p[1] * m[1])
    return value, grad
