"""Compiled parameter line searches.

A parameter update runs one line search per scalar parameter against a
frozen snapshot.  Only one parameter moves at a time, so the branch terms
that do not depend on it are summed once per update and cached per sample;
each objective evaluation then recomputes a single branch.

Every objective returns the full log evidence (so values are comparable
with :mod:`pegamp._kernels`) and its derivative in the search coordinate.
"""

import math

import numpy as np
from numba import njit

from ._kernels import exp_branch, safe_log

SPARSITY = 0
WEIGHT = 1
MEAN = 2
VARIANCE = 3
RATE = 4
LAPLACE = 5
NOISE = 6

_LOG_HALF = math.log(0.5)


@njit(cache=True)
def _lae(a, b):
    # log(exp(a) + exp(b)), tolerant of -inf on either side
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True)
def _lae_share(a, b):
    """``(log(e^a + e^b), e^b / (e^a + e^b))`` from one exp and one log1p."""
    d = b - a
    if d > 0.0:
        e = math.exp(-d)
        return b + math.log1p(e), 1.0 / (1.0 + e)
    if d == -math.inf:
        return a, 0.0
    e = math.exp(d)
    return a + math.log1p(e), e / (1.0 + e)


@njit(cache=True)
def _bgm_log_k(rj, tau, mu, var):
    s = var + tau
    dev = mu - rj
    return 0.5 * math.log(tau / s) - dev * dev / (2.0 * s)


@njit(cache=True)
def _evaluate(kind, u, c, r, tau, lam, logw, a1, a2, cache, extra):
    n = r.size
    value = 0.0
    grad = 0.0
    if kind == SPARSITY:
        # cache[0]: spike log term, cache[1]: log sum_c w_c K_c
        l1 = safe_log(1.0 - u)
        l2 = safe_log(u)
        for j in range(n):
            tot, p1 = _lae_share(l1 + cache[0, j], l2 + cache[1, j])
            p0 = 1.0 - p1
            value += tot
            grad += (1.0 - p0) / u - p0 / (1.0 - u)
    elif kind == WEIGHT:
        # cache[0]: spike, cache[1]: log sum_{k != c} w_k K_k, cache[2]: log K_c;
        # extra: log of the other weights' total
        log_norm = _lae(extra, u)
        wc = math.exp(u - log_norm)
        l2 = safe_log(lam)
        for j in range(n):
            comp = l2 + u + cache[2, j] - log_norm
            slab, share = _lae_share(l2 + cache[1, j] - log_norm, comp)
            tot, p_slab = _lae_share(cache[0, j], slab)
            value += tot
            grad += p_slab * (share - wc)
    elif kind == MEAN or kind == VARIANCE:
        # cache[0]: log of every branch except component c
        mu = a1[c]
        var = a2[c]
        if kind == MEAN:
            mu = u
        else:
            var = math.exp(u)
        s = var + tau
        half_log = 0.5 * math.log(tau / s)
        inv2 = 0.5 / s
        base = safe_log(lam) + logw[c]
        for j in range(n):
            dev = r[j] - mu
            lb = base + half_log - dev * dev * inv2
            tot, pc = _lae_share(cache[0, j], lb)
            value += tot
            if kind == MEAN:
                grad += pc * dev / s
            else:
                grad += pc * (dev * dev / (2.0 * s * s) - 0.5 / s) * var
    elif kind == RATE:
        a = math.exp(u)
        base = safe_log(lam) + logw[c]
        for j in range(n):
            lk, mj, _ = exp_branch(r[j], tau, a)
            tot, pc = _lae_share(cache[0, j], base + lk)
            value += tot
            grad += pc * (1.0 - a * mj)
    elif kind == LAPLACE:
        a = math.exp(u)
        for j in range(n):
            lp, mp, _ = exp_branch(r[j], tau, a)
            ln, mn, _ = exp_branch(-r[j], tau, a)
            tot, pn = _lae_share(lp, ln)
            pp = 1.0 - pn
            value += tot + _LOG_HALF
            grad += 1.0 - a * (pp * mp + (1.0 - pp) * mn)
    elif kind == NOISE:
        # extra: sum of squared residuals, c: number of measurements
        theta = math.exp(u)
        t = theta + tau
        value = -0.5 * c * math.log(t) - extra / (2.0 * t)
        grad = (extra / (2.0 * t * t) - c / (2.0 * t)) * theta
    return value, grad


@njit(cache=True)
def _clip(x, lo, hi):
    return min(max(x, lo), hi)


@njit(cache=True)
def line_search(kind, c, start, lo, hi, up, down, shrink, tol, max_outer,
                r, tau, lam, logw, a1, a2, cache, extra):
    """Sign-of-gradient search; returns ``(x, ok)``.

    ``ok`` is False only when the objective is not finite at the start.
    Mirrors :func:`pegamp.param_est.line_search_maximize`.
    """
    if lo == hi:
        return lo, True
    x = _clip(start, lo, hi)
    cur_v, cur_g = _evaluate(kind, x, c, r, tau, lam, logw, a1, a2, cache, extra)
    if not (math.isfinite(cur_v) and math.isfinite(cur_g)):
        return x, False
    for _ in range(max_outer):
        if cur_g > 0:
            step = up
        elif cur_g < 0:
            step = down
        else:
            break
        cand_x = _clip(x + step, lo, hi)
        cand_v, cand_g = _evaluate(kind, cand_x, c, r, tau, lam, logw, a1, a2, cache, extra)
        found = True
        while not cand_v >= cur_v:
            step *= shrink
            if abs(step) < tol:
                found = False
                break
            cand_x = _clip(x + step, lo, hi)
            cand_v, cand_g = _evaluate(kind, cand_x, c, r, tau, lam, logw, a1, a2, cache, extra)
        if cur_g > 0:
            up = step
        else:
            down = step
        if not found or not math.isfinite(cand_g):
            break
        moved = abs(cand_x - x)
        x = cand_x
        cur_v = cand_v
        cur_g = cand_g
        if moved < tol:
            break
    return x, True


@njit(cache=True)
def _branch_logs(r, tau, is_bgm, a1, a2):
    C = a1.size
    out = np.empty((C, r.size))
    for c in range(C):
        for j in range(r.size):
            if is_bgm:
                out[c, j] = _bgm_log_k(r[j], tau, a1[c], a2[c])
            else:
                out[c, j] = exp_branch(r[j], tau, a1[c])[0]
    return out


@njit(cache=True)
def _log_sum_except(logw, lk, j, skip):
    acc = -math.inf
    for k in range(logw.size):
        if k != skip:
            acc = _lae(acc, logw[k] + lk[k, j])
    return acc


@njit(cache=True)
def update_mixture(r, tau, lam, w, a1, a2, is_bgm, boxes, rel, shrink, max_outer):
    """Jacobi update of every mixture-prior parameter.

    ``boxes`` is a (1 + 3C, 2) array of search boxes in the layout
    [sparsity, logits(C), first(C), second(C)] where first/second are
    means/log-variances (BGm) or log-rates/unused (BEm).  ``rel`` holds the
    step and tolerance as fractions of each box width: (up, down, tol).

    Returns the coordinates found, in the same layout, and a flag that is
    False if any objective was non-finite at its starting point.
    """
    C = w.size
    n = r.size
    logw = np.empty(C)
    for c in range(C):
        logw[c] = safe_log(w[c])
    lk = _branch_logs(r, tau, is_bgm, a1, a2)
    spike = np.empty(n)
    for j in range(n):
        spike[j] = -r[j] * r[j] / (2.0 * tau)
    out = np.zeros(1 + 3 * C)
    ok = True
    cache = np.empty((3, n))
    log_lam = safe_log(lam)
    log_not = safe_log(1.0 - lam)

    def run(kind, c, start, slot, extra):
        lo = boxes[slot, 0]
        hi = boxes[slot, 1]
        width = hi - lo
        return line_search(kind, c, start, lo, hi, rel[0] * width, rel[1] * width,
                           shrink, rel[2] * width, max_outer,
                           r, tau, lam, logw, a1, a2, cache, extra)

    for j in range(n):
        cache[0, j] = spike[j]
        cache[1, j] = _log_sum_except(logw, lk, j, -1)
    x, good = run(SPARSITY, 0, lam, 0, 0.0)
    out[0] = x
    ok = ok and good

    if C > 1:
        for c in range(C):
            rest = 0.0
            for k in range(C):
                if k != c:
                    rest += w[k]
            for j in range(n):
                cache[0, j] = log_not + spike[j]
                cache[1, j] = _log_sum_except(logw, lk, j, c)
                cache[2, j] = lk[c, j]
            x, good = run(WEIGHT, c, logw[c], 1 + c, safe_log(rest))
            out[1 + c] = x
            ok = ok and good
    else:
        out[1] = logw[0]

    for c in range(C):
        for j in range(n):
            cache[0, j] = _lae(log_not + spike[j], log_lam + _log_sum_except(logw, lk, j, c))
        if is_bgm:
            x, good = run(MEAN, c, a1[c], 1 + C + c, 0.0)
            out[1 + C + c] = x
            ok = ok and good
            x, good = run(VARIANCE, c, math.log(a2[c]), 1 + 2 * C + c, 0.0)
            out[1 + 2 * C + c] = x
            ok = ok and good
        else:
            x, good = run(RATE, c, math.log(a1[c]), 1 + C + c, 0.0)
            out[1 + C + c] = x
            ok = ok and good
    return out, ok


@njit(cache=True)
def evaluate(kind, u, c, r, tau, lam, w, a1, a2, is_bgm):
    """Objective value and search-coordinate gradient straight from a snapshot.

    Builds the same cache :func:`update_mixture` uses; meant for checks.
    """
    C = w.size
    n = r.size
    logw = np.empty(C)
    for k in range(C):
        logw[k] = safe_log(w[k])
    cache = np.empty((3, n))
    extra = 0.0
    if kind == LAPLACE:
        return _evaluate(kind, u, c, r, tau, lam, logw, a1, a2, cache, extra)
    lk = _branch_logs(r, tau, is_bgm, a1, a2)
    for j in range(n):
        spike = -r[j] * r[j] / (2.0 * tau)
        if kind == SPARSITY:
            cache[0, j] = spike
            cache[1, j] = _log_sum_except(logw, lk, j, -1)
        elif kind == WEIGHT:
            cache[0, j] = safe_log(1.0 - lam) + spike
            cache[1, j] = _log_sum_except(logw, lk, j, c)
            cache[2, j] = lk[c, j]
        else:
            cache[0, j] = _lae(safe_log(1.0 - lam) + spike,
                               safe_log(lam) + _log_sum_except(logw, lk, j, c))
    if kind == WEIGHT:
        rest = 0.0
        for k in range(C):
            if k != c:
                rest += w[k]
        extra = safe_log(rest)
    return _evaluate(kind, u, c, r, tau, lam, logw, a1, a2, cache, extra)
