"""Randomized invariants.  Every test draws at least 200 cases from a fixed seed."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from pegamp.channels import (
    AwgnParams,
    BgmParams,
    awgn_map_z,
    gin_sum_product,
    gout_awgn_max_sum,
    gout_awgn_sum_product,
)
from pegamp.gamp import (
    SensingOperator,
    SolverOptions,
    default_input_params,
    default_output_params,
    run_pe_gamp,
)
from pegamp.harness.sweeps import SweepResult, read_csv
from pegamp.param_est import (
    EvidenceGradient,
    ParameterBoxes,
    _softmax,
    line_search_maximize,
    update_input_parameters,
)
from pegamp.special_fn import erfcx, log_sum_exp

pytestmark = pytest.mark.property

mpmath.mp.dps = 40

finite = st.floats(-1e6, 1e6, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)
kinds = st.sampled_from(["bgm", "bem", "laplace"])


@given(st.floats(-26.5, 1e6), st.floats(-26.5, 1e6))
def test_erfcx_nonincreasing(a, b):
    lo, hi = min(a, b), max(a, b)
    assert erfcx(lo) >= erfcx(hi)


@given(st.floats(-5.0, 5.0))
def test_erfcx_against_high_precision(x):
    exact = float(mpmath.exp(mpmath.mpf(x) ** 2) * mpmath.erfc(x))
    assert abs(erfcx(x) - exact) <= 1e-12 * exact


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=20), st.floats(-1e3, 1e3))
def test_log_sum_exp_shift(values, c):
    shifted = log_sum_exp([v + c for v in values])
    assert shifted == pytest.approx(log_sum_exp(values) + c, rel=1e-12, abs=1e-9)
    assert log_sum_exp(values) >= max(values)


@given(kinds, seeds, finite, st.floats(1e-10, 1e10))
def test_posterior_variance_nonnegative(kind, seed, r, tau):
    prior = oracles.random_prior(kind, np.random.default_rng(seed))
    mean, var = gin_sum_product(prior, r, tau)
    assert math.isfinite(mean) and math.isfinite(var) and var >= 0


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-50, 50), st.floats(1e-4, 1e3))
def test_pure_gaussian_is_conjugate(mu, v, r, tau):
    mean, var = gin_sum_product(BgmParams(1.0, [1.0], [mu], [v]), r, tau)
    assert var == pytest.approx(v * tau / (v + tau), rel=1e-12)
    assert mean == pytest.approx((mu * tau + r * v) / (v + tau), rel=1e-10, abs=1e-12)


@given(st.sampled_from(["bgm", "bem"]), seeds)
def test_updates_stay_feasible(kind, seed):
    rng = np.random.default_rng(seed)
    prior = oracles.random_prior(kind, rng)
    r = rng.normal(size=200) * rng.uniform(0.1, 3)
    boxes = ParameterBoxes(sparsity=(0.05, 0.9), scale=(0.05, 20.0))
    new = update_input_parameters(prior, r, oracles.random_tau(rng), boxes)
    assert 0.05 <= new.sparsity <= 0.9
    assert abs(new.weights.sum() - 1) < 1e-10 and np.all(new.weights >= 0)
    scales = new.variances if kind == "bgm" else new.rates
    assert np.all((scales >= 0.05) & (scales <= 20.0))


@given(st.floats(-5, 5), st.floats(0.1, 10), st.floats(-5, 5))
def test_line_search_never_descends(peak, curv, start):
    f = lambda x: -curv * (x - peak) ** 2
    grad = lambda x: EvidenceGradient(f(x), -2 * curv * (x - peak))
    end = line_search_maximize(grad, start, (-10.0, 10.0))
    assert -10 <= end <= 10 and f(end) >= f(start)


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=8))
def test_softmax_is_a_distribution(logits):
    w = _softmax(np.array(logits))
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


@given(st.floats(1e-8, 1e3), finite, st.floats(1e-8, 1e3), finite)
def test_output_estimators_agree(theta, q, tau, y):
    noise = AwgnParams(theta)
    s, tau_s = gout_awgn_sum_product(noise, q, tau, y)
    s2, tau_s2 = gout_awgn_max_sum(noise, q, tau, y)
    assert s2 == pytest.approx(s, rel=1e-8, abs=1e-8 * abs(y - q) / (theta + tau) + 1e-12)
    assert tau_s2 == pytest.approx(tau_s, rel=1e-8)
    # the posterior mean of z is q + tau * s
    z = awgn_map_z(noise, q, tau, y)
    assert q + tau * s == pytest.approx(z, rel=1e-8, abs=1e-8 * (abs(q) + abs(y)) + 1e-12)


@given(seeds)
def test_solver_is_finite_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(10, 40))
    M = int(rng.integers(5, N + 1))
    A = SensingOperator(rng.normal(size=(M, N)) / math.sqrt(M))
    x = rng.normal(size=N) * (rng.random(N) < 0.3)
    y = A.forward(x) + 0.01 * rng.normal(size=M)
    opts = SolverOptions(max_iters=30)
    init = default_input_params("bgm", A, y), default_output_params(y)
    a, b = run_pe_gamp(A, y, *init, opts), run_pe_gamp(A, y, *init, opts)
    assert np.all(np.isfinite(a.x_hat)) and np.all(np.isfinite(a.tau_x_history))
    assert np.array_equal(a.x_hat, b.x_hat) and a.iterations_used == b.iterations_used


records = st.lists(st.fixed_dictionaries({
    "sigma": st.floats(0.01, 1.0), "rho": st.floats(0.01, 1.0),
    "variant": st.sampled_from(["pe_bgm", "pe_bem", "pe_lasso", "oracle"]),
    "success_rate": st.floats(0, 1), "trials": st.integers(1, 10**6),
    "mean_iters": st.floats(0, 1e4),
}), max_size=10)


@given(records)
def test_csv_round_trip(tmp_path_factory, recs):
    out = tmp_path_factory.mktemp("csv")
    cols = ("sigma", "rho", "variant", "success_rate", "trials", "mean_iters")
    path = SweepResult("ptc", cols, recs).write(out)
    assert read_csv(path) == recs
