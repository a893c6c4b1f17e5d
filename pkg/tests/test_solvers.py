import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import instance, rel_err
from tgslope.errors import InvalidArgumentError
from tgslope.linalg import nuclear_norm, procrustes_h
from tgslope.penalty import group_slope_prox, penalty_value
from tgslope.solvers import (
    Problem,
    SolverConfig,
    dc_objective,
    full_objective,
    initial_factor,
    nuclear_subgradient,
    orthogonal_fast_path,
    solve_pdcae,
    solve_tbmm,
    solve_tglasso,
    solve_tlrr,
    stationarity_residual,
)

ALL = [solve_pdcae, solve_tbmm, solve_tlrr]


def _check_result(res, prob, eps=1e-6):
    k = prob.k_rank
    assert np.linalg.norm(res.h.T @ res.h - np.eye(k)) <= 1e-8
    assert np.all(np.isfinite(res.objective_trace))
    if res.converged:
        assert res.final_step <= eps
        assert stationarity_residual(res.g, prob, res.lipschitz) <= 10 * eps
    # bounded iterates relative to the data scale
    assert np.linalg.norm(res.g) <= 1e3 * max(np.linalg.norm(prob.xty), 1.0)
    # DC identity at the returned point
    lhs = dc_objective(res.g, prob) + 0.5 * prob.y_sq
    rhs = full_objective(res.g, res.h, prob)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)


# -- objective pieces -------------------------------------------------------


def test_dc_objective_zero():
    prob, *_ = instance(0)
    assert dc_objective(np.zeros((prob.p, prob.k_rank)), prob) == 0.0


def test_dc_objective_square_toy():
    prob = Problem(np.eye(4), np.eye(4), (2, 2), 2, np.zeros(4))
    g = np.random.default_rng(0).standard_normal((4, 2))
    expect = 0.5 * np.linalg.norm(g) ** 2 - nuclear_norm(g)
    assert abs(dc_objective(g, prob) - expect) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_dc_identity_random(seed):
    prob, *_ = instance(seed % 1000, n=30, p=12, s=3)
    g = np.random.default_rng(seed).standard_normal((prob.p, prob.k_rank))
    h = procrustes_h(prob.xty.T @ g)
    lhs = dc_objective(g, prob) + 0.5 * prob.y_sq
    rhs = 0.5 * np.linalg.norm(prob.y_unfolded - prob.x @ g @ h.T) ** 2 + penalty_value(g, prob.lam)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1.0)


def test_nuclear_subgradient_column_orthogonal():
    prob = Problem(np.eye(4), np.eye(4), (2, 2), 2, np.zeros(4))
    g = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 2)))[0]
    assert np.allclose(nuclear_subgradient(g, prob), g, atol=1e-12)


def test_nuclear_subgradient_inequality():
    prob, *_ = instance(3, n=40, p=15, s=3)
    rng = np.random.default_rng(3)

    def big_n(g):
        return nuclear_norm(prob.xty.T @ g)

    worst = np.inf
    for _ in range(1000):
        g = rng.standard_normal((prob.p, prob.k_rank))
        g2 = rng.standard_normal((prob.p, prob.k_rank))
        q1 = nuclear_subgradient(g, prob)
        worst = min(worst, big_n(g2) - big_n(g) - float(np.sum(q1 * (g2 - g))))
    assert worst >= -1e-10


def test_nuclear_subgradient_at_zero():
    prob, *_ = instance(4)
    q1 = nuclear_subgradient(np.zeros((prob.p, prob.k_rank)), prob)
    assert np.linalg.norm(q1, 2) <= np.linalg.norm(prob.xty, 2) * (1 + 1e-12)


def test_initial_factor_is_truncated_svd():
    prob, *_ = instance(5)
    g0 = initial_factor(prob)
    u, s, _ = np.linalg.svd(prob.xty, full_matrices=False)
    assert np.allclose(np.abs(g0), np.abs(u[:, :2] * s[:2]), atol=1e-10)


# -- exact recovery ---------------------------------------------------------


@pytest.fixture(scope="module")
def noiseless():
    return instance(2024, n=40, p=40, p1=3, p2=3, k=3, s=5, design="orthogonal", sigma=0.0, lam="zero")


@pytest.mark.parametrize("solver", ALL)
def test_noiseless_recovery(noiseless, solver):
    prob, truth, *_ = noiseless
    res = solver(prob)
    assert res.converged
    assert rel_err(res.b_hat, truth.b_star) <= 1e-6
    _check_result(res, prob)


# -- descent and convergence ------------------------------------------------


@given(st.integers(0, 10_000))
def test_pdcae_without_extrapolation_descends(seed):
    prob, *_ = instance(seed, n=50, p=20, s=3)
    res = solve_pdcae(prob, SolverConfig(extrapolation="none"))
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    _check_result(res, prob)


@given(st.integers(0, 10_000))
def test_tbmm_full_objective_descends(seed):
    prob, *_ = instance(seed, n=50, p=20, s=3)
    res = solve_tbmm(prob)
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    _check_result(res, prob)


def test_pdcae_with_extrapolation_properties():
    for seed in range(10):
        prob, *_ = instance(seed)
        res = solve_pdcae(prob)
        assert res.converged
        _check_result(res, prob)
        steps = res.step_trace
        if steps.size >= 20:
            assert steps[-10:].max() <= steps[:10].max()


def test_subgradient_at_extrapolated_point_option():
    prob, *_ = instance(11)
    a = solve_pdcae(prob)
    b = solve_pdcae(prob, SolverConfig(subgradient_at="extrapolated"))
    _check_result(b, prob)
    assert abs(full_objective(a.g, a.h, prob) - full_objective(b.g, b.h, prob)) <= 1e-4 * abs(
        full_objective(a.g, a.h, prob)
    )


def test_max_iter_reached_is_not_an_error():
    prob, *_ = instance(6)
    res = solve_pdcae(prob, SolverConfig(max_iter=2))
    assert res.iterations == 2 and not res.converged
    assert np.linalg.norm(res.h.T @ res.h - np.eye(prob.k_rank)) <= 1e-8


def test_trace_stride_option():
    prob, *_ = instance(6)
    full = solve_pdcae(prob, SolverConfig(extrapolation="none"))
    thin = solve_pdcae(prob, SolverConfig(extrapolation="none", trace_every=5))
    assert thin.objective_trace.size < full.objective_trace.size
    assert np.array_equal(thin.b_hat, full.b_hat)


def test_solver_determinism():
    prob, *_ = instance(12)
    a, b = solve_pdcae(prob), solve_pdcae(prob)
    assert a.b_hat.tobytes() == b.b_hat.tobytes()
    assert a.objective_trace.tobytes() == b.objective_trace.tobytes()


def test_pdcae_tbmm_agreement_diagnostic():
    # both reach stationary points of a nonconvex problem; agreement is typical, not guaranteed
    agree = 0
    cfg = SolverConfig(epsilon=1e-10, max_iter=50_000)
    for seed in range(10):
        prob, *_ = instance(seed)
        a, b = solve_pdcae(prob, cfg), solve_tbmm(prob, cfg)
        fa, fb = full_objective(a.g, a.h, prob), full_objective(b.g, b.h, prob)
        agree += abs(fa - fb) <= 1e-4 * abs(fa)
    assert agree >= 8


# -- baselines --------------------------------------------------------------


def test_tglasso_flat_and_zero():
    prob, *_ = instance(7)
    res = solve_tglasso(prob, lam=0.0)
    ref = solve_tlrr(prob)
    assert np.array_equal(res.b_hat, ref.b_hat)
    assert res.method == "tglasso"
    with pytest.raises(InvalidArgumentError):
        solve_tglasso(prob)  # chi sequence is not flat
    with pytest.raises(InvalidArgumentError):
        solve_tglasso(prob, lam=-1.0)
    flat = prob.with_lambda(np.full(prob.p, 0.7))
    assert np.array_equal(solve_tglasso(flat).b_hat, solve_tglasso(prob, lam=0.7).b_hat)


@pytest.mark.parametrize("design,n", [("gaussian", 60), ("orthogonal", 30)])
def test_tglasso_shrinks_total_group_norm(design, n):
    for seed in range(10):
        prob, *_ = instance(seed, n=n, design=design, lam="zero")
        g0 = solve_tlrr(prob).g
        g1 = solve_tglasso(prob, lam=0.5).g
        assert np.linalg.norm(g1, axis=1).sum() <= np.linalg.norm(g0, axis=1).sum() + 1e-10


def test_tlrr_discovers_everything_under_noise():
    prob, *_ = instance(8)
    res = solve_tlrr(prob)
    assert np.all(np.linalg.norm(res.g, axis=1) > 0)
    expect = 0.5 * float(np.sum((prob.x @ res.g) ** 2)) - nuclear_norm(prob.xty.T @ res.g)
    assert abs(dc_objective(res.g, prob.with_lambda(np.zeros(prob.p))) - expect) <= 1e-10 * abs(expect)


# -- orthogonal fast path ---------------------------------------------------


def test_fast_path_matches_pdcae():
    for seed in range(10):
        prob, *_ = instance(seed, n=30, p=30, design="orthogonal")
        a, b = solve_pdcae(prob), orthogonal_fast_path(prob)
        assert rel_err(a.b_hat, b.b_hat) <= 1e-5
        _check_result(b, prob)


def test_fast_path_single_step_exact():
    prob, truth, *_ = instance(9, n=30, p=30, design="orthogonal", sigma=0.0)
    res = orthogonal_fast_path(prob, SolverConfig(max_iter=1), g0=truth.g_star)
    assert np.allclose(res.g, group_slope_prox(truth.g_star, prob.lam), atol=1e-12)


def test_fast_path_huge_lambda_zeroes():
    prob, *_ = instance(10, n=30, p=30, design="orthogonal")
    big = prob.with_lambda(np.full(prob.p, 1e6))
    res = orthogonal_fast_path(big)
    assert not np.any(res.g)


def test_fast_path_requires_orthogonal_design():
    prob, *_ = instance(10)
    with pytest.raises(InvalidArgumentError):
        orthogonal_fast_path(prob)


# -- configuration and problem validation -----------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(epsilon=0), dict(max_iter=0), dict(extrapolation="heavy"), dict(restart_every=0),
     dict(lipschitz_override=-1.0), dict(subgradient_at="nowhere")],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        SolverConfig(**kwargs)


def test_problem_validation():
    x = np.ones((4, 3))
    with pytest.raises(InvalidArgumentError):
        Problem(x, np.ones((4, 5)), (2, 2), 1, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        Problem(x, np.ones((4, 4)), (2, 2), 4, np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        Problem(x, np.ones((4, 4)), (2, 2), 1, np.array([0.0, 1.0, 2.0]))
