import numpy as np
import pytest

from graphdict import graphcore, solver
from graphdict.graphcore import EdgeSpace, laplacian_from_weights
from graphdict.model import prox_h_conj_log
from graphdict.solver import (BilinearProblem, DivergenceError, SolverParams,
                              SolverState, coupling_norm, initial_state,
                              scaled_params, solve, step)


def identity_problem():
    return BilinearProblem()  # all proxes identity, gradients zero


def test_fixed_point_with_zero_weights():
    # W = 0 makes the coupling vanish, so the identity problem sits still
    prob = identity_problem()
    state = SolverState(weights=np.zeros((2, 6)),
                        coeffs=np.full((3, 2), 0.4),
                        dual=np.zeros((3, 4, 4)))
    out = step(state, prob, SolverParams(0.5, 0.5, 0.5))
    assert out.iteration == 1
    np.testing.assert_array_equal(out.weights, state.weights)
    np.testing.assert_array_equal(out.coeffs, state.coeffs)
    np.testing.assert_array_equal(out.dual, state.dual)
    assert out.res_weights == [0.0] and out.res_coeffs == [0.0]


def degree_problem(sq_sum, es, coeffs_fixed):
    """Single-dictionary smoothness + degree log barrier, activations pinned."""
    return BilinearProblem(
        prox_gw=lambda w, t: np.maximum(w, 0.0),
        prox_gc=lambda d, t: coeffs_fixed,
        grad_fw=lambda w, d: np.broadcast_to(sq_sum, w.shape),
        prox_h_conj=prox_h_conj_log,
        bilinear_op=lambda d, w: graphcore.mixed_degrees(d, w, es).T,
        adjoint_wrt_coefficients=lambda y, w:
            (y.T @ es.degree_operator) @ w.T,
        adjoint_wrt_weights=lambda d, y: d.T @ (y.T @ es.degree_operator))


def test_analytic_fixed_point_two_nodes():
    # minimize w * z - 2 log w with z = 1: optimum w = 2, dual = -1/deg
    es = EdgeSpace(2)
    coeffs = np.ones((1, 1))
    prob = degree_problem(np.array([1.0]), es, coeffs)
    state = SolverState(weights=np.array([[2.0]]), coeffs=coeffs,
                        dual=np.array([[-0.5], [-0.5]]))
    out = step(state, prob, SolverParams(0.5, 0.5, 0.5))
    np.testing.assert_allclose(out.weights, [[2.0]], atol=1e-12)
    np.testing.assert_allclose(out.dual, [[-0.5], [-0.5]], atol=1e-12)


def test_frozen_coeffs_projected_gradient_single_edge():
    # with h absent and activations pinned, the W update is one projected
    # gradient step, checked against the hand-computed value
    sq = np.array([0.7])
    es = EdgeSpace(2)
    prob = BilinearProblem(
        prox_gw=lambda w, t: np.maximum(w, 0.0),
        prox_gc=lambda d, t: np.ones((1, 1)),
        grad_fw=lambda w, d: np.broadcast_to(sq, w.shape),
        prox_h_conj=lambda y, s: np.zeros_like(y),
        bilinear_op=lambda d, w: graphcore.mixed_degrees(d, w, es).T,
        adjoint_wrt_coefficients=lambda y, w:
            (y.T @ es.degree_operator) @ w.T,
        adjoint_wrt_weights=lambda d, y: d.T @ (y.T @ es.degree_operator))
    tau = 0.3
    state = SolverState(weights=np.array([[1.0]]), coeffs=np.ones((1, 1)),
                        dual=np.zeros((2, 1)))
    out = step(state, prob, SolverParams(tau, tau, tau))
    np.testing.assert_allclose(out.weights, [[1.0 - tau * 0.7]], atol=1e-15)
    out2 = step(out, prob, SolverParams(10.0, 10.0, 10.0))
    np.testing.assert_array_equal(out2.weights, [[0.0]])  # projection binds


def test_zero_data_l1_shrinks_to_zero_quickly():
    alpha = 1.0
    prob = BilinearProblem(
        prox_gw=lambda w, t: np.maximum(w - t * alpha, 0.0),
        prox_gc=lambda d, t: np.clip(d, 0.0, 1.0),
        prox_h_conj=lambda y, s: np.zeros_like(y))
    init = SolverState(weights=np.full((2, 3), 0.8),
                       coeffs=np.full((4, 2), 1.7),
                       dual=np.zeros((4, 3, 3)))
    out = solve(prob, SolverParams(1.0, 1.0, 1.0, max_iter=2, rel_tol=1e-9),
                init)
    np.testing.assert_array_equal(out.weights, np.zeros((2, 3)))
    np.testing.assert_array_equal(out.coeffs, np.ones((4, 2)))


def test_linear_reduction_matches_direct_transcription():
    # with activations frozen the iteration must coincide with the classic
    # single-operator primal-dual scheme, transcribed independently below
    rng = np.random.default_rng(42)
    t, k, n = 3, 2, 5
    es = EdgeSpace(n)
    coeffs0 = rng.random((t, k))
    target = rng.random((k, es.n_edges))
    alpha = 0.05

    def prox_gw(w, tau):
        return np.maximum(w - tau * alpha, 0.0)

    def grad_fw(w, d):
        return w - target

    prob = BilinearProblem(
        prox_gw=prox_gw,
        prox_gc=lambda d, tau: coeffs0,
        grad_fw=grad_fw,
        prox_h_conj=prox_h_conj_log,
        bilinear_op=lambda d, w: graphcore.bilinear_laplacian(d, w, es),
        adjoint_wrt_coefficients=lambda y, w:
            graphcore.adjoint_wrt_coefficients(y, w, es),
        adjoint_wrt_weights=lambda d, y:
            graphcore.adjoint_wrt_weights(d, y, es))

    w0 = rng.random((k, es.n_edges))
    y0 = graphcore.bilinear_laplacian(coeffs0, w0, es)
    params = SolverParams(0.05, 0.05, 0.05, max_iter=200, rel_tol=1e-14)

    state = SolverState(weights=w0.copy(), coeffs=coeffs0.copy(),
                        dual=y0.copy())

    # straight-line transcription: x+ = prox(x - tau(grad + A* y));
    # y+ = prox_h*(y + sigma A(2x+ - x)), with A = coupling at frozen coeffs
    x, y = w0.copy(), y0.copy()
    for it in range(200):
        state = step(state, prob, params)
        x_new = prox_gw(
            x - params.tau_w * (graphcore.adjoint_wrt_weights(coeffs0, y, es)
                                + grad_fw(x, coeffs0)), params.tau_w)
        y = prox_h_conj_log(
            y + params.sigma * graphcore.bilinear_laplacian(
                coeffs0, 2 * x_new - x, es), params.sigma)
        x = x_new
        assert np.max(np.abs(state.weights - x)) < 1e-12, f"iteration {it}"
        assert np.max(np.abs(state.dual - y)) < 1e-12, f"iteration {it}"
        np.testing.assert_array_equal(state.coeffs, coeffs0)


def test_max_iter_zero_returns_init():
    prob = identity_problem()
    init = SolverState(weights=np.ones((1, 3)), coeffs=np.ones((2, 1)),
                       dual=np.zeros((2, 3, 3)))
    out = solve(prob, SolverParams(1.0, 1.0, 1.0, max_iter=0), init)
    assert out.iteration == 0 and not out.converged
    np.testing.assert_array_equal(out.weights, init.weights)


def test_divergence_raises_with_trace():
    prob = BilinearProblem(grad_fw=lambda w, d: np.full_like(w, np.nan))
    init = SolverState(weights=np.ones((1, 3)), coeffs=np.full((2, 1), 0.5),
                       dual=np.zeros((2, 3, 3)))
    with pytest.raises(DivergenceError) as err:
        solve(prob, SolverParams(1.0, 1.0, 1.0, max_iter=5), init)
    assert err.value.state.iteration == 1
    assert len(err.value.state.res_weights) == 1


def test_residual_lengths_track_iterations():
    prob = identity_problem()
    init = SolverState(weights=np.ones((1, 3)), coeffs=np.full((2, 1), 0.5),
                       dual=np.zeros((2, 3, 3)))
    out = solve(prob, SolverParams(1.0, 1.0, 1.0, max_iter=7, rel_tol=1e-30),
                init)
    # identity problem with nonzero weights moves the dual until it matches
    assert len(out.res_weights) == out.iteration
    assert len(out.res_coeffs) == out.iteration
    assert all(r >= 0 for r in out.res_weights + out.res_coeffs)


def test_initial_state_conventions():
    rng = np.random.default_rng(1)
    prob = identity_problem()
    st = initial_state(prob, n_samples=6, n_atoms=3, n_edges=10, rng=rng)
    np.testing.assert_allclose(st.weights.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(st.coeffs, np.full((6, 3), 1 / 3))
    np.testing.assert_allclose(
        st.dual, graphcore.bilinear_laplacian(st.coeffs, st.weights),
        atol=1e-14)


def test_coupling_norm_matches_dense_operator():
    rng = np.random.default_rng(2)
    t, k, n = 3, 2, 4
    es = EdgeSpace(n)
    coeffs0 = rng.random((t, k))
    w0 = rng.random((k, es.n_edges))
    prob = identity_problem()

    def dense_norm(apply_op, in_shape):
        size = int(np.prod(in_shape))
        cols = []
        for i in range(size):
            e = np.zeros(size)
            e[i] = 1.0
            cols.append(apply_op(e.reshape(in_shape)).ravel())
        return np.linalg.svd(np.stack(cols, axis=1), compute_uv=False)[0]

    expected = max(
        dense_norm(lambda w: graphcore.bilinear_laplacian(coeffs0, w, es),
                   w0.shape),
        dense_norm(lambda d: graphcore.bilinear_laplacian(d, w0, es),
                   coeffs0.shape))
    est = coupling_norm(prob, w0, coeffs0, n_iter=200, seed=0)
    assert abs(est - expected) / expected < 1e-6


def test_scaled_params_divide_by_norm():
    rng = np.random.default_rng(3)
    es = EdgeSpace(4)
    coeffs0 = rng.random((3, 2))
    w0 = rng.random((2, es.n_edges))
    prob = identity_problem()
    base = SolverParams(0.9, 0.8, 0.7)
    scaled = scaled_params(base, prob, w0, coeffs0, n_iter=100, seed=0)
    rho = coupling_norm(prob, w0, coeffs0, n_iter=100, seed=0)
    assert scaled.tau_w == pytest.approx(0.9 / rho)
    assert scaled.tau_c == pytest.approx(0.8 / rho)
    assert scaled.sigma == pytest.approx(0.7 / rho)


def test_scaled_params_lipschitz_cap():
    prob = identity_problem()
    rng = np.random.default_rng(4)
    es = EdgeSpace(4)
    coeffs0 = rng.random((3, 2))
    w0 = rng.random((2, es.n_edges))
    base = SolverParams(0.9, 0.9, 0.9, lipschitz_estimate=1e6)
    scaled = scaled_params(base, prob, w0, coeffs0, seed=0)
    rho = coupling_norm(prob, w0, coeffs0, seed=0)
    assert scaled.tau_w <= 0.99 / (5e5 + scaled.sigma * rho * rho) + 1e-15


def test_trace_csv_export(tmp_path):
    prob = BilinearProblem(objective_eval=lambda w, d: float(w.sum()))
    init = SolverState(weights=np.ones((1, 1)), coeffs=np.full((1, 1), 0.5),
                       dual=np.zeros((1, 2, 2)))
    out = solve(prob, SolverParams(1.0, 1.0, 1.0, max_iter=3, rel_tol=1e-30),
                init)
    path = tmp_path / "trace.csv"
    solver.export_trace_csv(out, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,res_weights,res_coeffs,objective"
    assert len(lines) == 1 + out.iteration
    assert len(out.objective_trace) == out.iteration


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SolverParams(1.0, 1.0, 1.0, rel_tol=0.0)


def test_prox_nonexpansive_probes():
    # the model proxes plugged into problems must be nonexpansive; probe the
    # defaults used throughout the tests
    rng = np.random.default_rng(5)
    from graphdict.model import Hyperparams, prox_g_c, prox_g_w
    hyper = Hyperparams(alpha_w_l1=0.3, alpha_c_l1=0.2, alpha_diff=0.4)
    for _ in range(50):
        a, b = rng.standard_normal((2, 4, 3))
        assert np.linalg.norm(prox_g_w(a, 0.7, hyper) - prox_g_w(b, 0.7, hyper)) \
            <= np.linalg.norm(a - b) + 1e-12
        assert np.linalg.norm(prox_g_c(a, 0.7, hyper) - prox_g_c(b, 0.7, hyper)) \
            <= np.linalg.norm(a - b) + 1e-12
        y1, y2 = rng.standard_normal((2, 3, 5))
        from graphdict.model import prox_h_conj_log
        assert np.linalg.norm(prox_h_conj_log(y1, 0.7) - prox_h_conj_log(y2, 0.7)) \
            <= np.linalg.norm(y1 - y2) + 1e-12
