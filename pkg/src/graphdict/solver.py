"""Bilinear primal-dual splitting over pluggable objective hooks.

Minimizes g_w(W) + g_c(D) + f(W, D) + h(B(D, W)) where B is a bilinear
coupling map with two partial adjoints.  One iteration updates the primal
blocks in parallel and then the dual with over-relaxed primals:

    W+ = prox_gw(W - tau_w * (adj_w(D, Y) + grad_fw(W, D)))
    D+ = prox_gc(D - tau_c * (adj_c(Y, W) + grad_fc(W, D)))
    Y+ = prox_h_conj(Y + sigma * B(2 D+ - D, 2 W+ - W))

With one primal block frozen the coupling is linear and the scheme reduces
to the classic single-operator primal-dual iteration.  The bilinear problem
is nonconvex, so no convergence guarantee is claimed; non-finite iterates
abort loudly with the trace attached.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import graphcore

_REL_EPS = 1e-12


class DivergenceError(RuntimeError):
    """An iterate turned non-finite; carries the state reached so far."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass
class BilinearProblem:
    """Objective hooks for the splitting iteration.

    All hooks must be pure functions of their inputs.  The coupling map and
    its adjoints default to the full Laplacian-tensor operators; models with
    a cheaper dual (e.g. node degrees) supply their own triple.
    """

    prox_gw: callable = None          # (W, tau) -> W
    prox_gc: callable = None          # (D, tau) -> D
    grad_fw: callable = None          # (W, D) -> like W
    grad_fc: callable = None          # (W, D) -> like D
    prox_h_conj: callable = None      # (dual, sigma) -> dual
    bilinear_op: callable = None      # (D, W) -> dual
    adjoint_wrt_coefficients: callable = None  # (dual, W) -> like D
    adjoint_wrt_weights: callable = None       # (D, dual) -> like W
    objective_eval: callable = None   # (W, D) -> float, diagnostics only

    def __post_init__(self):
        ident = lambda x, _step: x
        zero_w = lambda w, d: np.zeros_like(w)
        zero_c = lambda w, d: np.zeros_like(d)
        if self.prox_gw is None:
            self.prox_gw = ident
        if self.prox_gc is None:
            self.prox_gc = ident
        if self.grad_fw is None:
            self.grad_fw = zero_w
        if self.grad_fc is None:
            self.grad_fc = zero_c
        if self.prox_h_conj is None:
            self.prox_h_conj = ident
        if self.bilinear_op is None:
            self.bilinear_op = graphcore.bilinear_laplacian
        if self.adjoint_wrt_coefficients is None:
            self.adjoint_wrt_coefficients = graphcore.adjoint_wrt_coefficients
        if self.adjoint_wrt_weights is None:
            self.adjoint_wrt_weights = graphcore.adjoint_wrt_weights


@dataclass
class SolverParams:
    tau_w: float
    tau_c: float
    sigma: float
    max_iter: int = 500
    rel_tol: float = 1e-6
    lipschitz_estimate: float | None = None

    def __post_init__(self):
        if min(self.tau_w, self.tau_c, self.sigma) <= 0:
            raise ValueError("step parameters must be positive")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class SolverState:
    weights: np.ndarray
    coeffs: np.ndarray
    dual: np.ndarray
    iteration: int = 0
    res_weights: list = field(default_factory=list)
    res_coeffs: list = field(default_factory=list)
    res_dual: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    converged: bool = False


def initial_state(prob: BilinearProblem, n_samples: int, n_atoms: int,
                  n_edges: int, rng: np.random.Generator) -> SolverState:
    """Feasible start: uniform atoms scaled to unit L1 mass, flat coefficients."""
    w0 = rng.random((n_atoms, n_edges))
    w0 /= np.maximum(w0.sum(axis=1, keepdims=True), _REL_EPS)
    d0 = np.full((n_samples, n_atoms), 1.0 / n_atoms)
    y0 = prob.bilinear_op(d0, w0)
    return SolverState(weights=w0, coeffs=d0, dual=np.asarray(y0, dtype=float))


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(old)), _REL_EPS)
    return float(np.linalg.norm(new - old)) / denom


def _iterate(prob, params, weights, coeffs, dual):
    w_next = prob.prox_gw(
        weights - params.tau_w * (prob.adjoint_wrt_weights(coeffs, dual)
                                  + prob.grad_fw(weights, coeffs)),
        params.tau_w)
    c_next = prob.prox_gc(
        coeffs - params.tau_c * (prob.adjoint_wrt_coefficients(dual, weights)
                                 + prob.grad_fc(weights, coeffs)),
        params.tau_c)
    y_next = prob.prox_h_conj(
        dual + params.sigma * prob.bilinear_op(2 * c_next - coeffs,
                                               2 * w_next - weights),
        params.sigma)
    return w_next, c_next, y_next


def _all_finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def step(state: SolverState, prob: BilinearProblem,
         params: SolverParams) -> SolverState:
    """One splitting iteration; returns a new state with residuals appended."""
    w_next, c_next, y_next = _iterate(prob, params, state.weights,
                                      state.coeffs, state.dual)
    new = SolverState(
        weights=w_next, coeffs=c_next, dual=y_next,
        iteration=state.iteration + 1,
        res_weights=state.res_weights + [_rel_change(w_next, state.weights)],
        res_coeffs=state.res_coeffs + [_rel_change(c_next, state.coeffs)],
        res_dual=state.res_dual + [_rel_change(y_next, state.dual)],
        objective_trace=list(state.objective_trace),
        converged=state.converged)
    if not _all_finite(w_next, c_next, y_next):
        raise DivergenceError(
            f"non-finite iterate at iteration {new.iteration}", new)
    if prob.objective_eval is not None:
        new.objective_trace.append(float(prob.objective_eval(w_next, c_next)))
    return new


def solve(prob: BilinearProblem, params: SolverParams,
          init: SolverState) -> SolverState:
    """Iterate until every block stalls relative to rel_tol or max_iter.

    Convergence requires the relative change of both primal blocks and of the
    dual to drop below rel_tol; primal blocks alone can stall transiently
    (e.g. pinned at a constraint boundary) while the dual still drifts.
    Reaching max_iter returns a state with ``converged=False``; only
    non-finite iterates raise.
    """
    state = SolverState(
        weights=np.asarray(init.weights, dtype=float),
        coeffs=np.asarray(init.coeffs, dtype=float),
        dual=np.asarray(init.dual, dtype=float),
        iteration=init.iteration,
        res_weights=list(init.res_weights),
        res_coeffs=list(init.res_coeffs),
        res_dual=list(init.res_dual),
        objective_trace=list(init.objective_trace))
    for _ in range(params.max_iter):
        w_next, c_next, y_next = _iterate(prob, params, state.weights,
                                          state.coeffs, state.dual)
        rw = _rel_change(w_next, state.weights)
        rc = _rel_change(c_next, state.coeffs)
        ry = _rel_change(y_next, state.dual)
        state.weights, state.coeffs, state.dual = w_next, c_next, y_next
        state.iteration += 1
        state.res_weights.append(rw)
        state.res_coeffs.append(rc)
        state.res_dual.append(ry)
        if not _all_finite(w_next, c_next, y_next):
            raise DivergenceError(
                f"non-finite iterate at iteration {state.iteration}", state)
        if prob.objective_eval is not None:
            state.objective_trace.append(
                float(prob.objective_eval(w_next, c_next)))
        if max(rw, rc, ry) < params.rel_tol:
            state.converged = True
            break
    return state


def operator_norm(apply_op, apply_adjoint, probe: np.ndarray,
                  n_iter: int = 50) -> float:
    """Power-iteration estimate of the spectral norm of a linear map."""
    v = np.asarray(probe, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0:
        return 0.0
    est = 0.0
    for _ in range(n_iter):
        v = v / max(norm, _REL_EPS)
        v = apply_adjoint(apply_op(v))
        norm = float(np.linalg.norm(v))
        est = np.sqrt(norm)
        if norm == 0:
            break
    return est


def coupling_norm(prob: BilinearProblem, weights0: np.ndarray,
                  coeffs0: np.ndarray, n_iter: int = 50,
                  seed: int = 0) -> float:
    """Largest operator norm of the two linearizations of the coupling map."""
    rng = np.random.default_rng(seed)
    norm_w = operator_norm(
        lambda w: prob.bilinear_op(coeffs0, w),
        lambda y: prob.adjoint_wrt_weights(coeffs0, y),
        rng.standard_normal(np.shape(weights0)), n_iter)
    norm_c = operator_norm(
        lambda d: prob.bilinear_op(d, weights0),
        lambda y: prob.adjoint_wrt_coefficients(y, weights0),
        rng.standard_normal(np.shape(coeffs0)), n_iter)
    return max(norm_w, norm_c)


def scaled_params(params: SolverParams, prob: BilinearProblem,
                  weights0: np.ndarray, coeffs0: np.ndarray,
                  n_iter: int = 50, seed: int = 0) -> SolverParams:
    """Rescale steps by the coupling norm at the initial point.

    Divides tau_w, tau_c, sigma by the power-iteration norm estimate, then, if
    a Lipschitz bound beta for grad f is supplied, additionally caps the
    primal steps so tau * (beta/2 + sigma * norm^2) stays below one.
    """
    rho = max(coupling_norm(prob, weights0, coeffs0, n_iter, seed), _REL_EPS)
    tau_w, tau_c, sigma = (params.tau_w / rho, params.tau_c / rho,
                           params.sigma / rho)
    beta = params.lipschitz_estimate
    if beta is not None and beta > 0:
        cap = 0.99 / (beta / 2.0 + sigma * rho * rho)
        tau_w = min(tau_w, cap)
        tau_c = min(tau_c, cap)
    return replace(params, tau_w=tau_w, tau_c=tau_c, sigma=sigma)


def export_trace_csv(state: SolverState, path) -> None:
    """Write the convergence trace: iteration, primal residuals, objective."""
    lines = ["iteration,res_weights,res_coeffs,objective"]
    objs = state.objective_trace
    for i in range(len(state.res_weights)):
        obj = format(objs[i], ".17g") if i < len(objs) else "nan"
        lines.append(f"{i + 1},{state.res_weights[i]:.17g},"
                     f"{state.res_coeffs[i]:.17g},{obj}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
