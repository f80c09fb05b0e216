"""Objective hooks for learning a graph dictionary from smooth signals.

The training loss couples three ingredients: signal smoothness over the
instantaneous graphs (evaluated through squared pairwise differences), L1
sparsity plus domain constraints on atoms and activations, and a barrier
keeping instantaneous graphs non-degenerate.  Two barrier variants are
provided: ``log`` penalizes node degrees through an elementwise log barrier
(dual variable = degree matrix), ``spectral`` constrains all instantaneous
Laplacians to a shared eigenbasis and penalizes their pseudo-determinant
(dual variable = Laplacian tensor).
"""

from dataclasses import dataclass, replace
import json
import math

import numpy as np

from . import graphcore
from .graphcore import EdgeSpace, pairwise_sq_dist, validate_coefficients
from .solver import BilinearProblem

VARIANT_LOG = "log"
VARIANT_SPECTRAL = "spectral"
_VARIANTS = (VARIANT_LOG, VARIANT_SPECTRAL)

_BASIS_TOL = 1e-8


@dataclass
class Hyperparams:
    """Regularization weights and structural switches of the training loss.

    ``window_size`` > 1 ties one activation row to that many consecutive
    samples (squared distances are summed within each window).  When the
    window size does not divide the sample count the last, shorter window is
    kept unless ``allow_partial_window`` is off.  Supplying
    ``fixed_coefficients`` freezes the activations (only atoms are learned),
    which realizes hierarchical window models.
    """

    alpha_w_l1: float = 0.0
    alpha_c_l1: float = 0.0
    alpha_ortho: float = 0.0
    alpha_diff: float = 0.0
    window_size: int = 1
    variant: str = VARIANT_LOG
    fixed_coefficients: np.ndarray | None = None
    allow_partial_window: bool = True

    def __post_init__(self):
        for name in ("alpha_w_l1", "alpha_c_l1", "alpha_ortho", "alpha_diff"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if int(self.window_size) < 1:
            raise ValueError("window_size must be a positive integer")
        self.window_size = int(self.window_size)
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.fixed_coefficients is not None:
            self.fixed_coefficients = validate_coefficients(
                self.fixed_coefficients)

    def to_dict(self) -> dict:
        fixed = self.fixed_coefficients
        return {
            "alpha_w_l1": self.alpha_w_l1,
            "alpha_c_l1": self.alpha_c_l1,
            "alpha_ortho": self.alpha_ortho,
            "alpha_diff": self.alpha_diff,
            "window_size": self.window_size,
            "variant": self.variant,
            "fixed_coefficients": None if fixed is None else fixed.tolist(),
            "allow_partial_window": self.allow_partial_window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        kwargs = dict(data)
        if kwargs.get("fixed_coefficients") is not None:
            kwargs["fixed_coefficients"] = np.asarray(
                kwargs["fixed_coefficients"], dtype=float)
        return cls(**kwargs)


def load_hyperparams(path) -> Hyperparams:
    """Read hyperparameters from a flat JSON file."""
    with open(path) as fh:
        return Hyperparams.from_dict(json.load(fh))


@dataclass
class SpectralBasis:
    """Shared orthonormal eigenbasis for the spectral variant."""

    vectors: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        u = np.asarray(self.vectors, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError(f"basis must be square, got shape {u.shape}")
        gram = u.T @ u
        if np.max(np.abs(gram - np.eye(u.shape[0]))) > _BASIS_TOL:
            raise ValueError("basis columns are not orthonormal")
        self.vectors = u


def spectral_basis_from_data(signals: np.ndarray) -> SpectralBasis:
    """Eigenvectors of the empirical covariance, sorted by decreasing variance."""
    x = np.asarray(signals, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two samples to estimate a covariance")
    t = x.shape[0]
    mean = x.mean(axis=0)
    cov = x.T @ x / t - np.outer(mean, mean)
    cov = (cov + cov.T) / 2.0
    lams, vecs = np.linalg.eigh(cov)
    lams, vecs = lams[::-1], vecs[:, ::-1]
    degenerate = lams[0] <= 0 or lams[-1] < 1e-12 * lams[0]
    return SpectralBasis(vectors=np.ascontiguousarray(vecs),
                         degenerate=bool(degenerate))


# ---------------------------------------------------------------------------
# windowing


def window_sums(rows: np.ndarray, window_size: int,
                allow_partial: bool = True) -> np.ndarray:
    """Sum consecutive row blocks; the trailing shorter block is kept."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if window_size < 1:
        raise ValueError("window_size must be positive")
    if window_size == 1:
        return rows.copy()
    if n % window_size and not allow_partial:
        raise ValueError(
            f"window_size {window_size} does not divide {n} samples")
    starts = np.arange(0, n, window_size)
    return np.add.reduceat(rows, starts, axis=0)


def n_coefficient_rows(n_samples: int, window_size: int,
                       allow_partial: bool = True) -> int:
    if window_size < 1:
        raise ValueError("window_size must be positive")
    if n_samples % window_size and not allow_partial:
        raise ValueError(
            f"window_size {window_size} does not divide {n_samples} samples")
    return -(-n_samples // window_size)


def expand_window_rows(coeffs: np.ndarray, window_size: int,
                       n_samples: int) -> np.ndarray:
    """Repeat one activation row per window back out to per-sample rows."""
    coeffs = np.asarray(coeffs, dtype=float)
    out = np.repeat(coeffs, window_size, axis=0)[:n_samples]
    if out.shape[0] != n_samples:
        raise ValueError(
            f"{coeffs.shape[0]} windows of size {window_size} cover at most "
            f"{coeffs.shape[0] * window_size} samples, need {n_samples}")
    return out


# ---------------------------------------------------------------------------
# gradients and proximal maps


def grad_f(weights: np.ndarray, coeffs: np.ndarray, sq_dists: np.ndarray,
           hyper: Hyperparams):
    """Partial gradients of the smooth part (smoothness + atom overlap)."""
    weights = np.asarray(weights, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    sq_dists = np.asarray(sq_dists, dtype=float)
    if coeffs.shape[1] != weights.shape[0] or sq_dists.shape != (
            coeffs.shape[0], weights.shape[1]):
        raise ValueError(
            f"inconsistent shapes: W {weights.shape}, coeffs {coeffs.shape}, "
            f"distances {sq_dists.shape}")
    gw = coeffs.T @ sq_dists
    if hyper.alpha_ortho:
        gw = gw + hyper.alpha_ortho * (weights.sum(axis=0, keepdims=True)
                                       - weights)
    gc = sq_dists @ weights.T
    return gw, gc


def prox_g_w(weights: np.ndarray, step: float, hyper: Hyperparams) -> np.ndarray:
    """Shift by the L1 weight and clip at zero (nonnegativity built in)."""
    if step <= 0:
        raise ValueError("prox step must be positive")
    return np.maximum(np.asarray(weights, dtype=float)
                      - step * hyper.alpha_w_l1, 0.0)


def prox_g_c(coeffs: np.ndarray, step: float, hyper: Hyperparams) -> np.ndarray:
    """Activation prox: optional per-atom total-variation smoothing, then the
    L1 shift, then projection onto the unit box.

    With ``alpha_diff`` > 0 this composition approximates the joint prox (no
    closed form exists); each stage is exact on its own.
    """
    if step <= 0:
        raise ValueError("prox step must be positive")
    out = np.asarray(coeffs, dtype=float)
    if hyper.alpha_diff > 0 and out.shape[0] > 1:
        lam = step * hyper.alpha_diff
        out = np.column_stack([tv1d_denoise(out[:, k], lam)
                               for k in range(out.shape[1])])
    if hyper.alpha_c_l1:
        out = out - step * hyper.alpha_c_l1
    return np.clip(out, 0.0, 1.0)


def tv1d_denoise(values: np.ndarray, lam: float) -> np.ndarray:
    """Exact total-variation proximal map of a 1-D series.

    Solves min_v 0.5*||v - y||^2 + lam * sum_t |v_{t+1} - v_t| by threading
    the taut string through the width-2*lam tube around the running sums of
    y: chords are refined recursively at their most violated tube constraint
    until every segment fits.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 1:
        raise ValueError("expected a 1-D array")
    if lam < 0:
        raise ValueError("TV weight must be nonnegative")
    n = y.size
    if n <= 1 or lam == 0:
        return y.copy()
    sums = np.empty(n + 1)
    sums[0] = 0.0
    np.cumsum(y, out=sums[1:])
    lower = sums - lam
    upper = sums + lam
    lower[0] = upper[0] = 0.0
    lower[n] = upper[n] = sums[n]
    string = np.empty(n + 1)
    string[0] = 0.0
    todo = [(0, 0.0, n, sums[n])]
    while todo:
        a, ra, b, rb = todo.pop()
        string[b] = rb
        if b - a == 1:
            continue
        t = np.arange(a + 1, b)
        chord = ra + (rb - ra) * ((t - a) / (b - a))
        below = lower[t] - chord
        above = chord - upper[t]
        i_low = int(np.argmax(below))
        i_up = int(np.argmax(above))
        if below[i_low] <= 0 and above[i_up] <= 0:
            string[t] = chord
            continue
        if below[i_low] >= above[i_up]:
            mid, rm = a + 1 + i_low, lower[a + 1 + i_low]
        else:
            mid, rm = a + 1 + i_up, upper[a + 1 + i_up]
        todo.append((a, ra, mid, rm))
        todo.append((mid, rm, b, rb))
    return np.diff(string)


def prox_h_conj_log(dual: np.ndarray, sigma: float) -> np.ndarray:
    """Conjugate prox of the elementwise negative-log barrier; output < 0."""
    if sigma <= 0:
        raise ValueError("prox step must be positive")
    dual = np.asarray(dual, dtype=float)
    return (dual - np.sqrt(dual * dual + 4.0 * sigma)) / 2.0


def prox_h_conj_spectral(dual: np.ndarray, gamma: float,
                         basis: SpectralBasis) -> np.ndarray:
    """Conjugate prox of the pseudo-determinant barrier in a fixed eigenbasis.

    Each slice is projected onto the basis (diagonal of U^T Y_t U), the
    eigenvalue map (lam - sqrt(lam^2 + 4*gamma))/2 is applied, and the slice
    is recomposed.
    """
    if gamma <= 0:
        raise ValueError("prox step must be positive")
    if not isinstance(basis, SpectralBasis):
        basis = SpectralBasis(vectors=basis)
    u = basis.vectors
    dual = np.asarray(dual, dtype=float)
    if dual.ndim != 3 or dual.shape[1:] != (u.shape[0], u.shape[0]):
        raise ValueError(
            f"dual tensor shape {dual.shape} does not match basis {u.shape}")
    lams = np.einsum("nk,tnm,mk->tk", u, dual, u)
    mapped = (lams - np.sqrt(lams * lams + 4.0 * gamma)) / 2.0
    return np.einsum("nk,tk,mk->tnm", u, mapped, u)


# ---------------------------------------------------------------------------
# degree dual (log variant)


def degree_dual(coeffs: np.ndarray, weights: np.ndarray,
                es: EdgeSpace) -> np.ndarray:
    """(N, T) node degrees of every instantaneous graph, one column per row."""
    return graphcore.mixed_degrees(coeffs, weights, es).T


def degree_adjoint_coefficients(dual: np.ndarray, weights: np.ndarray,
                                es: EdgeSpace) -> np.ndarray:
    """Adjoint of the degree map into activation space: (Y^T D) W^T."""
    return (np.asarray(dual, dtype=float).T @ es.degree_operator) @ \
        np.asarray(weights, dtype=float).T


def degree_adjoint_weights(coeffs: np.ndarray, dual: np.ndarray,
                           es: EdgeSpace) -> np.ndarray:
    """Adjoint of the degree map into dictionary space: coeffs^T (Y^T D)."""
    return np.asarray(coeffs, dtype=float).T @ \
        (np.asarray(dual, dtype=float).T @ es.degree_operator)


# ---------------------------------------------------------------------------
# problem assembly


def tree_coefficients(n_windows: int, n_levels: int) -> np.ndarray:
    """Fixed activations of a binary hierarchy over windows.

    Level 0 is a root atom active everywhere; each next level splits every
    block in two.  Returns an (n_windows, 2**n_levels - 1) binary matrix.
    """
    if n_windows < 1 or n_levels < 1:
        raise ValueError("need at least one window and one level")
    n_atoms = 2 ** n_levels - 1
    out = np.zeros((n_windows, n_atoms))
    atom = 0
    for level in range(n_levels):
        blocks = np.array_split(np.arange(n_windows), 2 ** level)
        for block in blocks:
            out[block, atom] = 1.0
            atom += 1
    return out


def build_problem(signals: np.ndarray, n_atoms: int, hyper: Hyperparams,
                  es: EdgeSpace | None = None) -> BilinearProblem:
    """Wire the training loss for the given signals into solver hooks.

    The returned hooks capture immutable copies of everything derived from
    the data (windowed squared distances, spectral basis), so concurrent
    solves are safe.
    """
    x = np.asarray(signals, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a (T, N) signal matrix, got {x.shape}")
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    es = es if es is not None else EdgeSpace(x.shape[1])
    if es.n_nodes != x.shape[1]:
        raise ValueError(f"signals have {x.shape[1]} nodes, expected {es}")
    sq = window_sums(pairwise_sq_dist(x, es), hyper.window_size,
                     hyper.allow_partial_window)
    n_rows = sq.shape[0]

    fixed = hyper.fixed_coefficients
    if fixed is not None and fixed.shape != (n_rows, n_atoms):
        raise ValueError(
            f"fixed coefficients shape {fixed.shape} does not match "
            f"({n_rows}, {n_atoms})")

    def hook_grad_fw(weights, coeffs):
        return grad_f(weights, coeffs, sq, hyper)[0]

    def hook_grad_fc(weights, coeffs):
        return grad_f(weights, coeffs, sq, hyper)[1]

    def hook_prox_gw(weights, step):
        return prox_g_w(weights, step, hyper)

    if fixed is not None:
        def hook_prox_gc(coeffs, step):
            return fixed
    else:
        def hook_prox_gc(coeffs, step):
            return prox_g_c(coeffs, step, hyper)

    if hyper.variant == VARIANT_LOG:
        def op(coeffs, weights):
            return degree_dual(coeffs, weights, es)

        def adj_c(dual, weights):
            return degree_adjoint_coefficients(dual, weights, es)

        def adj_w(coeffs, dual):
            return degree_adjoint_weights(coeffs, dual, es)

        prox_h = prox_h_conj_log
        basis = None
    else:
        basis = spectral_basis_from_data(x)

        def op(coeffs, weights):
            return graphcore.bilinear_laplacian(coeffs, weights, es)

        def adj_c(dual, weights):
            return graphcore.adjoint_wrt_coefficients(dual, weights, es)

        def adj_w(coeffs, dual):
            return graphcore.adjoint_wrt_weights(coeffs, dual, es)

        def prox_h(dual, sigma):
            return prox_h_conj_spectral(dual, sigma, basis)

    def objective_eval(weights, coeffs):
        return _objective_terms(weights, coeffs, sq, hyper, es)

    return BilinearProblem(
        prox_gw=hook_prox_gw, prox_gc=hook_prox_gc,
        grad_fw=hook_grad_fw, grad_fc=hook_grad_fc,
        prox_h_conj=prox_h, bilinear_op=op,
        adjoint_wrt_coefficients=adj_c, adjoint_wrt_weights=adj_w,
        objective_eval=objective_eval)


def freeze_dictionary(problem: BilinearProblem,
                      weights: np.ndarray) -> BilinearProblem:
    """Pin the dictionary (only activations are updated); used for encoding
    new signals with already-learned atoms."""
    pinned = np.asarray(weights, dtype=float)
    return replace(problem, prox_gw=lambda w, step: pinned)


def _objective_terms(weights, coeffs, sq_dists, hyper, es):
    weights = np.asarray(weights, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if np.any(weights < 0):
        return math.inf
    if np.any(coeffs < 0) or np.any(coeffs > 1):
        return math.inf
    value = hyper.alpha_w_l1 * float(np.abs(weights).sum())
    value += hyper.alpha_c_l1 * float(np.abs(coeffs).sum())
    if hyper.alpha_diff and coeffs.shape[0] > 1:
        value += hyper.alpha_diff * float(
            np.abs(np.diff(coeffs, axis=0)).sum())
    value += float(((coeffs @ weights) * sq_dists).sum())
    if hyper.alpha_ortho:
        # overlap over unordered atom pairs, the convention matching grad_f
        gram = weights @ weights.T
        value += 0.5 * hyper.alpha_ortho * float(gram.sum() - np.trace(gram))
    if hyper.variant == VARIANT_LOG:
        degrees = graphcore.mixed_degrees(coeffs, weights, es)
        if np.any(degrees <= 0):
            return math.inf
        value -= float(np.log(degrees).sum())
    else:
        laps = graphcore.bilinear_laplacian(coeffs, weights, es)
        for slice_t in laps:
            lams = np.linalg.eigvalsh(slice_t)
            keep = lams > graphcore.RELATIVE_EIG_CUTOFF * max(lams.max(), 0.0)
            if not np.any(keep):
                return math.inf
            value -= float(np.log(lams[keep]).sum())
    return value


def objective_value(weights, coeffs, signals, hyper: Hyperparams,
                    es: EdgeSpace | None = None) -> float:
    """Full training loss at (W, coeffs); infeasible points evaluate to +inf.

    In window mode the activation matrix has one row per window and the
    smoothness term uses within-window sums, matching what the solver
    optimizes.
    """
    x = np.asarray(signals, dtype=float)
    es = es if es is not None else EdgeSpace(x.shape[1])
    sq = window_sums(pairwise_sq_dist(x, es), hyper.window_size,
                     hyper.allow_partial_window)
    return _objective_terms(weights, coeffs, sq, hyper, es)


def sort_atoms_by_mass(weights: np.ndarray, coeffs: np.ndarray):
    """Order atoms by decreasing total activation mass (for reporting)."""
    weights = np.asarray(weights, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    mass = coeffs.sum(axis=0)
    order = np.argsort(-mass, kind="stable")
    return weights[order], coeffs[:, order], order
