"""Edge-space indexing, Laplacian operators and the bilinear graph mixing map.

Undirected weighted graphs on N nodes are stored as vectors of length
E = N(N-1)/2 over a fixed enumeration of node pairs (row-major upper
triangle).  A dictionary of K graphs is a nonnegative (K, E) matrix, and
per-sample activations form a (T, K) matrix with entries in [0, 1].  Mixing
the two yields one instantaneous Laplacian per sample; this module provides
that bilinear map, its two partial adjoints, and the supporting operators
(degrees, pairwise distances, spectral graph filters).
"""

from functools import cached_property
import math

import numpy as np

EDGE_ORDER_TAG = "utri-rowmajor-v1"

# Relative eigenvalue cutoff below which Laplacian modes count as null when
# building pseudo-inverse filters.
RELATIVE_EIG_CUTOFF = 1e-10


class EdgeSpace:
    """Canonical bijection between unordered node pairs and edge slots.

    Pairs (i, j) with i < j are enumerated row-major over the strict upper
    triangle: (0,1), (0,2), ..., (0,N-1), (1,2), ...
    """

    def __init__(self, n_nodes: int):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ValueError(f"need at least one node, got {n_nodes}")
        self.n_nodes = n_nodes
        self.n_edges = n_nodes * (n_nodes - 1) // 2

    @classmethod
    def from_edge_count(cls, n_edges: int) -> "EdgeSpace":
        """Recover the node count from an edge-vector length."""
        n_edges = int(n_edges)
        n_nodes = (1 + math.isqrt(1 + 8 * n_edges)) // 2
        if n_nodes * (n_nodes - 1) // 2 != n_edges:
            raise ValueError(f"{n_edges} is not a valid pair count N(N-1)/2")
        return cls(max(n_nodes, 1))

    def index(self, i: int, j: int) -> int:
        """Edge slot of the unordered pair {i, j}."""
        n = self.n_nodes
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"node ids ({i}, {j}) out of range for N={n}")
        if i == j:
            raise ValueError(f"self-loop ({i}, {i}) has no edge slot")
        if i > j:
            i, j = j, i
        return i * (2 * n - i - 1) // 2 + (j - i - 1)

    @cached_property
    def pair_rows(self) -> np.ndarray:
        return np.triu_indices(self.n_nodes, 1)[0]

    @cached_property
    def pair_cols(self) -> np.ndarray:
        return np.triu_indices(self.n_nodes, 1)[1]

    @cached_property
    def degree_operator(self) -> np.ndarray:
        """(N, E) incidence-like matrix: (D w)_n is the weighted degree of n."""
        d = np.zeros((self.n_nodes, self.n_edges))
        e = np.arange(self.n_edges)
        d[self.pair_rows, e] = 1.0
        d[self.pair_cols, e] = 1.0
        return d

    def __repr__(self):
        return f"EdgeSpace(n_nodes={self.n_nodes})"

    def __eq__(self, other):
        return isinstance(other, EdgeSpace) and other.n_nodes == self.n_nodes

    def __hash__(self):
        return hash(("EdgeSpace", self.n_nodes))


def _edge_space_for(vec_len: int, es: EdgeSpace | None) -> EdgeSpace:
    if es is None:
        return EdgeSpace.from_edge_count(vec_len)
    if es.n_edges != vec_len:
        raise ValueError(f"edge dimension {vec_len} does not match {es}")
    return es


def validate_weights(w: np.ndarray) -> np.ndarray:
    """Check a weight vector or dictionary matrix for nonnegative entries."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return w


def validate_coefficients(delta: np.ndarray) -> np.ndarray:
    """Check an activation matrix for entries in [0, 1]."""
    delta = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(delta)):
        raise ValueError("coefficients must be finite")
    if np.any(delta < 0) or np.any(delta > 1):
        raise ValueError("coefficients must lie in [0, 1]")
    return delta


def degree_map(w: np.ndarray, es: EdgeSpace | None = None) -> np.ndarray:
    """Weighted node degrees of an edge-weight vector."""
    w = np.asarray(w, dtype=float)
    es = _edge_space_for(w.shape[-1], es)
    return w @ es.degree_operator.T


def laplacian_from_weights(w: np.ndarray, es: EdgeSpace | None = None) -> np.ndarray:
    """Combinatorial Laplacian (degree matrix minus adjacency) of a weight vector."""
    w = np.asarray(w, dtype=float)
    es = _edge_space_for(w.shape[0], es)
    n = es.n_nodes
    lap = np.zeros((n, n))
    lap[es.pair_rows, es.pair_cols] = -w
    lap[es.pair_cols, es.pair_rows] = -w
    lap[np.arange(n), np.arange(n)] = degree_map(w, es)
    return lap


def mixed_degrees(delta: np.ndarray, weights: np.ndarray,
                  es: EdgeSpace | None = None) -> np.ndarray:
    """(T, N) node degrees of every instantaneous graph delta_t . W."""
    delta = np.asarray(delta, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if delta.shape[1] != weights.shape[0]:
        raise ValueError(
            f"atom counts differ: coefficients have {delta.shape[1]}, "
            f"dictionary has {weights.shape[0]}")
    es = _edge_space_for(weights.shape[1], es)
    return (delta @ weights) @ es.degree_operator.T


def bilinear_laplacian(delta: np.ndarray, weights: np.ndarray,
                       es: EdgeSpace | None = None) -> np.ndarray:
    """Stacked instantaneous Laplacians of the mixed graphs.

    Slice t equals ``laplacian_from_weights((delta @ weights)[t])``; the map
    is linear in ``delta`` for fixed ``weights`` and vice versa.
    """
    delta = np.asarray(delta, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if delta.shape[1] != weights.shape[0]:
        raise ValueError(
            f"atom counts differ: coefficients have {delta.shape[1]}, "
            f"dictionary has {weights.shape[0]}")
    es = _edge_space_for(weights.shape[1], es)
    n = es.n_nodes
    mixed = delta @ weights
    out = np.zeros((delta.shape[0], n, n))
    out[:, es.pair_rows, es.pair_cols] = -mixed
    out[:, es.pair_cols, es.pair_rows] = -mixed
    out[:, np.arange(n), np.arange(n)] = mixed @ es.degree_operator.T
    return out


def dual_difference(dual: np.ndarray, es: EdgeSpace | None = None) -> np.ndarray:
    """(T, E) edge-space reduction of a (T, N, N) dual tensor.

    Entry (t, e(n,m)) is ``Y[t,n,n] + Y[t,m,m] - Y[t,n,m] - Y[t,m,n]``; no
    symmetry of the dual is assumed.
    """
    dual = np.asarray(dual, dtype=float)
    if dual.ndim != 3 or dual.shape[1] != dual.shape[2]:
        raise ValueError(f"expected a (T, N, N) tensor, got shape {dual.shape}")
    n = dual.shape[1]
    if es is not None and es.n_nodes != n:
        raise ValueError(f"tensor has {n} nodes, expected {es.n_nodes}")
    es = es if es is not None else EdgeSpace(n)
    diag = dual[:, np.arange(n), np.arange(n)]
    r, c = es.pair_rows, es.pair_cols
    return diag[:, r] + diag[:, c] - dual[:, r, c] - dual[:, c, r]


def adjoint_wrt_coefficients(dual: np.ndarray, weights: np.ndarray,
                             es: EdgeSpace | None = None) -> np.ndarray:
    """Partial adjoint of the bilinear map into coefficient space.

    Satisfies <Y, L(delta, W)> == <delta, adjoint_wrt_coefficients(Y, W)>.
    """
    weights = np.asarray(weights, dtype=float)
    return dual_difference(dual, es) @ weights.T


def adjoint_wrt_weights(delta: np.ndarray, dual: np.ndarray,
                        es: EdgeSpace | None = None) -> np.ndarray:
    """Partial adjoint of the bilinear map into dictionary space.

    Satisfies <Y, L(delta, W)> == <W, adjoint_wrt_weights(delta, Y)>.
    """
    delta = np.asarray(delta, dtype=float)
    dy = dual_difference(dual, es)
    if delta.shape[0] != dy.shape[0]:
        raise ValueError(
            f"sample counts differ: coefficients have {delta.shape[0]}, "
            f"dual has {dy.shape[0]}")
    return delta.T @ dy


def pairwise_sq_dist(signals: np.ndarray, es: EdgeSpace | None = None) -> np.ndarray:
    """(T, E) squared differences of signal values across every node pair."""
    signals = np.asarray(signals, dtype=float)
    if signals.ndim != 2:
        raise ValueError(f"expected a (T, N) signal matrix, got {signals.shape}")
    n = signals.shape[1]
    if es is not None and es.n_nodes != n:
        raise ValueError(f"signals have {n} nodes, expected {es.n_nodes}")
    es = es if es is not None else EdgeSpace(n)
    d = signals[:, es.pair_rows] - signals[:, es.pair_cols]
    return d * d


def graph_filter(lap: np.ndarray, gain) -> np.ndarray:
    """Apply a spectral filter to a symmetric matrix.

    ``gain`` maps an array of eigenvalues to an array of gains; the result is
    U diag(gain(lambda)) U^T, symmetrized.
    """
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {lap.shape}")
    lams, basis = np.linalg.eigh(lap)
    gains = np.asarray(gain(lams), dtype=float)
    if gains.shape != lams.shape:
        raise ValueError("gain function must return one gain per eigenvalue")
    out = (basis * gains) @ basis.T
    return (out + out.T) / 2.0


def pinv_sqrt_gains(lams: np.ndarray,
                    rel_cutoff: float = RELATIVE_EIG_CUTOFF) -> np.ndarray:
    """Gains of the sqrt-pseudo-inverse filter, with exact zeros on null modes."""
    lams = np.asarray(lams, dtype=float)
    top = lams.max(initial=0.0)
    if top <= 0:
        return np.zeros_like(lams)
    keep = lams > rel_cutoff * top
    out = np.zeros_like(lams)
    out[keep] = 1.0 / np.sqrt(lams[keep])
    return out
