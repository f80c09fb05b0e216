"""Seeded synthetic generators: random graphs, activations, smooth signals.

All randomness flows through ``numpy.random.Generator`` seeded with PCG64
(``make_rng``); identical seeds and parameters reproduce outputs
bit-for-bit.  Child seeds for independent subsystems derive from a master
seed by hashing label strings (``derive_seed``), so runs decompose
deterministically.
"""

from dataclasses import dataclass
import hashlib

import numpy as np

from . import graphcore
from .graphcore import EdgeSpace

WEIGHT_RANGE = (0.1, 3.0)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed."""
    return np.random.default_rng(int(seed))


def derive_seed(master: int, *labels: str) -> int:
    """Deterministic 64-bit child seed from a master seed and label path."""
    text = str(int(master)) + "".join("/" + str(l) for l in labels)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class GraphSequence:
    """A time-indexed sequence of edge-weight vectors, optionally labelled."""

    edge_space: EdgeSpace
    weights: np.ndarray
    labels: np.ndarray | None = None

    def binary_edges(self) -> np.ndarray:
        return (self.weights > 0).astype(np.uint8)


def _edge_weights(es, present, weight_dist, rng):
    draws = rng.uniform(weight_dist[0], weight_dist[1], es.n_edges) \
        if weight_dist != "unit" else np.ones(es.n_edges)
    out = np.zeros(es.n_edges)
    out[present] = draws[present]
    return out


def er_graph(es: EdgeSpace, edge_prob: float, rng: np.random.Generator,
             weight_dist="unit") -> np.ndarray:
    """One Erdos-Renyi draw as an edge-weight vector.

    ``weight_dist`` is ``"unit"`` or an interval ``(lo, hi)`` sampled
    uniformly per present edge.
    """
    if not 0 <= edge_prob <= 1:
        raise ValueError("edge probability must lie in [0, 1]")
    present = rng.random(es.n_edges) < edge_prob
    return _edge_weights(es, present, weight_dist, rng)


def superposition_coefficients(n_atoms: int, max_active: int, n_samples: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Binary activations with 1..max_active atoms per sample.

    The active count is uniform on {1, ..., max_active} and the atom subset
    is uniform without replacement.
    """
    if not 1 <= max_active <= n_atoms:
        raise ValueError(
            f"max_active must lie in [1, {n_atoms}], got {max_active}")
    counts = rng.integers(1, max_active + 1, size=n_samples)
    scores = rng.random((n_samples, n_atoms))
    ranks = np.argsort(np.argsort(scores, axis=1), axis=1)
    return (ranks < counts[:, None]).astype(float)


def training_size(n_atoms: int, max_active: int, per_atom: int) -> int:
    """Sample count letting each atom contribute to ``per_atom`` samples on
    average (the expected active count per sample is (1 + max_active)/2)."""
    return 2 * per_atom * n_atoms // (max_active + 1)


def lgmrf_filter(lap: np.ndarray):
    """Eigenbasis and sqrt-pseudo-inverse gains of a Laplacian.

    Gains of null modes are exactly zero, so sampled signals carry no
    component along them by construction.
    """
    lams, basis = np.linalg.eigh(np.asarray(lap, dtype=float))
    return basis, graphcore.pinv_sqrt_gains(lams)


def lgmrf_sample(lap: np.ndarray, n_samples: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian samples whose precision matrix is the Laplacian.

    Rows are iid N(0, pinv(L)), generated by filtering white noise with the
    sqrt-pseudo-inverse spectral gains.
    """
    basis, gains = lgmrf_filter(lap)
    noise = rng.standard_normal((int(n_samples), basis.shape[0]))
    return noise @ (gains[:, None] * basis.T)


def mixture_signals(weights: np.ndarray, coeffs: np.ndarray,
                    rng: np.random.Generator,
                    es: EdgeSpace | None = None) -> np.ndarray:
    """One signal per activation row, drawn from its instantaneous graph.

    Rows with identical activations share one spectral factorization; the
    noise matrix is drawn up front so the output does not depend on the
    grouping.
    """
    weights = np.asarray(weights, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    es = es if es is not None else EdgeSpace.from_edge_count(weights.shape[1])
    noise = rng.standard_normal((coeffs.shape[0], es.n_nodes))
    out = np.zeros_like(noise)
    patterns, inverse = np.unique(coeffs, axis=0, return_inverse=True)
    for p, row in enumerate(patterns):
        basis, gains = lgmrf_filter(
            graphcore.laplacian_from_weights(row @ weights, es))
        members = inverse == p
        out[members] = noise[members] @ (gains[:, None] * basis.T)
    return out


@dataclass(frozen=True)
class SuperpositionTask:
    edge_space: EdgeSpace
    dictionary: np.ndarray
    coeffs_train: np.ndarray
    signals_train: np.ndarray
    coeffs_test: np.ndarray
    signals_test: np.ndarray


def generate_superposition_task(n_atoms: int, n_nodes: int, edge_prob: float,
                                max_active: int, per_atom: int, n_test: int,
                                rng: np.random.Generator,
                                atom_weights="unit") -> SuperpositionTask:
    """Shared random dictionary plus train/test activations and signals."""
    es = EdgeSpace(n_nodes)
    dictionary = np.stack([er_graph(es, edge_prob, rng, atom_weights)
                           for _ in range(n_atoms)])
    n_train = training_size(n_atoms, max_active, per_atom)
    coeffs_train = superposition_coefficients(n_atoms, max_active, n_train, rng)
    coeffs_test = superposition_coefficients(n_atoms, max_active, n_test, rng)
    signals_train = mixture_signals(dictionary, coeffs_train, rng, es)
    signals_test = mixture_signals(dictionary, coeffs_test, rng, es)
    return SuperpositionTask(es, dictionary, coeffs_train, signals_train,
                             coeffs_test, signals_test)


def emeg_process(es: EdgeSpace, p0: float, p_add: float, p_del: float,
                 n_steps: int, rng: np.random.Generator,
                 weight_dist=WEIGHT_RANGE) -> GraphSequence:
    """Edge-Markovian evolving graph.

    Starts from an Erdos-Renyi draw; afterwards each absent edge appears with
    probability ``p_add`` and each present edge disappears with ``p_del``.
    An edge keeps its weight for as long as it stays present.
    """
    for name, p in (("p0", p0), ("p_add", p_add), ("p_del", p_del)):
        if not 0 <= p <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    if n_steps < 1:
        raise ValueError("need at least one step")
    current = er_graph(es, p0, rng, weight_dist)
    steps = [current]
    for _ in range(n_steps - 1):
        present = current > 0
        appear = rng.random(es.n_edges) < p_add
        vanish = rng.random(es.n_edges) < p_del
        fresh = _edge_weights(es, ~present & appear, weight_dist, rng)
        current = np.where(present & ~vanish, current, 0.0) + fresh
        steps.append(current)
    return GraphSequence(es, np.stack(steps))


def sbg_process(es: EdgeSpace, n_states: int, edge_prob: float, p_stay: float,
                n_steps: int, rng: np.random.Generator,
                weight_dist=WEIGHT_RANGE) -> GraphSequence:
    """Switching-behavior graph: a Markov chain over fixed random graphs.

    At each step the chain keeps its state with probability ``p_stay`` and
    otherwise jumps uniformly to one of the other states.
    """
    if n_states < 2:
        raise ValueError("need at least two states")
    if not 0 <= p_stay <= 1:
        raise ValueError("p_stay must lie in [0, 1]")
    if n_steps < 1:
        raise ValueError("need at least one step")
    graphs = np.stack([er_graph(es, edge_prob, rng, weight_dist)
                       for _ in range(n_states)])
    state = int(rng.integers(n_states))
    labels = np.empty(n_steps, dtype=np.int64)
    labels[0] = state
    for t in range(1, n_steps):
        if rng.random() >= p_stay:
            jump = int(rng.integers(n_states - 1))
            state = jump + (jump >= state)
        labels[t] = state
    return GraphSequence(es, graphs[labels], labels=labels)


def sequence_signals(seq: GraphSequence, signals_per_graph: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Consecutive signal blocks, one block per graph of the sequence."""
    if signals_per_graph < 1:
        raise ValueError("need at least one signal per graph")
    blocks = [lgmrf_sample(
        graphcore.laplacian_from_weights(w, seq.edge_space),
        signals_per_graph, rng) for w in seq.weights]
    return np.concatenate(blocks, axis=0)
