"""Edge-recovery scoring, activation run statistics, and grid search."""

from dataclasses import dataclass, field
import itertools
import math
import time

import numpy as np

from .datagen import GraphSequence, derive_seed
from .solver import DivergenceError

# Fraction of the largest weight below which an edge counts as absent when no
# explicit threshold is given.
RELATIVE_EDGE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def threshold_edges(weights: np.ndarray, eps: float) -> np.ndarray:
    """Binary edge predictions: weight strictly above the threshold."""
    if eps < 0:
        raise ValueError("threshold must be nonnegative")
    return (np.asarray(weights, dtype=float) > eps).astype(np.uint8)


def default_edge_threshold(weights: np.ndarray) -> float:
    """Per-graph threshold relative to the largest weight."""
    top = float(np.asarray(weights, dtype=float).max(initial=0.0))
    return RELATIVE_EDGE_THRESHOLD * max(top, 0.0)


def confusion_counts(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool).ravel()
    truth = np.asarray(truth).astype(bool).ravel()
    if pred.shape != truth.shape:
        raise ValueError(
            f"length mismatch: {pred.shape[0]} predictions vs "
            f"{truth.shape[0]} labels")
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & truth)),
        tn=int(np.count_nonzero(~pred & ~truth)),
        fp=int(np.count_nonzero(pred & ~truth)),
        fn=int(np.count_nonzero(~pred & truth)))


def mcc(pred: np.ndarray, truth: np.ndarray) -> float:
    """Matthews correlation of two binary vectors; 0 when any marginal is
    degenerate."""
    c = confusion_counts(pred, truth)
    denom = ((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn))
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def _truth_matrix(truth) -> np.ndarray:
    if isinstance(truth, GraphSequence):
        return truth.binary_edges()
    return (np.asarray(truth) > 0).astype(np.uint8)


def mean_instantaneous_mcc(weights: np.ndarray, coeffs: np.ndarray, truth,
                           eps: float | None = None) -> float:
    """Mean per-sample MCC between thresholded mixed graphs and true edges.

    ``truth`` is a GraphSequence or a per-sample binary edge matrix with one
    row per activation row (expand window activations before calling).  With
    ``eps=None`` each sample uses its own relative threshold.
    """
    truth_edges = _truth_matrix(truth)
    mixed = np.asarray(coeffs, dtype=float) @ np.asarray(weights, dtype=float)
    if mixed.shape != truth_edges.shape:
        raise ValueError(
            f"shape mismatch: predictions {mixed.shape} vs truth "
            f"{truth_edges.shape}")
    scores = []
    for row, truth_row in zip(mixed, truth_edges):
        cut = default_edge_threshold(row) if eps is None else eps
        scores.append(mcc(threshold_edges(row, cut), truth_row))
    return float(np.mean(scores))


def state_features(coeffs: np.ndarray, sampling_rate: float,
                   active_eps: float = 0.0) -> np.ndarray:
    """Per-atom activity statistics of an activation series.

    An atom is active at t when its coefficient exceeds ``active_eps``.
    Returns a (K, 3) array of occurrence count (number of maximal active
    runs), coverage in seconds, and average run duration (0 when never
    active).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 2 or coeffs.shape[0] < 1:
        raise ValueError("expected a nonempty (T, K) activation matrix")
    if sampling_rate <= 0:
        raise ValueError("sampling rate must be positive")
    active = coeffs > active_eps
    out = np.zeros((coeffs.shape[1], 3))
    for k in range(coeffs.shape[1]):
        col = active[:, k]
        occ = int(col[0]) + int(np.count_nonzero(col[1:] & ~col[:-1]))
        cov = int(np.count_nonzero(col)) / sampling_rate
        out[k] = (occ, cov, cov / occ if occ else 0.0)
    return out


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridSpec:
    """Per-hyperparameter candidate lists; points enumerate their cartesian
    product in insertion order."""

    axes: dict

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("every grid axis needs at least one candidate")

    def points(self) -> list:
        names = list(self.axes)
        return [dict(zip(names, combo))
                for combo in itertools.product(*self.axes.values())]


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    best_index: int
    table: list = field(default_factory=list)


def grid_search(grid: GridSpec, run_point, master_seed: int) -> GridResult:
    """Score every grid point with a deterministic per-point seed.

    ``run_point(params, seed)`` returns a scalar score (higher is better) and
    may raise DivergenceError; diverged points are recorded and skipped.
    Ties break toward the earlier point in enumeration order.
    """
    table = []
    best_index = -1
    best_score = -math.inf
    for idx, params in enumerate(grid.points()):
        seed = derive_seed(master_seed, "grid", str(idx))
        started = time.perf_counter()
        try:
            score = float(run_point(params, seed))
            error = ""
        except DivergenceError as exc:
            score = -math.inf
            error = str(exc)
        table.append({"params": params, "score": score,
                      "wall_time": time.perf_counter() - started,
                      "error": error})
        if score > best_score:
            best_score = score
            best_index = idx
    if best_index < 0:
        failures = "; ".join(
            f"{row['params']}: {row['error']}" for row in table)
        raise RuntimeError(f"every grid point diverged: {failures}")
    return GridResult(best_params=grid.points()[best_index],
                      best_score=best_score, best_index=best_index,
                      table=table)


def write_grid_table_csv(result: GridResult, path) -> None:
    """One row per grid point: hyperparameters, score, wall time."""
    names = list(result.table[0]["params"]) if result.table else []
    lines = [",".join(names + ["score", "wall_time", "error"])]
    for row in result.table:
        cells = [format(row["params"][n], ".17g")
                 if isinstance(row["params"][n], float)
                 else str(row["params"][n]) for n in names]
        cells.append(format(row["score"], ".17g"))
        cells.append(format(row["wall_time"], ".6f"))
        cells.append(row["error"].replace(",", ";"))
        lines.append(",".join(cells))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
