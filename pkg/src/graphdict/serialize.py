"""Dense-matrix persistence: a small CSV dialect and a raw binary block.

Both formats carry the dimensions and the edge-ordering version tag so files
are self-describing.  CSV floats use 17 significant digits and round-trip
float64 exactly; the binary block is magic ``GDSM`` + two little-endian u32
dimensions + the row-major float64 payload.
"""

import struct

import numpy as np

from .graphcore import EDGE_ORDER_TAG

CSV_FORMAT_TAG = "gdsm-csv-v1"
BINARY_MAGIC = b"GDSM"


def _as_matrix(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2:
        raise ValueError(f"only 2-D matrices serialize, got shape {mat.shape}")
    return mat


def save_matrix_csv(path, mat: np.ndarray) -> None:
    mat = _as_matrix(mat)
    rows, cols = mat.shape
    lines = [f"{CSV_FORMAT_TAG},{rows},{cols},{EDGE_ORDER_TAG}"]
    for row in mat:
        lines.append(",".join(format(v, ".17g") for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 4 or parts[0] != CSV_FORMAT_TAG:
            raise ValueError(f"{path}: not a {CSV_FORMAT_TAG} file")
        if parts[3] != EDGE_ORDER_TAG:
            raise ValueError(f"{path}: unknown edge ordering {parts[3]!r}")
        rows, cols = int(parts[1]), int(parts[2])
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if rows else \
            np.zeros((0, cols))
    data = data.reshape(rows, cols) if data.size == rows * cols else data
    if data.shape != (rows, cols):
        raise ValueError(f"{path}: payload shape {data.shape} != ({rows}, {cols})")
    return data


def save_matrix_binary(path, mat: np.ndarray) -> None:
    mat = _as_matrix(mat)
    rows, cols = mat.shape
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        rows, cols = struct.unpack("<II", fh.read(8))
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, want {expected}")
    return np.frombuffer(payload, dtype="<f8").astype(float).reshape(rows, cols)
