"""Text persistence: parameter checkpoints and dataset files.

Both formats are line-oriented and self-describing. Floats are written
with 17 significant digits, which round-trips IEEE double exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .losses import Dataset
from .models import (
    InnerNetParams,
    LinearSkipParams,
    Params,
    SkipNetParams,
    TwoLayerParams,
)

CHECKPOINT_MAGIC = "skippath-checkpoint 1"
DATASET_MAGIC = "skippath-dataset 1"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _matrix_lines(name: str, M: np.ndarray) -> list[str]:
    lines = [f"matrix {name} {M.shape[0]} {M.shape[1]}"]
    for row in M:
        lines.append(" ".join(_fmt(v) for v in row))
    return lines


def _family(p: Params) -> str:
    if isinstance(p, TwoLayerParams):
        return "two-layer"
    if isinstance(p, SkipNetParams):
        return "skip"
    if isinstance(p, LinearSkipParams):
        return "linear-skip"
    raise InvalidInputError(f"unknown parameter family {type(p).__name__}")


def checkpoint_text(p: Params) -> str:
    fam = _family(p)
    lines = [CHECKPOINT_MAGIC, f"family {fam}"]
    if isinstance(p, TwoLayerParams):
        lines.append(f"dims n={p.n} m={p.m} d_y={p.d_y}")
        lines += _matrix_lines("W1", p.W1)
        lines += _matrix_lines("W2", p.W2)
    elif isinstance(p, SkipNetParams):
        lines.append(f"dims n={p.n} m={p.m} d_y={p.d_y} d_g={p.d_g} d_o={p.d_o}")
        lines.append("inner " + " ".join(str(L.shape[0]) for L in p.theta.layers))
        lines += _matrix_lines("W1", p.W1)
        lines += _matrix_lines("W2", p.W2)
        lines += _matrix_lines("V2", p.V2)
        lines += _matrix_lines("V1", p.V1)
        for i, L in enumerate(p.theta.layers):
            lines += _matrix_lines(f"theta{i}", L)
    else:
        lines.append(f"dims d_x={p.d_x} d_y={p.d_y} d_z={p.d_z}")
        lines.append("inner " + " ".join(str(L.shape[0]) for L in p.theta.layers))
        lines += _matrix_lines("W", p.W)
        lines += _matrix_lines("V", p.V)
        for i, L in enumerate(p.theta.layers):
            lines += _matrix_lines(f"theta{i}", L)
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_checkpoint(p: Params, path: str | Path) -> None:
    Path(path).write_text(checkpoint_text(p))


class _LineReader:
    def __init__(self, text: str):
        self.lines = [ln.rstrip("\n") for ln in text.splitlines()]
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise InvalidInputError("unexpected end of file")
        ln = self.lines[self.pos]
        self.pos += 1
        return ln


def _read_matrix(rd: _LineReader, expect_name: str) -> np.ndarray:
    header = rd.next().split()
    if len(header) != 4 or header[0] != "matrix" or header[1] != expect_name:
        raise InvalidInputError(f"expected matrix {expect_name}, got {' '.join(header)!r}")
    rows, cols = int(header[2]), int(header[3])
    M = np.empty((rows, cols))
    for i in range(rows):
        vals = rd.next().split()
        if len(vals) != cols:
            raise InvalidInputError(f"matrix {expect_name} row {i} has {len(vals)} values, expected {cols}")
        M[i] = [float(v) for v in vals]
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"matrix {expect_name} contains non-finite entries")
    return M


def _parse_dims(line: str) -> dict[str, int]:
    parts = line.split()
    if parts[0] != "dims":
        raise InvalidInputError(f"expected dims line, got {line!r}")
    out = {}
    for kv in parts[1:]:
        k, _, v = kv.partition("=")
        out[k] = int(v)
    return out


def parse_checkpoint(text: str) -> Params:
    rd = _LineReader(text)
    if rd.next() != CHECKPOINT_MAGIC:
        raise InvalidInputError("not a skippath checkpoint (bad magic line)")
    fam_line = rd.next().split()
    if len(fam_line) != 2 or fam_line[0] != "family":
        raise InvalidInputError("missing family line")
    fam = fam_line[1]
    dims = _parse_dims(rd.next())

    def read_inner_sizes() -> list[int]:
        parts = rd.next().split()
        if parts[0] != "inner":
            raise InvalidInputError("missing inner layer-size line")
        return [int(v) for v in parts[1:]]

    def read_theta(out_dims: list[int], in_dim: int) -> InnerNetParams:
        layers = []
        prev = in_dim
        for i, od in enumerate(out_dims):
            L = _read_matrix(rd, f"theta{i}")
            if L.shape != (od, prev):
                raise InvalidInputError(f"theta{i} has shape {L.shape}, expected {(od, prev)}")
            layers.append(L)
            prev = od
        return InnerNetParams(tuple(layers))

    if fam == "two-layer":
        W1 = _read_matrix(rd, "W1")
        W2 = _read_matrix(rd, "W2")
        p: Params = TwoLayerParams(W1=W1, W2=W2)
    elif fam == "skip":
        sizes = read_inner_sizes()
        W1 = _read_matrix(rd, "W1")
        W2 = _read_matrix(rd, "W2")
        V2 = _read_matrix(rd, "V2")
        V1 = _read_matrix(rd, "V1")
        theta = read_theta(sizes, dims["d_g"])
        p = SkipNetParams(W1=W1, W2=W2, V2=V2, V1=V1, theta=theta)
    elif fam == "linear-skip":
        sizes = read_inner_sizes()
        W = _read_matrix(rd, "W")
        V = _read_matrix(rd, "V")
        theta = read_theta(sizes, dims["d_x"])
        p = LinearSkipParams(W=W, V=V, theta=theta)
    else:
        raise InvalidInputError(f"unknown family {fam!r}")

    if rd.next() != "end":
        raise InvalidInputError("missing end marker")
    _check_dims(p, dims)
    return p


def _check_dims(p: Params, dims: dict[str, int]) -> None:
    actual: dict[str, int]
    if isinstance(p, TwoLayerParams):
        actual = {"n": p.n, "m": p.m, "d_y": p.d_y}
    elif isinstance(p, SkipNetParams):
        actual = {"n": p.n, "m": p.m, "d_y": p.d_y, "d_g": p.d_g, "d_o": p.d_o}
    else:
        actual = {"d_x": p.d_x, "d_y": p.d_y, "d_z": p.d_z}
    if actual != dims:
        raise InvalidInputError(f"declared dims {dims} do not match matrices {actual}")


def load_checkpoint(path: str | Path) -> Params:
    return parse_checkpoint(Path(path).read_text())


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------


def dataset_text(d: Dataset) -> str:
    lines = [DATASET_MAGIC, f"n {d.n}", f"d_y {d.d_y}", f"count {d.count}"]
    for x, y in zip(d.X, d.Y):
        lines.append(" ".join(_fmt(v) for v in x) + " " + " ".join(_fmt(v) for v in y))
    return "\n".join(lines) + "\n"


def save_dataset(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_text(d))


def parse_dataset(text: str) -> Dataset:
    rd = _LineReader(text)
    if rd.next() != DATASET_MAGIC:
        raise InvalidInputError("not a skippath dataset (bad magic line)")

    def int_field(name: str) -> int:
        parts = rd.next().split()
        if len(parts) != 2 or parts[0] != name:
            raise InvalidInputError(f"expected '{name} <int>' line")
        return int(parts[1])

    n = int_field("n")
    d_y = int_field("d_y")
    count = int_field("count")
    if n < 1 or d_y < 1 or count < 1:
        raise InvalidInputError("n, d_y and count must all be >= 1")
    X = np.empty((count, n))
    Y = np.empty((count, d_y))
    for i in range(count):
        vals = rd.next().split()
        if len(vals) != n + d_y:
            raise InvalidInputError(f"sample {i} has {len(vals)} values, expected {n + d_y}")
        row = [float(v) for v in vals]
        X[i] = row[:n]
        Y[i] = row[n:]
    # Dataset.__post_init__ rejects non-finite entries
    return Dataset(X=X, Y=Y)


def load_dataset(path: str | Path) -> Dataset:
    return parse_dataset(Path(path).read_text())
