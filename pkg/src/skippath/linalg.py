"""Dense linear-algebra primitives shared by every other module.

Everything is float64. Random draws always flow through an explicitly
seeded ``numpy.random.Generator`` passed by the caller; nothing in this
package touches numpy's global RNG state.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

DEFAULT_RANK_TOL = 1e-12


def as_float_array(a, name: str = "array") -> np.ndarray:
    """Coerce to a float64 ndarray and reject non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = as_float_array(a, name)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_vector(a, name: str = "vector") -> np.ndarray:
    arr = as_float_array(a, name)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def relu(x: np.ndarray) -> np.ndarray:
    """Entrywise max(0, x); works for vectors and matrices alike."""
    return np.maximum(x, 0.0)


def pinv(w, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rank_tol`` times the largest singular value
    are treated as exact zeros.
    """
    W = check_matrix(w, "pinv input")
    if rank_tol <= 0:
        raise InvalidInputError("rank_tol must be > 0")
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((W.shape[1], W.shape[0]))
    keep = s > rank_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def smallest_singular_ratio(w) -> float:
    """sigma_min / sigma_max of a matrix; 0 for the zero matrix."""
    s = np.linalg.svd(np.asarray(w, dtype=np.float64), compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def operator_norm(w) -> float:
    """Largest singular value."""
    return float(np.linalg.svd(np.asarray(w, dtype=np.float64), compute_uv=False)[0])


def angle(u, v) -> float:
    """Angle between two nonzero vectors in radians, clamped to [0, pi]."""
    uu = check_vector(u, "u")
    vv = check_vector(v, "v")
    nu = np.linalg.norm(uu)
    nv = np.linalg.norm(vv)
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("angle undefined for a zero vector")
    c = float(np.dot(uu, vv) / (nu * nv))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def pairwise_angles(rows: np.ndarray) -> np.ndarray:
    """All pairwise angles between the rows of a matrix (rows need not be unit)."""
    R = check_matrix(rows, "rows")
    norms = np.linalg.norm(R, axis=1)
    if np.any(norms == 0.0):
        raise InvalidInputError("pairwise_angles requires nonzero rows")
    G = (R / norms[:, None]) @ (R / norms[:, None]).T
    return np.arccos(np.clip(G, -1.0, 1.0))


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Rows drawn uniformly from the unit sphere S^{dim-1}."""
    W = rng.normal(size=(count, dim))
    n = np.linalg.norm(W, axis=1, keepdims=True)
    # resample the (measure-zero) zero draws rather than dividing by 0
    while np.any(n == 0.0):
        bad = n[:, 0] == 0.0
        W[bad] = rng.normal(size=(int(bad.sum()), dim))
        n = np.linalg.norm(W, axis=1, keepdims=True)
    return W / n
