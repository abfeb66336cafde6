"""Vector and operator norms w.r.t. a chart's declared norm tag.

Two tags exist: "sup" and "euclidean".  For the sup norm, operator norms of
linear maps are exact (max absolute row sum) and norms of multilinear maps
are computed exactly by enumerating the sign patterns {-1,+1}^m — the
extreme points of the sup-norm unit ball — over all but the first argument
slot.  For the euclidean norm, linear maps get the exact spectral norm;
higher-order maps fall back to a direction-grid lower estimate (2m axis
directions plus 2^m normalized diagonals), which every report labels as an
estimate.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "vector_norm",
    "unit_directions",
    "sign_patterns",
    "op_norm",
    "matrix_op_norm",
    "supball_op_norm",
]


def vector_norm(v: np.ndarray, kind: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if kind == "sup":
        return np.max(np.abs(v), axis=-1)
    if kind == "euclidean":
        return np.sqrt(np.sum(v * v, axis=-1))
    raise ValueError(f"unknown norm kind {kind!r}")


def sign_patterns(m: int) -> np.ndarray:
    """All of {-1,+1}^m, shape (2^m, m), in a fixed deterministic order."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=m)))


def unit_directions(d: int, kind: str) -> np.ndarray:
    """Directional grid: 2d axis directions plus 2^d diagonals, unit length."""
    axes = np.concatenate([np.eye(d), -np.eye(d)], axis=0)
    diag = sign_patterns(d)
    if kind == "euclidean":
        diag = diag / np.sqrt(d)
    return np.concatenate([axes, diag], axis=0)


def matrix_op_norm(A: np.ndarray, kind: str) -> np.ndarray:
    """Norm of a linear map (..., d_out, m): exact for both norm kinds."""
    A = np.asarray(A, dtype=float)
    if kind == "sup":
        return np.max(np.sum(np.abs(A), axis=-1), axis=-1)
    if kind == "euclidean":
        return np.linalg.svd(A, compute_uv=False)[..., 0]
    raise ValueError(f"unknown norm kind {kind!r}")


def op_norm(T: np.ndarray, kind: str, ell: int) -> np.ndarray:
    """Operator norm of an ell-linear map, batched over leading axes.

    T has shape (..., d_out, m, ..., m) with exactly ``ell`` trailing
    argument axes of equal size m; arguments and output are measured in the
    same norm kind.  Exact for "sup" (any ell) and for "euclidean" at
    ell = 1; a direction-grid estimate for "euclidean" at ell >= 2.
    """
    T = np.asarray(T, dtype=float)
    if ell < 1:
        raise ValueError("need at least one argument axis")
    if ell == 1:
        return matrix_op_norm(T, kind)
    m = T.shape[-1]
    if kind == "sup":
        args = sign_patterns(m)
    elif kind == "euclidean":
        args = unit_directions(m, "euclidean")
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    best = None
    # contract every argument slot except the first, then use the exact
    # linear norm on what remains; max of a convex function over the unit
    # ball is attained on the candidate set (exact for sup, estimate else)
    for combo in itertools.product(range(len(args)), repeat=ell - 1):
        M = T
        for idx in combo:
            M = M @ args[idx]
        val = matrix_op_norm(M, kind)
        best = val if best is None else np.maximum(best, val)
    return best


def supball_op_norm(T: np.ndarray, out_kind: str, ell: int) -> np.ndarray:
    """Norm of an ell-linear map whose arguments range over the max-norm ball.

    T has shape (..., d_out, m, ..., m) with ``ell`` trailing argument axes;
    arguments are measured in the sup norm of R^m, the output in
    ``out_kind``.  Exact for any output norm: a norm is convex, so its
    supremum over the cube is attained at a sign vertex, enumerated here.
    """
    T = np.asarray(T, dtype=float)
    if ell < 1:
        return vector_norm(T, out_kind)
    signs = sign_patterns(T.shape[-1])
    best = None
    for combo in itertools.product(range(len(signs)), repeat=ell):
        M = T
        for idx in combo:
            M = M @ signs[idx]
        val = vector_norm(M, out_kind)
        best = val if best is None else np.maximum(best, val)
    return best
