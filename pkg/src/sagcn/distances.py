"""Distances between a node's pre- and post-aggregation layer vectors.

Three metrics are supported, covering straight-line, directional and
distributional notions of representation change:

* Euclidean:  ``sqrt(sum_t (x_t - y_t)^2)``
* Cosine:     ``1 - |<x, y>| / (||x|| * ||y|| + eps)``, always in [0, 1]
* KL:         ``sum_t X_t * ln(X_t / Y_t)`` over softmax-normalized inputs

Raw embeddings may be negative, so the KL metric first maps both vectors
onto the probability simplex with a softmax; this keeps the measure valid
and differentiable everywhere. The KL metric is asymmetric: the first
(old) vector is the reference distribution. Natural logarithms throughout.

Each metric also exposes a row-wise form plus the exact gradients with
respect to both inputs, so that propagation can differentiate through the
distance-dependent fusion weights.
"""

from __future__ import annotations

import enum

import numpy as np

DEFAULT_EPS = 1e-8

# Degenerate inputs (`x == y` for Euclidean, a zero vector for cosine) sit at
# non-smooth points; gradients there are defined as zero.
_GRAD_TINY = 1e-300


class DistanceKind(enum.Enum):
    """Selector for the distance used by adaptive fusion."""

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    KL = "kl"

    @classmethod
    def from_token(cls, token: str) -> "DistanceKind":
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown distance {token!r} (expected one of: {valid})") from None


def _check_pair(old_vec, new_vec) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(old_vec, dtype=np.float64)
    y = np.asarray(new_vec, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"expected two vectors of equal dimension, got {x.shape} and {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("distance inputs must be finite")
    return x, y


def euclidean_distance(old_vec, new_vec) -> float:
    """Straight-line distance between the two vectors. Symmetric, >= 0."""
    x, y = _check_pair(old_vec, new_vec)
    return float(np.sqrt(np.sum((x - y) ** 2)))


def cosine_distance(old_vec, new_vec, eps: float = DEFAULT_EPS) -> float:
    """One minus the absolute cosine similarity; symmetric, in [0, 1].

    The absolute value makes anti-parallel vectors count as zero distance.
    ``eps`` is added to the norm product so zero vectors and the gradient
    stay well defined.
    """
    x, y = _check_pair(old_vec, new_vec)
    dots = float(x @ y)
    denom = float(np.sqrt(x @ x) * np.sqrt(y @ y)) + eps
    return 1.0 - abs(dots) / denom


def kl_distance(old_vec, new_vec) -> float:
    """KL divergence between the softmax-normalized vectors. >= 0, asymmetric.

    The old vector is the reference distribution X, the new one is Y.
    """
    x, y = _check_pair(old_vec, new_vec)
    d, _ = _kl_rows_with_cache(x[None, :], y[None, :])
    return float(d[0])


def kl_on_simplex(p, q) -> float:
    """KL divergence for vectors already on the probability simplex."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("simplex KL requires strictly positive components")
    return float(np.sum(p * (np.log(p) - np.log(q))))


def distance(kind: DistanceKind, old_vec, new_vec) -> float:
    """Dispatch to the metric selected by ``kind``."""
    if kind is DistanceKind.EUCLIDEAN:
        return euclidean_distance(old_vec, new_vec)
    if kind is DistanceKind.COSINE:
        return cosine_distance(old_vec, new_vec)
    if kind is DistanceKind.KL:
        return kl_distance(old_vec, new_vec)
    raise ValueError(f"unknown distance kind: {kind!r}")


# ---------------------------------------------------------------------------
# Row-wise forms. X and Y are (R, d) matrices; row r yields one distance.
# The *_with_cache variants return the intermediates the gradients reuse.
# ---------------------------------------------------------------------------


def _check_rows(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape != Y.shape:
        raise ValueError(f"expected matching (rows, dim) matrices, got {X.shape} and {Y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("distance inputs must be finite")
    return X, Y


def _euclidean_rows_with_cache(X, Y):
    diff = X - Y
    d = np.sqrt(np.sum(diff * diff, axis=1))
    return d, {"diff": diff, "dist": d}


def _euclidean_rows_grad(cache):
    d = cache["dist"]
    safe = np.where(d > _GRAD_TINY, d, 1.0)
    gx = cache["diff"] / safe[:, None]
    gx[d <= _GRAD_TINY] = 0.0
    return gx, -gx


def _cosine_rows_with_cache(X, Y, eps=DEFAULT_EPS):
    dots = np.sum(X * Y, axis=1)
    nx = np.sqrt(np.sum(X * X, axis=1))
    ny = np.sqrt(np.sum(Y * Y, axis=1))
    denom = nx * ny + eps
    cos = dots / denom
    d = 1.0 - np.abs(cos)
    return d, {"dots": dots, "nx": nx, "ny": ny, "denom": denom, "cos": cos}


def _cosine_rows_grad(cache, X, Y):
    dots, nx, ny = cache["dots"], cache["nx"], cache["ny"]
    denom, cos = cache["denom"], cache["cos"]
    sign = np.sign(cos)
    # d|cos|/dx = sign(cos) * (y / denom - dots * ny * x / (nx * denom^2))
    sx = np.where(nx > _GRAD_TINY, nx, 1.0)
    sy = np.where(ny > _GRAD_TINY, ny, 1.0)
    gx = -sign[:, None] * (Y / denom[:, None] - (dots * ny / (sx * denom**2))[:, None] * X)
    gy = -sign[:, None] * (X / denom[:, None] - (dots * nx / (sy * denom**2))[:, None] * Y)
    gx[nx <= _GRAD_TINY] = 0.0
    gy[ny <= _GRAD_TINY] = 0.0
    return gx, gy


def _log_softmax_rows(Z):
    shifted = Z - Z.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def _kl_rows_with_cache(X, Y):
    lp = _log_softmax_rows(X)
    lq = _log_softmax_rows(Y)
    P = np.exp(lp)
    L = lp - lq
    d = np.sum(P * L, axis=1)
    # Gibbs: exact zero when the normalized rows coincide; clip the tiny
    # negative residue float arithmetic can leave behind.
    d = np.maximum(d, 0.0)
    return d, {"P": P, "Q": np.exp(lq), "L": L, "kl": d}


def _kl_rows_grad(cache):
    P, Q, L, kl = cache["P"], cache["Q"], cache["L"], cache["kl"]
    gx = P * (L - kl[:, None])
    gy = Q - P
    return gx, gy


def row_distances(kind: DistanceKind, X, Y) -> np.ndarray:
    """Per-row distances between corresponding rows of X (old) and Y (new)."""
    d, _ = row_distances_with_cache(kind, X, Y)
    return d


def row_distances_with_cache(kind: DistanceKind, X, Y):
    X, Y = _check_rows(X, Y)
    if kind is DistanceKind.EUCLIDEAN:
        return _euclidean_rows_with_cache(X, Y)
    if kind is DistanceKind.COSINE:
        return _cosine_rows_with_cache(X, Y)
    if kind is DistanceKind.KL:
        return _kl_rows_with_cache(X, Y)
    raise ValueError(f"unknown distance kind: {kind!r}")


def row_distance_gradients(kind: DistanceKind, X, Y, cache) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the per-row distance with respect to X and Y rows."""
    if kind is DistanceKind.EUCLIDEAN:
        return _euclidean_rows_grad(cache)
    if kind is DistanceKind.COSINE:
        return _cosine_rows_grad(cache, X, Y)
    if kind is DistanceKind.KL:
        return _kl_rows_grad(cache)
    raise ValueError(f"unknown distance kind: {kind!r}")
