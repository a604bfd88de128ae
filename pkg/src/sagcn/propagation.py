"""Multi-layer neighborhood aggregation with distance-adaptive layer fusion.

Each round aggregates neighbor embeddings through the normalized adjacency
(no self-passing), then fuses every node's previous vector with its freshly
aggregated one. The fusion weights are derived per node from the distance
between the two vectors:

    score_old = 1
    score_new = alpha * ln(1 + beta * dist)
    w_old     = score_old / (score_old + score_new)
    w_new     = score_new / (score_old + score_new)
    e_next    = w_old * e_old + w_new * e_new

so a node whose aggregate moved far from its current state updates more,
while near-duplicates barely move -- which counteracts over-smoothing.
The final embedding is the result of the last round (no layer averaging).

A mean aggregator is provided as the reference: it keeps every layer output,
including the input table, and averages them.

Nodes without any edge never receive neighbor messages; ``forward`` leaves
their rows untouched so they keep their base embeddings.

``forward_with_tape`` / ``backward`` implement exact reverse-mode
differentiation of the whole propagation, including the paths through the
distances and fusion weights.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .distances import (
    DistanceKind,
    row_distance_gradients,
    row_distances_with_cache,
)
from .errors import NumericError
from .graph import NormalizedAdjacency

DEFAULT_ALPHA = 1.5
DEFAULT_NUM_LAYERS = 3

# Rescales raw distances toward the 1e-2 range where fusion responds best;
# the scale of each metric differs by orders of magnitude.
DEFAULT_BETA = {
    DistanceKind.EUCLIDEAN: 1.0,
    DistanceKind.COSINE: 0.001,
    DistanceKind.KL: 100.0,
}


class Aggregator(enum.Enum):
    """Layer-combination strategy: adaptive fusion or plain layer mean."""

    SELF_ADAPTIVE = "sagcn"
    MEAN = "mean"

    @classmethod
    def from_token(cls, token: str) -> "Aggregator":
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown aggregator {token!r} (expected one of: {valid})") from None


@dataclass
class EmbeddingTable:
    """Trainable base embeddings: user rows stacked above item rows."""

    users: np.ndarray  # (M, d) float64
    items: np.ndarray  # (N, d) float64

    def __post_init__(self):
        self.users = np.ascontiguousarray(self.users, dtype=np.float64)
        self.items = np.ascontiguousarray(self.items, dtype=np.float64)
        if self.users.ndim != 2 or self.items.ndim != 2:
            raise ValueError("embedding tables must be 2-D")
        if self.users.shape[1] != self.items.shape[1]:
            raise ValueError(
                f"user/item dimensions differ: {self.users.shape[1]} vs {self.items.shape[1]}"
            )

    @property
    def num_users(self) -> int:
        return self.users.shape[0]

    @property
    def num_items(self) -> int:
        return self.items.shape[0]

    @property
    def dim(self) -> int:
        return self.users.shape[1]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.users, self.items])

    @classmethod
    def from_stacked(cls, arr: np.ndarray, num_users: int) -> "EmbeddingTable":
        return cls(users=arr[:num_users], items=arr[num_users:])

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(users=self.users.copy(), items=self.items.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.users).all() and np.isfinite(self.items).all())

    def sum_of_squares(self) -> float:
        return float(np.sum(self.users**2) + np.sum(self.items**2))


@dataclass
class FusionConfig:
    """Hyperparameters of the propagation stage.

    ``beta`` defaults per distance kind (see ``DEFAULT_BETA``) when left
    unset. ``alpha`` scales how strongly distance drives the update;
    ``beta`` rescales the raw distance magnitude.
    """

    distance_kind: DistanceKind = DistanceKind.EUCLIDEAN
    alpha: float = DEFAULT_ALPHA
    beta: float | None = None
    num_layers: int = DEFAULT_NUM_LAYERS
    aggregator: Aggregator = Aggregator.SELF_ADAPTIVE

    def __post_init__(self):
        if self.beta is None:
            self.beta = DEFAULT_BETA[self.distance_kind]
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")


@dataclass
class FusionWeights:
    """Convex pair of old/new weights derived from one distance value."""

    score_old: float
    score_new: float
    w_old: float
    w_new: float


def fusion_weights(cfg: FusionConfig, dist: float) -> FusionWeights:
    """Weights for mixing a node's old vector with its new aggregate.

    dist = 0 gives exactly (w_old, w_new) = (1, 0); w_new grows strictly
    with dist, alpha and beta, and the pair always sums to 1.
    """
    if not np.isfinite(dist) or dist < 0:
        raise ValueError(f"distance must be finite and non-negative, got {dist}")
    score_new = float(cfg.alpha * np.log1p(cfg.beta * dist))
    total = 1.0 + score_new
    return FusionWeights(
        score_old=1.0,
        score_new=score_new,
        w_old=1.0 / total,
        w_new=score_new / total,
    )


def _fusion_weight_rows(alpha: float, beta: float, dists: np.ndarray):
    scores = alpha * np.log1p(beta * dists)
    total = 1.0 + scores
    return scores, 1.0 / total, scores / total


def aggregate_neighbors(adj: NormalizedAdjacency, emb: EmbeddingTable) -> EmbeddingTable:
    """One round of normalized neighbor aggregation.

    Every user row becomes the degree-normalized sum of its items' rows and
    vice versa. Zero-degree nodes aggregate an empty sum: a zero row.
    """
    _check_shapes(adj, emb)
    out = adj.matrix @ emb.stacked()
    return EmbeddingTable.from_stacked(out, adj.num_users)


def fuse_layer(cfg: FusionConfig, old: EmbeddingTable, new: EmbeddingTable) -> EmbeddingTable:
    """Distance-adaptive fusion of two embedding tables, node by node.

    For each node independently, the distance between its old and new rows
    sets the weights; the output row is their convex combination.
    """
    if (old.num_users, old.num_items, old.dim) != (new.num_users, new.num_items, new.dim):
        raise ValueError("old/new tables must have matching shapes")
    x = old.stacked()
    y = new.stacked()
    dists, _ = row_distances_with_cache(cfg.distance_kind, x, y)
    _, w_old, w_new = _fusion_weight_rows(cfg.alpha, cfg.beta, dists)
    fused = w_old[:, None] * x + w_new[:, None] * y
    return EmbeddingTable.from_stacked(fused, old.num_users)


def forward(cfg: FusionConfig, adj: NormalizedAdjacency, base: EmbeddingTable) -> EmbeddingTable:
    """Run ``cfg.num_layers`` propagation rounds and return the final table."""
    out, _ = _forward_stacked(cfg, adj, _checked_base(adj, base), with_tape=False)
    return EmbeddingTable.from_stacked(out, adj.num_users)


def forward_with_tape(cfg: FusionConfig, adj: NormalizedAdjacency, base: EmbeddingTable):
    """Like ``forward`` but also returns the tape ``backward`` consumes."""
    out, tape = _forward_stacked(cfg, adj, _checked_base(adj, base), with_tape=True)
    return EmbeddingTable.from_stacked(out, adj.num_users), tape


def backward(cfg: FusionConfig, adj: NormalizedAdjacency, tape, grad_final: np.ndarray) -> np.ndarray:
    """Pull a gradient on the final stacked table back to the base table.

    ``grad_final`` is (M+N, d); the return value has the same shape and is
    the exact vector-Jacobian product through every aggregation, distance
    and fusion-weight computation of the forward pass.
    """
    if cfg.aggregator is Aggregator.MEAN:
        return _backward_mean(cfg, adj, grad_final)
    active = adj.active_nodes
    grad = np.asarray(grad_final, dtype=np.float64)
    for layer in reversed(tape):
        cur, new = layer["cur"], layer["new"]
        dist, scores = layer["dist"], layer["scores"]
        w_old, w_new = layer["w_old"], layer["w_new"]

        g = grad[active]
        cur_a = cur[active]
        new_a = new[active]

        g_w_old = np.sum(g * cur_a, axis=1)
        g_w_new = np.sum(g * new_a, axis=1)
        g_cur = w_old[:, None] * g
        g_new = w_new[:, None] * g

        # w_old = 1/(1+s), w_new = s/(1+s)  ->  d/ds = (-1, +1) / (1+s)^2
        g_score = (g_w_new - g_w_old) / (1.0 + scores) ** 2
        # s = alpha * ln(1 + beta * dist)
        g_dist = g_score * cfg.alpha * cfg.beta / (1.0 + cfg.beta * dist)

        dx, dy = row_distance_gradients(cfg.distance_kind, cur_a, new_a, layer["cache"])
        g_cur += g_dist[:, None] * dx
        g_new += g_dist[:, None] * dy

        g_new_full = np.zeros_like(grad)
        g_new_full[active] = g_new
        g_cur_full = np.zeros_like(grad)
        g_cur_full[active] = g_cur
        # new = A_hat @ cur and A_hat is symmetric.
        g_cur_full += adj.matrix @ g_new_full
        g_cur_full[~active] = grad[~active]
        grad = g_cur_full
    return grad


def _checked_base(adj: NormalizedAdjacency, base: EmbeddingTable) -> np.ndarray:
    _check_shapes(adj, base)
    if not base.is_finite():
        raise NumericError("non-finite embeddings in the base table")
    return base.stacked()


def _check_shapes(adj: NormalizedAdjacency, emb: EmbeddingTable) -> None:
    if emb.num_users != adj.num_users or emb.num_items != adj.num_items:
        raise ValueError(
            f"embedding table ({emb.num_users} x {emb.num_items}) does not match "
            f"graph ({adj.num_users} x {adj.num_items})"
        )


def _forward_stacked(cfg, adj, x0, with_tape):
    if cfg.aggregator is Aggregator.MEAN:
        return _forward_mean(cfg, adj, x0), None
    active = adj.active_nodes
    cur = x0
    tape = [] if with_tape else None
    for k in range(cfg.num_layers):
        new = adj.matrix @ cur
        if not np.isfinite(new).all():
            raise NumericError(f"non-finite aggregation output at propagation layer {k}")
        cur_a = cur[active]
        new_a = new[active]
        dist, cache = row_distances_with_cache(cfg.distance_kind, cur_a, new_a)
        scores, w_old, w_new = _fusion_weight_rows(cfg.alpha, cfg.beta, dist)
        nxt = cur.copy()
        nxt[active] = w_old[:, None] * cur_a + w_new[:, None] * new_a
        if not np.isfinite(nxt).all():
            raise NumericError(f"non-finite fused embeddings at propagation layer {k}")
        if with_tape:
            tape.append(
                {
                    "cur": cur,
                    "new": new,
                    "dist": dist,
                    "scores": scores,
                    "w_old": w_old,
                    "w_new": w_new,
                    "cache": cache,
                }
            )
        cur = nxt
    return cur, tape


def _forward_mean(cfg, adj, x0):
    active = adj.active_nodes
    cur = x0
    total = x0.copy()
    for k in range(cfg.num_layers):
        cur = adj.matrix @ cur
        if not np.isfinite(cur).all():
            raise NumericError(f"non-finite aggregation output at propagation layer {k}")
        total += cur
    out = total / (cfg.num_layers + 1)
    out[~active] = x0[~active]
    return out


def _backward_mean(cfg, adj, grad_final):
    active = adj.active_nodes
    grad = np.asarray(grad_final, dtype=np.float64)
    g = grad.copy()
    g[~active] = 0.0
    acc = g
    total = g.copy()
    for _ in range(cfg.num_layers):
        acc = adj.matrix @ acc
        total += acc
    total /= cfg.num_layers + 1
    total[~active] = grad[~active]
    return total
