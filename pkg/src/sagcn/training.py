"""Pairwise-ranking training of the base embeddings.

The base table is optimized with the BPR objective over sampled
(user, positive item, negative item) triples:

    L = sum_batch -ln sigmoid(y_ui - y_uj) + lambda * ||E0||^2

where scores are inner products of the propagated embeddings. The batch
term is a sum (not a mean); learning-rate defaults assume that reduction.
Gradients flow through the entire propagation, including the
distance-dependent fusion weights, via the hand-derived adjoints in
``propagation.backward``; correctness is pinned down by finite-difference
tests. Optimization is Adam with bias correction; early stopping watches
validation Recall@20.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, NumericError
from .evaluation import evaluate
from .graph import InteractionGraph, normalize_adjacency
from .propagation import EmbeddingTable, FusionConfig, backward, forward, forward_with_tape

logger = logging.getLogger(__name__)

EARLY_STOP_CUTOFF = 20  # early stopping watches Recall at this cutoff
DEFAULT_DIM = 64


class BprTriple(NamedTuple):
    user: int
    pos_item: int
    neg_item: int


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    reg_lambda: float = 1e-4
    batch_size: int = 2048
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be non-negative")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")


@dataclass
class OptimizerState:
    """Adam moments, congruent with the stacked base table."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def init_like(cls, table: EmbeddingTable) -> "OptimizerState":
        shape = (table.num_users + table.num_items, table.dim)
        return cls(
            first_moment=np.zeros(shape, dtype=np.float64),
            second_moment=np.zeros(shape, dtype=np.float64),
        )


def xavier_init(num_users: int, num_items: int, dim: int, seed: int) -> EmbeddingTable:
    """Uniform Xavier initialization, fully determined by the seed.

    Fan-in is the number of rows of each table, fan-out the embedding
    dimension, so user entries are uniform in +-sqrt(6/(M+d)) and item
    entries in +-sqrt(6/(N+d)). Users are drawn before items.
    """
    if num_users < 1 or num_items < 1 or dim < 1:
        raise ValueError("xavier_init requires positive sizes")
    rng = np.random.default_rng(seed)
    bound_u = math.sqrt(6.0 / (num_users + dim))
    bound_i = math.sqrt(6.0 / (num_items + dim))
    users = rng.uniform(-bound_u, bound_u, size=(num_users, dim))
    items = rng.uniform(-bound_i, bound_i, size=(num_items, dim))
    return EmbeddingTable(users=users, items=items)


def sample_batch(g: InteractionGraph, size: int, rng: np.random.Generator) -> list[BprTriple]:
    """Sample BPR triples: one per uniformly drawn training edge.

    The positive comes from the sampled edge; the negative is drawn
    uniformly over items with rejection until it is not an interaction of
    the user. Users interacting with every item cannot yield a negative and
    are skipped with a warning.
    """
    if g.num_edges == 0:
        raise DataError("cannot sample triples from an empty graph")
    edge_ids = rng.integers(0, g.num_edges, size=size)
    pos_sets = g.user_item_sets
    triples: list[BprTriple] = []
    skipped = 0
    for e in edge_ids:
        u, i = g.edges[e]
        positives = pos_sets[u]
        if len(positives) >= g.num_items:
            skipped += 1
            continue
        j = int(rng.integers(0, g.num_items))
        while j in positives:
            j = int(rng.integers(0, g.num_items))
        triples.append(BprTriple(int(u), int(i), j))
    if skipped:
        logger.warning("skipped %d sampled edges: user interacts with every item", skipped)
    return triples


def bpr_loss(scores_pos, scores_neg, base: EmbeddingTable, reg_lambda: float) -> float:
    """Summed BPR loss plus L2 regularization of the base table.

    Uses the softplus form ln(1 + exp(-(pos - neg))), which is safe for
    large margins of either sign.
    """
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ValueError(f"score vectors must have equal length, got {pos.shape} and {neg.shape}")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise ValueError("scores must be finite")
    rank_term = float(np.sum(np.logaddexp(0.0, -(pos - neg))))
    return rank_term + reg_lambda * base.sum_of_squares()


def _batch_arrays(batch: Sequence[BprTriple]):
    if len(batch) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    arr = np.asarray(batch, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _loss_and_gradient(
    cfg: FusionConfig,
    tcfg: TrainConfig,
    adj,
    base: EmbeddingTable,
    batch: Sequence[BprTriple],
) -> tuple[float, EmbeddingTable]:
    final, tape = forward_with_tape(cfg, adj, base)
    users, pos_items, neg_items = _batch_arrays(batch)
    m = base.num_users

    fu = final.users[users]
    fi = final.items[pos_items]
    fj = final.items[neg_items]
    margin = np.sum(fu * (fi - fj), axis=1)
    if not np.isfinite(margin).all():
        raise NumericError("non-finite scores at the prediction layer")
    loss = float(np.sum(np.logaddexp(0.0, -margin))) + tcfg.reg_lambda * base.sum_of_squares()

    # d/d(margin) of ln(1 + exp(-margin)) = -sigmoid(-margin)
    coef = -expit(-margin)
    grad_final = np.zeros((m + base.num_items, base.dim), dtype=np.float64)
    np.add.at(grad_final, users, coef[:, None] * (fi - fj))
    np.add.at(grad_final, m + pos_items, coef[:, None] * fu)
    np.add.at(grad_final, m + neg_items, -coef[:, None] * fu)

    grad_base = backward(cfg, adj, tape, grad_final)
    grad_base += 2.0 * tcfg.reg_lambda * base.stacked()
    return loss, EmbeddingTable.from_stacked(grad_base, m)


def loss_gradient(
    cfg: FusionConfig,
    tcfg: TrainConfig,
    adj,
    base: EmbeddingTable,
    batch: Sequence[BprTriple],
) -> EmbeddingTable:
    """Exact gradient of the batch loss with respect to the base table."""
    _, grad = _loss_and_gradient(cfg, tcfg, adj, base, batch)
    return grad


def adam_step(
    table: EmbeddingTable,
    state: OptimizerState,
    grads: EmbeddingTable,
    tcfg: TrainConfig,
) -> tuple[EmbeddingTable, OptimizerState]:
    """One bias-corrected Adam update; returns the new table and state."""
    theta = table.stacked()
    g = grads.stacked()
    if theta.shape != g.shape:
        raise ValueError(f"gradient shape {g.shape} does not match parameters {theta.shape}")
    t = state.step_count + 1
    b1, b2 = tcfg.adam_beta1, tcfg.adam_beta2
    m = b1 * state.first_moment + (1.0 - b1) * g
    v = b2 * state.second_moment + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    theta = theta - tcfg.learning_rate * m_hat / (np.sqrt(v_hat) + tcfg.adam_eps)
    return (
        EmbeddingTable.from_stacked(theta, table.num_users),
        OptimizerState(first_moment=m, second_moment=v, step_count=t),
    )


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_metric: float
    seconds: float


@dataclass
class TrainResult:
    embeddings: EmbeddingTable  # base table of the best validation epoch
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("-inf")
    stopped_early: bool = False
    diverged: bool = False


def format_log(log: Sequence[EpochRecord]) -> str:
    """Tab-separated training log: epoch, loss, validation Recall@20, seconds."""
    lines = ["epoch\tloss\tval_recall@20\tseconds"]
    for r in log:
        lines.append(f"{r.epoch}\t{r.loss:.10g}\t{r.val_metric:.10g}\t{r.seconds:.3f}")
    return "\n".join(lines) + "\n"


def train(
    graph: InteractionGraph,
    fusion_cfg: FusionConfig,
    train_cfg: TrainConfig,
    dim: int = DEFAULT_DIM,
    val_mask: Sequence[np.ndarray] | None = None,
    val_relevant: Sequence[np.ndarray] | None = None,
    eval_fn: Callable[[EmbeddingTable], float] | None = None,
) -> TrainResult:
    """Optimize base embeddings on ``graph`` with early stopping.

    ``val_mask``/``val_relevant`` give, per user, the items to exclude from
    ranking and the held-out validation items; they feed the default
    Recall@20 early-stopping metric. ``eval_fn`` overrides that metric
    (useful for tests). Training stops once the best validation value has
    failed to improve for ``patience`` consecutive epochs, and the
    parameters from the best epoch are returned. A non-finite loss aborts
    the run and keeps the last finite parameters.
    """
    adj = normalize_adjacency(graph)
    base = xavier_init(graph.num_users, graph.num_items, dim, train_cfg.seed)

    if eval_fn is None:
        if val_relevant is None:
            raise ValueError("either a validation split or an eval_fn is required")

        def eval_fn(table: EmbeddingTable) -> float:
            final = forward(fusion_cfg, adj, table)
            try:
                report = evaluate(final, val_mask, val_relevant, cutoffs=(EARLY_STOP_CUTOFF,))
            except DataError:
                return 0.0
            return report.recall[EARLY_STOP_CUTOFF]

    rng = np.random.default_rng([train_cfg.seed, 1])
    batches_per_epoch = max(1, math.ceil(graph.num_edges / train_cfg.batch_size))

    result = TrainResult(embeddings=base.copy())
    opt = OptimizerState.init_like(base)
    best_params = base.copy()
    streak = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        epoch_loss = 0.0
        try:
            for _ in range(batches_per_epoch):
                batch = sample_batch(graph, train_cfg.batch_size, rng)
                loss, grad = _loss_and_gradient(fusion_cfg, train_cfg, adj, base, batch)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                base, opt = adam_step(base, opt, grad, train_cfg)
                epoch_loss += loss
        except NumericError as exc:
            logger.error("training diverged: %s", exc)
            result.diverged = True
            break

        metric = float(eval_fn(base))
        result.log.append(
            EpochRecord(epoch=epoch, loss=epoch_loss, val_metric=metric, seconds=time.perf_counter() - t0)
        )
        result.embeddings = base.copy()  # last finite checkpoint
        if metric > result.best_metric:
            result.best_metric = metric
            result.best_epoch = epoch
            best_params = base.copy()
            streak = 0
        else:
            streak += 1
            if streak >= train_cfg.patience:
                result.stopped_early = True
                break

    if result.best_epoch > 0:
        result.embeddings = best_params
    return result
