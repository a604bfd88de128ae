"""Full-ranking evaluation: Recall@K and NDCG@K over all items.

Every evaluated user gets a ranking of the complete item catalogue with
their training interactions masked out. Ties are broken by ascending item
index so results are deterministic. Metrics are macro-averaged over users
with at least one held-out item.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .propagation import EmbeddingTable

logger = logging.getLogger(__name__)

DEFAULT_CUTOFFS = (10, 20, 50)


def predict_scores(emb: EmbeddingTable, user: int) -> np.ndarray:
    """Inner-product scores of one user against every item."""
    if not 0 <= user < emb.num_users:
        raise ValueError(f"user index {user} out of range [0, {emb.num_users})")
    return emb.items @ emb.users[user]


def topk_ranked(scores: np.ndarray, mask, k: int) -> np.ndarray:
    """Indices of the k highest-scoring unmasked items, best first.

    Ties are broken by ascending item index. If fewer than k items remain
    after masking, the list is truncated with a warning.
    """
    s = np.asarray(scores, dtype=np.float64).copy()
    mask = np.asarray(mask, dtype=np.int64)
    s[mask] = -np.inf
    available = s.size - np.unique(mask).size
    if k > available:
        logger.warning("top-%d requested but only %d unmasked items; truncating", k, available)
        k = available
    order = np.argsort(-s, kind="stable")
    return order[:k]


def recall_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> float:
    """Fraction of the relevant items that appear in the top k."""
    rel = set(int(i) for i in relevant)
    if not rel:
        raise DataError("recall is undefined for an empty relevant set")
    hits = sum(1 for i in ranked[:k] if int(i) in rel)
    return hits / len(rel)


def ndcg_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> float:
    """Binary-relevance NDCG with 1/log2(rank+1) discounts, ranks from 1."""
    rel = set(int(i) for i in relevant)
    if not rel:
        raise DataError("ndcg is undefined for an empty relevant set")
    dcg = 0.0
    for rank, item in enumerate(ranked[:k], start=1):
        if int(item) in rel:
            dcg += 1.0 / math.log2(rank + 1)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(k, len(rel)) + 1))
    return dcg / idcg


@dataclass
class MetricsReport:
    """Macro-averaged ranking metrics plus run metadata."""

    recall: dict[int, float]
    ndcg: dict[int, float]
    num_users_evaluated: int
    config_hash: int = 0
    seed: int = 0
    epoch: int = 0

    def to_json(self) -> str:
        payload: dict = {}
        for k in sorted(self.recall):
            payload[f"recall@{k}"] = self.recall[k]
        for k in sorted(self.ndcg):
            payload[f"ndcg@{k}"] = self.ndcg[k]
        payload["users"] = self.num_users_evaluated
        payload["seed"] = self.seed
        payload["epoch"] = self.epoch
        payload["config_hash"] = f"0x{self.config_hash:016x}"
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        payload = json.loads(text)
        recall = {int(k.split("@")[1]): v for k, v in payload.items() if k.startswith("recall@")}
        ndcg = {int(k.split("@")[1]): v for k, v in payload.items() if k.startswith("ndcg@")}
        return cls(
            recall=recall,
            ndcg=ndcg,
            num_users_evaluated=payload["users"],
            config_hash=int(payload.get("config_hash", "0x0"), 16),
            seed=payload.get("seed", 0),
            epoch=payload.get("epoch", 0),
        )

    def to_table(self) -> str:
        cutoffs = sorted(self.recall)
        lines = ["cutoff    recall      ndcg"]
        for k in cutoffs:
            lines.append(f"@{k:<7d} {self.recall[k]:<11.6f} {self.ndcg[k]:.6f}")
        lines.append(
            f"users={self.num_users_evaluated}  seed={self.seed}  epoch={self.epoch}  "
            f"config=0x{self.config_hash:016x}"
        )
        return "\n".join(lines) + "\n"


def evaluate(
    emb: EmbeddingTable,
    mask_by_user: Sequence[np.ndarray] | None,
    relevant_by_user: Sequence[np.ndarray],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    config_hash: int = 0,
    seed: int = 0,
    epoch: int = 0,
) -> MetricsReport:
    """Rank all items for every user with held-out items and average metrics.

    ``mask_by_user[u]`` lists item indices excluded from user u's candidate
    set (their training interactions); ``relevant_by_user[u]`` the held-out
    items. Users without relevant items are skipped; if none remain the
    evaluation is refused.
    """
    cutoffs = sorted(set(int(k) for k in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    k_max = cutoffs[-1]
    empty = np.zeros(0, dtype=np.int64)

    recall_sums = {k: 0.0 for k in cutoffs}
    ndcg_sums = {k: 0.0 for k in cutoffs}
    evaluated = 0
    for user in range(emb.num_users):
        relevant = relevant_by_user[user] if user < len(relevant_by_user) else empty
        if len(relevant) == 0:
            continue
        mask = mask_by_user[user] if mask_by_user is not None else empty
        scores = predict_scores(emb, user)
        ranked = topk_ranked(scores, mask, k_max)
        for k in cutoffs:
            recall_sums[k] += recall_at_k(ranked, relevant, k)
            ndcg_sums[k] += ndcg_at_k(ranked, relevant, k)
        evaluated += 1

    if evaluated == 0:
        raise DataError("no users with held-out interactions to evaluate")
    return MetricsReport(
        recall={k: recall_sums[k] / evaluated for k in cutoffs},
        ndcg={k: ndcg_sums[k] / evaluated for k in cutoffs},
        num_users_evaluated=evaluated,
        config_hash=config_hash,
        seed=seed,
        epoch=epoch,
    )
