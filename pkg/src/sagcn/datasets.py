"""Dataset ingestion, deterministic splitting, and the synthetic benchmark.

Interaction files are line-oriented: one ``user<sep>item`` pair per line,
tab- or comma-separated (detected from the first line), with an optional
header. Tokens are remapped to dense indices in first-seen order and the
id maps are persisted next to the split so runs are reproducible.

Splitting is per-user random: each user's interactions are shuffled with a
seeded generator, floor(n * train_fraction) (at least 1) go to the training
side and the rest to test; a validation slice is then carved out of the
training side the same way. Users with a single interaction stay entirely
in train.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .io_utils import atomic_write_text

logger = logging.getLogger(__name__)

_HEADER_USER_TOKENS = {"user", "users", "user_id", "userid", "uid"}
_HEADER_ITEM_TOKENS = {"item", "items", "item_id", "itemid", "iid"}


@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction: float = 0.1  # of the training side, per user
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class SplitDataset:
    """Disjoint train/validation/test edge sets over dense indices."""

    num_users: int
    num_items: int
    train_edges: np.ndarray  # (k, 2) int64
    val_edges: np.ndarray
    test_edges: np.ndarray
    user_ids: list[str]
    item_ids: list[str]

    @property
    def num_interactions(self) -> int:
        return len(self.train_edges) + len(self.val_edges) + len(self.test_edges)

    def all_edges(self) -> np.ndarray:
        return np.vstack([self.train_edges, self.val_edges, self.test_edges])


def _detect_separator(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    raise DataError("could not detect separator: first line contains neither tab nor comma")


def _is_header(tokens: list[str]) -> bool:
    return tokens[0].lower() in _HEADER_USER_TOKENS and tokens[1].lower() in _HEADER_ITEM_TOKENS


def ingest(path: str | Path):
    """Parse an interaction file into dense-index records plus id maps.

    Returns ``(records, user_ids, item_ids)`` where records is an (E, 2)
    int64 array in first-seen order with exact duplicates removed (the
    number removed is logged). Extra columns are ignored.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read interaction file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        raise DataError(f"interaction file {path} is empty")

    first = next(ln for ln in lines if ln.strip())
    sep = _detect_separator(first)

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    records: list[tuple[int, int]] = []
    duplicates = 0
    header_skipped = False
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        tokens = [t.strip() for t in line.split(sep)]
        if len(tokens) < 2 or not tokens[0] or not tokens[1]:
            raise DataError(f"{path}:{lineno}: expected at least two non-empty fields")
        if not header_skipped:
            header_skipped = True
            if _is_header(tokens):
                continue
        u = user_index.setdefault(tokens[0], len(user_index))
        i = item_index.setdefault(tokens[1], len(item_index))
        if (u, i) in seen:
            duplicates += 1
            continue
        seen.add((u, i))
        records.append((u, i))

    if duplicates:
        logger.info("ingest %s: removed %d duplicate interactions", path, duplicates)
    if not records:
        raise DataError(f"interaction file {path} contains no interactions")
    return (
        np.asarray(records, dtype=np.int64),
        list(user_index),
        list(item_index),
    )


def split(
    records: np.ndarray,
    num_users: int,
    num_items: int,
    spec: SplitSpec,
    user_ids: list[str] | None = None,
    item_ids: list[str] | None = None,
) -> SplitDataset:
    """Per-user random split into disjoint train/validation/test edge sets."""
    records = np.asarray(records, dtype=np.int64)
    per_user: list[list[int]] = [[] for _ in range(num_users)]
    for u, i in records:
        per_user[u].append(int(i))

    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for u in range(num_users):
        items = per_user[u]
        n = len(items)
        if n == 0:
            continue
        items = [items[j] for j in rng.permutation(n)]
        if n == 1:
            train.append((u, items[0]))
            continue
        n_train_side = max(1, int(n * spec.train_fraction))
        train_side, test_items = items[:n_train_side], items[n_train_side:]
        if n_train_side >= 2:
            n_val = max(1, int(n_train_side * spec.validation_fraction))
            val_items = train_side[n_train_side - n_val :]
            train_side = train_side[: n_train_side - n_val]
        else:
            val_items = []
        train.extend((u, i) for i in train_side)
        val.extend((u, i) for i in val_items)
        test.extend((u, i) for i in test_items)

    def as_array(pairs):
        return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    return SplitDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=as_array(train),
        val_edges=as_array(val),
        test_edges=as_array(test),
        user_ids=user_ids if user_ids is not None else [str(u) for u in range(num_users)],
        item_ids=item_ids if item_ids is not None else [str(i) for i in range(num_items)],
    )


def ingest_and_split(path: str | Path, spec: SplitSpec) -> SplitDataset:
    records, user_ids, item_ids = ingest(path)
    return split(records, len(user_ids), len(item_ids), spec, user_ids, item_ids)


def edges_to_user_lists(edges: np.ndarray, num_users: int) -> list[np.ndarray]:
    """Group an edge array into per-user sorted item-index arrays."""
    lists: list[list[int]] = [[] for _ in range(num_users)]
    for u, i in np.asarray(edges, dtype=np.int64):
        lists[u].append(int(i))
    return [np.asarray(sorted(l), dtype=np.int64) for l in lists]


# ---------------------------------------------------------------------------
# Prepared-directory persistence
# ---------------------------------------------------------------------------

_META_NAME = "meta.txt"
_SPLIT_FILES = {"train": "train.tsv", "val": "val.tsv", "test": "test.tsv"}


def save_prepared(out_dir: str | Path, ds: SplitDataset) -> None:
    """Persist a split dataset (edges, id maps, counts) into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = f"num_users = {ds.num_users}\nnum_items = {ds.num_items}\n"
    atomic_write_text(out / _META_NAME, meta)
    atomic_write_text(out / "user_ids.txt", "".join(t + "\n" for t in ds.user_ids))
    atomic_write_text(out / "item_ids.txt", "".join(t + "\n" for t in ds.item_ids))
    for name, fname in _SPLIT_FILES.items():
        edges = getattr(ds, f"{name}_edges")
        atomic_write_text(out / fname, "".join(f"{u}\t{i}\n" for u, i in edges))


def load_prepared(in_dir: str | Path) -> SplitDataset:
    """Load a dataset previously written by ``save_prepared``."""
    d = Path(in_dir)
    if not (d / _META_NAME).exists():
        raise DataError(f"{d} is not a prepared dataset directory (missing {_META_NAME})")
    meta = {}
    for line in (d / _META_NAME).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    num_users = int(meta["num_users"])
    num_items = int(meta["num_items"])

    def read_edges(fname):
        rows = []
        for line in (d / fname).read_text().splitlines():
            if line.strip():
                u, i = line.split("\t")
                rows.append((int(u), int(i)))
        return np.asarray(rows, dtype=np.int64).reshape(-1, 2)

    return SplitDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=read_edges(_SPLIT_FILES["train"]),
        val_edges=read_edges(_SPLIT_FILES["val"]),
        test_edges=read_edges(_SPLIT_FILES["test"]),
        user_ids=(d / "user_ids.txt").read_text().splitlines(),
        item_ids=(d / "item_ids.txt").read_text().splitlines(),
    )


# ---------------------------------------------------------------------------
# Synthetic benchmark
# ---------------------------------------------------------------------------


def synthetic_two_block(
    num_users: int = 200,
    num_items: int = 200,
    interactions_per_user: int = 25,
    subgroups_per_cluster: int = 4,
    own_subgroup_prob: float = 0.8,
    seed: int = 20240501,
) -> np.ndarray:
    """Interaction records for a two-cluster benchmark with learnable structure.

    Users and items are split into two equal, disjoint clusters; every user
    interacts only within their own cluster. Inside a cluster, users and
    items form aligned subgroups and each interaction lands in the user's
    own subgroup with probability ``own_subgroup_prob`` (uniform over the
    rest of the cluster otherwise). The subgroup skew gives a ranking
    signal finer than bare cluster membership, so held-out interactions are
    predictable well above chance.

    Returns an (E, 2) int64 record array, one row per interaction, users in
    ascending order.
    """
    if num_users % 2 or num_items % 2:
        raise ValueError("user and item counts must be even (two equal clusters)")
    cluster_users = num_users // 2
    cluster_items = num_items // 2
    if cluster_items % subgroups_per_cluster:
        raise ValueError("cluster item count must divide evenly into subgroups")
    sub_items = cluster_items // subgroups_per_cluster
    if interactions_per_user > cluster_items:
        raise ValueError("more interactions per user than items in the cluster")

    rng = np.random.default_rng(seed)
    records = []
    for u in range(num_users):
        cluster = u // cluster_users
        base = cluster * cluster_items
        sub = (u % cluster_users) * subgroups_per_cluster // cluster_users
        own = np.arange(base + sub * sub_items, base + (sub + 1) * sub_items)
        rest = np.setdiff1d(np.arange(base, base + cluster_items), own)

        n_own = min(int(rng.binomial(interactions_per_user, own_subgroup_prob)), len(own))
        n_rest = interactions_per_user - n_own
        chosen = np.concatenate(
            [
                rng.choice(own, size=n_own, replace=False),
                rng.choice(rest, size=n_rest, replace=False),
            ]
        )
        records.extend((u, int(i)) for i in chosen)
    return np.asarray(records, dtype=np.int64)


def write_interaction_file(path: str | Path, records: np.ndarray, sep: str = "\t") -> None:
    """Write records as a raw interaction file with u<n>/i<n> tokens."""
    lines = "".join(f"u{u}{sep}i{i}\n" for u, i in np.asarray(records, dtype=np.int64))
    atomic_write_text(Path(path), lines)
