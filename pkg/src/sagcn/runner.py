"""End-to-end pipelines behind the CLI subcommands.

``run_train`` ingests (or loads) a dataset, splits it, trains on the
training edges with validation-based early stopping, evaluates on the test
edges with train+validation items masked, and writes three artifacts into
the output directory: ``model.ckpt`` (+ ``model.ckpt.cfg`` sidecar),
``train_log.tsv`` and ``report.json``. ``run_sweep`` repeats that over a
configuration grid with isolated per-row output directories.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import RunConfig
from .datasets import (
    SplitDataset,
    edges_to_user_lists,
    ingest_and_split,
    load_prepared,
    save_prepared,
)
from .errors import ConfigError, DataError, NumericError
from .evaluation import MetricsReport, evaluate
from .graph import InteractionGraph, build_graph, normalize_adjacency
from .io_utils import atomic_write_text
from .propagation import forward
from .training import TrainResult, format_log, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"
LOG_NAME = "train_log.tsv"
REPORT_NAME = "report.json"
SWEEP_NAME = "sweep.tsv"

SWEEP_COLUMNS = (
    "aggregator",
    "distance",
    "alpha",
    "beta",
    "seed",
    "status",
    "recall@10",
    "recall@20",
    "recall@50",
    "ndcg@10",
    "ndcg@20",
    "ndcg@50",
)


def load_dataset(cfg: RunConfig) -> SplitDataset:
    """Raw interaction file -> ingest+split; prepared directory -> load."""
    if not cfg.data:
        raise ConfigError("no dataset path given (use --data)")
    path = Path(cfg.data)
    if path.is_dir():
        return load_prepared(path)
    if not path.exists():
        raise ConfigError(f"dataset path {path} does not exist")
    return ingest_and_split(path, cfg.split_spec())


def _train_graph(ds: SplitDataset) -> InteractionGraph:
    return build_graph(ds.train_edges, ds.num_users, ds.num_items)


def train_and_evaluate(cfg: RunConfig, ds: SplitDataset) -> tuple[TrainResult, MetricsReport]:
    """Train on the training edges, report metrics on the test edges."""
    graph = _train_graph(ds)
    train_items = edges_to_user_lists(ds.train_edges, ds.num_users)
    val_items = edges_to_user_lists(ds.val_edges, ds.num_users)
    test_items = edges_to_user_lists(ds.test_edges, ds.num_users)

    result = train(
        graph,
        cfg.fusion_config(),
        cfg.train_config(),
        dim=cfg.dim,
        val_mask=train_items,
        val_relevant=val_items,
    )

    adj = normalize_adjacency(graph)
    final = forward(cfg.fusion_config(), adj, result.embeddings)
    seen = [
        np.union1d(train_items[u], val_items[u]) for u in range(ds.num_users)
    ]
    report = evaluate(
        final,
        seen,
        test_items,
        cutoffs=cfg.k,
        config_hash=cfg.config_hash(),
        seed=cfg.seed,
        epoch=result.best_epoch,
    )
    return result, report


def run_train(cfg: RunConfig) -> MetricsReport:
    ds = load_dataset(cfg)
    result, report = train_and_evaluate(cfg, ds)
    if result.diverged:
        logger.warning("run diverged; artifacts hold the last finite parameters")

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save_checkpoint(
        out / CHECKPOINT_NAME,
        result.embeddings,
        cfg.config_hash(),
        sidecar_text=cfg.canonical_text(),
    )
    atomic_write_text(out / LOG_NAME, format_log(result.log))
    atomic_write_text(out / REPORT_NAME, report.to_json())
    atomic_write_text(out / "user_ids.txt", "".join(t + "\n" for t in ds.user_ids))
    atomic_write_text(out / "item_ids.txt", "".join(t + "\n" for t in ds.item_ids))
    return report


def run_evaluate(cfg: RunConfig, checkpoint_path: str | Path) -> MetricsReport:
    """Evaluate a stored checkpoint against the test split of the dataset."""
    ds = load_dataset(cfg)
    table, stored_hash = ckpt.load_checkpoint(checkpoint_path)
    if table.num_users != ds.num_users or table.num_items != ds.num_items:
        raise DataError(
            f"checkpoint shape ({table.num_users} x {table.num_items}) does not match "
            f"dataset ({ds.num_users} x {ds.num_items})"
        )
    graph = _train_graph(ds)
    adj = normalize_adjacency(graph)
    final = forward(cfg.fusion_config(), adj, table)
    train_items = edges_to_user_lists(ds.train_edges, ds.num_users)
    val_items = edges_to_user_lists(ds.val_edges, ds.num_users)
    seen = [np.union1d(train_items[u], val_items[u]) for u in range(ds.num_users)]
    report = evaluate(
        final,
        seen,
        edges_to_user_lists(ds.test_edges, ds.num_users),
        cutoffs=cfg.k,
        config_hash=stored_hash,
        seed=cfg.seed,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / REPORT_NAME, report.to_json())
    return report


def run_prepare(cfg: RunConfig) -> SplitDataset:
    ds = load_dataset(cfg)
    save_prepared(cfg.out, ds)
    return ds


def density_report(graph: InteractionGraph) -> str:
    """One-line dataset statistics: sizes, interactions and sparsity."""
    m, n, e = graph.num_users, graph.num_items, graph.num_edges
    sparsity = 1.0 - e / (m * n)
    return f"users={m} items={n} interactions={e} sparsity={sparsity:.6f}"


def run_stats(cfg: RunConfig) -> str:
    ds = load_dataset(cfg)
    graph = build_graph(ds.all_edges(), ds.num_users, ds.num_items)
    return density_report(graph)


@dataclass
class SweepRow:
    aggregator: str
    distance: str
    alpha: float
    beta: float
    seed: int
    status: str = "ok"
    report: MetricsReport | None = None

    def recall20(self) -> float:
        return self.report.recall.get(20, float("nan")) if self.report else float("nan")

    def to_tsv(self) -> str:
        cells = [
            self.aggregator,
            self.distance,
            f"{self.alpha:g}",
            f"{self.beta:g}",
            str(self.seed),
            self.status,
        ]
        for prefix in ("recall", "ndcg"):
            for k in (10, 20, 50):
                value = float("nan")
                if self.report is not None:
                    value = getattr(self.report, prefix).get(k, float("nan"))
                cells.append(f"{value:.6f}")
        return "\t".join(cells)


def run_sweep(
    cfg: RunConfig,
    alphas: tuple[float, ...] | None = None,
    distances: tuple[str, ...] | None = None,
    aggregators: tuple[str, ...] | None = None,
    seeds: tuple[int, ...] | None = None,
) -> list[SweepRow]:
    """Train/evaluate one run per grid point and emit a sorted comparison table.

    The adaptive aggregator is swept over the alpha x distance grid; the
    mean baseline contributes one row per seed (its rows ignore alpha and
    distance). Failed runs become 'failed:<category>' rows and the sweep
    continues. Rows are sorted by Recall@20 descending, failures last, and
    written to ``<out>/sweep.tsv``.
    """
    alphas = alphas or (cfg.alpha,)
    distances = distances or (cfg.distance,)
    aggregators = aggregators or (cfg.aggregator,)
    seeds = seeds or (cfg.seed,)

    ds = load_dataset(cfg)
    out = Path(cfg.out)
    rows: list[SweepRow] = []
    grid: list[tuple[str, str, float, int]] = []
    for agg in aggregators:
        if agg == "mean":
            grid.extend(("mean", cfg.distance, cfg.alpha, s) for s in seeds)
        else:
            grid.extend(
                (agg, dist, a, s) for dist, a, s in itertools.product(distances, alphas, seeds)
            )

    for idx, (agg, dist, alpha, seed) in enumerate(grid):
        row_cfg = replace(
            cfg,
            aggregator=agg,
            distance=dist,
            alpha=alpha,
            seed=seed,
            out=str(out / "rows" / f"{idx:03d}_{agg}_{dist}_a{alpha:g}_s{seed}"),
        )
        try:
            beta = row_cfg.resolved_beta()
        except ConfigError:
            beta = float("nan")
        row = SweepRow(agg, dist, alpha, beta, seed)
        try:
            _, row.report = train_and_evaluate(row_cfg, ds)
        except ConfigError as exc:
            row.status = "failed:config"
            logger.error("sweep row %d failed: %s", idx, exc)
        except DataError as exc:
            row.status = "failed:data"
            logger.error("sweep row %d failed: %s", idx, exc)
        except (NumericError, FloatingPointError) as exc:
            row.status = "failed:numeric"
            logger.error("sweep row %d failed: %s", idx, exc)
        rows.append(row)

    rows.sort(key=lambda r: (r.status != "ok", -(r.recall20() if r.report else 0.0)))
    table = "\t".join(SWEEP_COLUMNS) + "\n" + "".join(r.to_tsv() + "\n" for r in rows)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / SWEEP_NAME, table)
    return rows
