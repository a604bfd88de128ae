"""Acceptance suite.

Each test verifies one release criterion at its stated tolerance and prints
a single PASS/FAIL line (run with ``pytest -s`` to see them). The heavier
criteria share module-scoped training fixtures.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from sagcn.config import DEFAULT_ALPHA_GRID, build_run_config
from sagcn.datasets import (
    SplitSpec,
    edges_to_user_lists,
    split,
    synthetic_two_block,
    write_interaction_file,
)
from sagcn.distances import DistanceKind, cosine_distance, row_distances
from sagcn.evaluation import evaluate, ndcg_at_k, recall_at_k, topk_ranked
from sagcn.graph import build_graph, normalize_adjacency
from sagcn.propagation import EmbeddingTable, FusionConfig, forward, fusion_weights
from sagcn.propagation import _fusion_weight_rows
from sagcn.runner import run_sweep, run_train
from sagcn.training import BprTriple, TrainConfig, loss_gradient, train
from sagcn.training import _batch_arrays

from oracles import oracle_forward, oracle_ndcg, oracle_recall, oracle_topk, relative_error

ALL_KINDS = (DistanceKind.EUCLIDEAN, DistanceKind.COSINE, DistanceKind.KL)
SYNTH_SEED = 20240501
TRAIN_SEEDS = (1, 2, 3)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def synth_split():
    records = synthetic_two_block(seed=SYNTH_SEED)
    return split(records, 200, 200, SplitSpec(seed=SYNTH_SEED))


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth") / "two_block.tsv"
    write_interaction_file(path, synthetic_two_block(seed=SYNTH_SEED))
    return path


@pytest.fixture(scope="module")
def sagcn_runs(synth_split):
    """Three seeded SAGCN-Euclidean training runs on the synthetic dataset."""
    ds = synth_split
    graph = build_graph(ds.train_edges, ds.num_users, ds.num_items)
    train_items = edges_to_user_lists(ds.train_edges, ds.num_users)
    val_items = edges_to_user_lists(ds.val_edges, ds.num_users)
    test_items = edges_to_user_lists(ds.test_edges, ds.num_users)
    seen = [np.union1d(train_items[u], val_items[u]) for u in range(ds.num_users)]

    fcfg = FusionConfig(
        distance_kind=DistanceKind.EUCLIDEAN, alpha=1.5, beta=1.0, num_layers=3
    )
    adj = normalize_adjacency(graph)
    started = time.perf_counter()
    runs = []
    for seed in TRAIN_SEEDS:
        result = train(
            graph, fcfg, TrainConfig(seed=seed), dim=64,
            val_mask=train_items, val_relevant=val_items,
        )
        final = forward(fcfg, adj, result.embeddings)
        rep = evaluate(final, seen, test_items, cutoffs=(20,))
        runs.append((seed, result, rep.recall[20]))
    elapsed = time.perf_counter() - started

    masked = [len(seen[u]) for u in range(ds.num_users)]
    random_expectation = float(np.mean([20.0 / (ds.num_items - m) for m in masked]))
    return runs, random_expectation, elapsed


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_criterion_01_full_scale_results_documented():
    """Full-scale published results are context in the docs, not test targets."""
    readme = Path(__file__).resolve().parents[1] / "README.md"
    text = readme.read_text(encoding="utf-8")
    ok = "0.0636" in text and "full-scale" in text.lower()
    report(1, ok, "README records full-scale reference results as context only")


def test_criterion_02_forward_oracle_equivalence():
    rng = np.random.default_rng(202)
    started = time.perf_counter()
    worst = 0.0
    for case in range(100):
        kind = ALL_KINDS[case % 3]
        m = int(rng.integers(1, 11))
        n = int(rng.integers(1, 11))
        k = int(rng.integers(1, 4))
        d = int(rng.integers(1, 5))
        edges = [(int(u), int(i)) for u, i in np.argwhere(rng.random((m, n)) < 0.45)]
        g = build_graph(edges, m, n)
        base = EmbeddingTable(users=rng.normal(size=(m, d)), items=rng.normal(size=(n, d)))
        alpha = float(rng.uniform(0.5, 5.0))
        beta = float(rng.uniform(0.1, 2.0)) if kind is not DistanceKind.KL else 100.0
        cfg = FusionConfig(distance_kind=kind, alpha=alpha, beta=beta, num_layers=k)
        got = forward(cfg, normalize_adjacency(g), base).stacked()
        expected = np.array(
            oracle_forward(
                kind.value, alpha, beta, k, "sagcn", m, n, g.edges.tolist(),
                base.stacked().tolist(),
            )
        )
        worst = max(worst, float(np.max(np.abs(got - expected))) if got.size else 0.0)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-10 and elapsed < 10.0
    report(2, ok, f"100 random graphs, max |forward - oracle| = {worst:.3g} in {elapsed:.2f}s")


def test_criterion_03_gradient_check():
    rng = np.random.default_rng(303)
    started = time.perf_counter()
    worst = 0.0
    for case in range(20):
        kind = ALL_KINDS[case % 3]
        while True:
            edges = [(int(u), int(i)) for u, i in np.argwhere(rng.random((4, 5)) < 0.5)]
            degs = [sum(1 for e in edges if e[0] == u) for u in range(4)]
            if all(0 < deg < 5 for deg in degs):
                break
        g = build_graph(edges, 4, 5)
        adj = normalize_adjacency(g)
        base = EmbeddingTable(users=rng.normal(0, 0.5, (4, 4)), items=rng.normal(0, 0.5, (5, 4)))
        fcfg = FusionConfig(distance_kind=kind, num_layers=2)
        tcfg = TrainConfig(reg_lambda=1e-4)
        batch = []
        for _ in range(8):
            u, i = (int(v) for v in g.edges[rng.integers(0, g.num_edges)])
            j = int(rng.integers(0, 5))
            while j in g.user_item_sets[u]:
                j = int(rng.integers(0, 5))
            batch.append(BprTriple(u, i, j))

        grad = loss_gradient(fcfg, tcfg, adj, base, batch).stacked()

        def batch_loss(table):
            final = forward(fcfg, adj, table)
            uu, ii, jj = _batch_arrays(batch)
            margin = np.sum(final.users[uu] * (final.items[ii] - final.items[jj]), axis=1)
            return float(np.sum(np.logaddexp(0.0, -margin))) + tcfg.reg_lambda * table.sum_of_squares()

        h = 1e-4
        stacked = base.stacked()
        for r in range(9):
            for c in range(4):
                if abs(grad[r, c]) <= 1e-8:
                    continue
                plus = stacked.copy()
                plus[r, c] += h
                minus = stacked.copy()
                minus[r, c] -= h
                fd = (
                    batch_loss(EmbeddingTable.from_stacked(plus, 4))
                    - batch_loss(EmbeddingTable.from_stacked(minus, 4))
                ) / (2 * h)
                worst = max(worst, relative_error(grad[r, c], fd))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-4 and elapsed < 60.0
    report(3, ok, f"20 instances, max relative gradient error = {worst:.3g} in {elapsed:.2f}s")


def test_criterion_04_fusion_weight_properties():
    rng = np.random.default_rng(404)
    started = time.perf_counter()
    n = 100_000
    alphas = rng.uniform(0.01, 5.0, size=n)
    betas = rng.uniform(0.001, 100.0, size=n)
    dists = rng.uniform(1e-9, 10.0, size=n)

    def w_new_of(a, b, d):
        _, _, w_new = _fusion_weight_rows(a, b, d)
        return w_new

    worst_sum = 0.0
    for i in range(0, n, 20_000):
        sl = slice(i, i + 20_000)
        _, w_old, w_new = _fusion_weight_rows(alphas[sl], betas[sl], dists[sl])
        worst_sum = max(worst_sum, float(np.max(np.abs(w_old + w_new - 1.0))))
    simplex_ok = worst_sum <= 1e-12

    _, w_old_zero, _ = _fusion_weight_rows(alphas, betas, np.zeros(n))
    zero_ok = bool(np.all(w_old_zero == 1.0))

    base = w_new_of(alphas, betas, dists)
    mono_ok = (
        bool(np.all(w_new_of(alphas, betas, dists * 1.25) > base))
        and bool(np.all(w_new_of(alphas * 1.25, betas, dists) > base))
        and bool(np.all(w_new_of(alphas, betas * 1.25, dists) > base))
    )

    # spot-check the scalar operation against the vectorized route
    for _ in range(1000):
        a, b, d = (float(rng.uniform(0.01, 5)), float(rng.uniform(0.001, 100)), float(rng.uniform(0, 10)))
        w = fusion_weights(FusionConfig(alpha=a, beta=b), d)
        assert abs(w.w_old + w.w_new - 1.0) <= 1e-12

    elapsed = time.perf_counter() - started
    ok = simplex_ok and zero_ok and mono_ok and elapsed < 5.0
    report(
        4,
        ok,
        f"1e5 triples: |w_old+w_new-1| <= {worst_sum:.3g}, zero-dist exact, "
        f"strictly monotone, in {elapsed:.2f}s",
    )


def test_criterion_05_distance_properties():
    rng = np.random.default_rng(505)
    X = rng.normal(size=(10_000, 8)) * rng.uniform(0.1, 3.0, size=(10_000, 1))
    Y = rng.normal(size=(10_000, 8)) * rng.uniform(0.1, 3.0, size=(10_000, 1))
    Z = rng.normal(size=(10_000, 8))

    nonneg_ok = all(bool(np.all(row_distances(k, X, Y) >= 0.0)) for k in ALL_KINDS)

    cos = row_distances(DistanceKind.COSINE, X, Y)
    cosine_range_ok = bool(np.all((cos >= 0.0) & (cos <= 1.0)))

    d_xz = row_distances(DistanceKind.EUCLIDEAN, X, Z)
    d_xy = row_distances(DistanceKind.EUCLIDEAN, X, Y)
    d_yz = row_distances(DistanceKind.EUCLIDEAN, Y, Z)
    triangle_ok = bool(np.all(d_xz <= d_xy + d_yz + 1e-9))

    kl = row_distances(DistanceKind.KL, X, Y)
    kl_self = row_distances(DistanceKind.KL, X, X.copy())
    kl_ok = bool(np.all(kl >= 0.0)) and bool(np.all(kl_self <= 1e-12))
    # zero only when the normalized vectors coincide
    bumped = X.copy()
    bumped[:, 0] += 0.5
    kl_ok = kl_ok and bool(np.all(row_distances(DistanceKind.KL, X, bumped) > 1e-12))

    anti = cosine_distance(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    anti_ok = anti <= 1e-8

    ok = nonneg_ok and cosine_range_ok and triangle_ok and kl_ok and anti_ok
    report(
        5,
        ok,
        "non-negativity, cosine range, triangle inequality (1e4 triples), "
        f"KL zero-iff-equal, anti-parallel cosine = {anti:.3g}",
    )


def test_criterion_06_metric_oracles():
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(10, 40))
        scores = rng.normal(size=n)
        mask = rng.choice(n, size=int(rng.integers(0, min(5, n - 4) + 1)), replace=False)
        pool = np.setdiff1d(np.arange(n), mask)
        relevant = rng.choice(pool, size=int(rng.integers(1, min(6, len(pool)))), replace=False)
        k = int(rng.integers(1, n - len(mask) + 1))
        ranked = topk_ranked(scores, mask, k).tolist()
        assert ranked == oracle_topk(scores.tolist(), mask.tolist(), k)
        worst = max(
            worst,
            abs(recall_at_k(ranked, relevant, k) - oracle_recall(ranked, relevant, k)),
            abs(ndcg_at_k(ranked, relevant, k) - oracle_ndcg(ranked, relevant, k)),
        )
    rank2 = ndcg_at_k([3, 7, 1], {7}, 10)
    rank2_ok = abs(rank2 - 0.6309297535714574) <= 1e-9
    ok = worst <= 1e-12 and rank2_ok
    report(6, ok, f"1000 ranking tasks, max |metric - oracle| = {worst:.3g}; rank-2 NDCG ok")


def test_criterion_07_end_to_end_learning(sagcn_runs):
    runs, random_expectation, elapsed = sagcn_runs
    threshold = 2.5 * random_expectation
    recalls = {seed: recall for seed, _, recall in runs}
    recall_ok = all(r >= threshold for r in recalls.values())

    decrease_ok = True
    fractions = []
    for _, result, _ in runs:
        losses = [rec.loss for rec in result.log]
        window = 3
        smoothed = [float(np.mean(losses[max(0, i - window + 1) : i + 1])) for i in range(len(losses))]
        transitions = [smoothed[i + 1] < smoothed[i] for i in range(len(smoothed) - 1)]
        frac = float(np.mean(transitions)) if transitions else 0.0
        fractions.append(frac)
        decrease_ok = decrease_ok and frac >= 0.8

    ok = recall_ok and decrease_ok and elapsed < 300.0
    report(
        7,
        ok,
        f"recall@20 per seed {sorted(recalls.values())} vs threshold {threshold:.4f}; "
        f"smoothed-loss decreasing fractions {fractions}; {elapsed:.1f}s",
    )


def test_criterion_08_baseline_comparison(synth_file, tmp_path):
    cfg = build_run_config(
        flag_values={
            "data": str(synth_file),
            "out": str(tmp_path / "sweep8"),
            "seed": SYNTH_SEED,
            "alpha": 1.5,
            "beta": 1.0,
            "distance": "euclidean",
        }
    )
    rows = run_sweep(cfg, aggregators=("sagcn", "mean"), seeds=TRAIN_SEEDS)
    assert (tmp_path / "sweep8" / "sweep.tsv").exists()
    ok_rows = [r for r in rows if r.status == "ok"]
    sagcn_mean = float(np.mean([r.recall20() for r in ok_rows if r.aggregator == "sagcn"]))
    base_mean = float(np.mean([r.recall20() for r in ok_rows if r.aggregator == "mean"]))
    ok = len(ok_rows) == 6 and sagcn_mean >= base_mean * 0.99
    report(
        8,
        ok,
        f"sweep table emitted; mean recall@20 adaptive {sagcn_mean:.4f} "
        f"vs layer-mean baseline {base_mean:.4f}",
    )


def test_criterion_09_determinism(synth_file, tmp_path):
    flags = {
        "data": str(synth_file),
        "seed": 7,
        "epochs": 5,
        "dim": 16,
        "batch": 512,
    }
    cfg_a = build_run_config(flag_values={**flags, "out": str(tmp_path / "a")})
    cfg_b = build_run_config(flag_values={**flags, "out": str(tmp_path / "b")})
    run_train(cfg_a)
    run_train(cfg_b)
    bytes_a = (tmp_path / "a" / "model.ckpt").read_bytes()
    bytes_b = (tmp_path / "b" / "model.ckpt").read_bytes()

    from sagcn.checkpoint import load_checkpoint, save_checkpoint

    table, h = load_checkpoint(tmp_path / "a" / "model.ckpt")
    save_checkpoint(tmp_path / "resaved.ckpt", table, h)
    roundtrip = (tmp_path / "resaved.ckpt").read_bytes()

    ok = bytes_a == bytes_b and roundtrip == bytes_a
    report(9, ok, "identical seeds give bitwise-identical checkpoints; round-trip identical")


def test_criterion_10_alpha_sensitivity_harness(synth_file, tmp_path):
    cfg = build_run_config(
        flag_values={
            "data": str(synth_file),
            "out": str(tmp_path / "sweep10"),
            "seed": SYNTH_SEED,
            "distance": "euclidean",
            "beta": 1.0,
            "epochs": 40,
        }
    )
    rows = run_sweep(cfg, alphas=DEFAULT_ALPHA_GRID)
    table_lines = (tmp_path / "sweep10" / "sweep.tsv").read_text().splitlines()
    ok = len(rows) == 7 and len(table_lines) == 8
    alphas_seen = sorted(r.alpha for r in rows)
    ok = ok and alphas_seen == sorted(DEFAULT_ALPHA_GRID)
    for line in table_lines[1:]:
        cells = line.split("\t")
        ok = ok and cells[5] == "ok"
        for value in cells[6:]:
            ok = ok and 0.0 <= float(value) <= 1.0
    report(10, ok, f"alpha grid {alphas_seen} produced {len(rows)} well-formed rows")
