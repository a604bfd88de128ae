import json

import pytest

from sagcn.checkpoint import load_checkpoint
from sagcn.cli import main
from sagcn.config import build_run_config, parse_config_file
from sagcn.datasets import synthetic_two_block, write_interaction_file
from sagcn.errors import ConfigError


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.tsv"
    records = synthetic_two_block(
        num_users=40, num_items=40, interactions_per_user=10, subgroups_per_cluster=2, seed=17
    )
    write_interaction_file(path, records)
    return path


class TestRunConfig:
    def test_defaults(self):
        cfg = build_run_config()
        assert cfg.alpha == 1.5 and cfg.layers == 3 and cfg.dim == 64
        assert cfg.k == (10, 20, 50)
        assert cfg.patience == 5 and cfg.batch == 2048

    def test_beta_defaults_follow_distance(self):
        assert build_run_config(flag_values={"distance": "euclidean"}).resolved_beta() == 1.0
        assert build_run_config(flag_values={"distance": "cosine"}).resolved_beta() == 0.001
        assert build_run_config(flag_values={"distance": "kl"}).resolved_beta() == 100.0

    def test_flags_override_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("alpha = 2.0\nseed = 7\n# comment\nlayers = 4\n")
        file_values = parse_config_file(cfg_file)
        cfg = build_run_config(file_values, {"alpha": 0.8})
        assert cfg.alpha == 0.8  # flag wins
        assert cfg.seed == 7 and cfg.layers == 4  # file wins over defaults

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("momentum = 0.9\n")
        with pytest.raises(ConfigError):
            parse_config_file(cfg_file)

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            build_run_config(flag_values={"layers": "three"})
        with pytest.raises(ConfigError):
            build_run_config(flag_values={"alpha": -1.0})

    def test_config_hash_tracks_content(self):
        a = build_run_config(flag_values={"alpha": 1.5})
        b = build_run_config(flag_values={"alpha": 1.5})
        c = build_run_config(flag_values={"alpha": 2.0})
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_canonical_text_resolves_beta(self):
        cfg = build_run_config(flag_values={"distance": "kl"})
        assert "beta = 100.0" in cfg.canonical_text()


class TestCli:
    def test_missing_data_is_config_error(self, tmp_path, capsys):
        assert main(["train", "--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_nonexistent_data_is_config_error(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.tsv"), "--out", str(tmp_path)]) == 2

    def test_stats(self, tiny_dataset, capsys):
        assert main(["stats", "--data", str(tiny_dataset)]) == 0
        out = capsys.readouterr().out
        assert "users=40" in out and "items=40" in out
        assert "interactions=400" in out
        assert f"sparsity={1 - 400 / 1600:.6f}" in out

    def test_density_report_trivial_cases(self):
        from sagcn.graph import build_graph
        from sagcn.runner import density_report

        assert "sparsity=0.000000" in density_report(build_graph([(0, 0)], 1, 1))
        assert "sparsity=0.750000" in density_report(build_graph([(0, 1)], 2, 2))

    def test_prepare_then_train_from_directory(self, tiny_dataset, tmp_path, capsys):
        prep = tmp_path / "prep"
        assert main(["prepare", "--data", str(tiny_dataset), "--out", str(prep), "--seed", "3"]) == 0
        assert (prep / "train.tsv").exists() and (prep / "user_ids.txt").exists()
        out_dir = tmp_path / "run"
        code = main(
            ["train", "--data", str(prep), "--out", str(out_dir),
             "--dim", "8", "--epochs", "3", "--batch", "64", "--k", "5,10", "--seed", "3"]
        )
        assert code == 0
        assert (out_dir / "model.ckpt").exists()
        assert (out_dir / "train_log.tsv").exists()
        report = json.loads((out_dir / "report.json").read_text())
        assert "recall@5" in report and "ndcg@10" in report

    def test_full_train_artifacts_and_determinism(self, tiny_dataset, tmp_path):
        args = ["--data", str(tiny_dataset), "--dim", "8", "--epochs", "4",
                "--batch", "64", "--seed", "11", "--k", "5,10"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--out", str(out_a), *args]) == 0
        assert main(["train", "--out", str(out_b), *args]) == 0
        ckpt_a = (out_a / "model.ckpt").read_bytes()
        ckpt_b = (out_b / "model.ckpt").read_bytes()
        assert ckpt_a == ckpt_b
        log_a = (out_a / "train_log.tsv").read_text().splitlines()
        assert log_a[0].startswith("epoch\tloss\tval_recall@20")
        assert len(log_a) == 5  # header + 4 epochs

    def test_evaluate_checkpoint(self, tiny_dataset, tmp_path, capsys):
        out_dir = tmp_path / "run"
        args = ["--data", str(tiny_dataset), "--dim", "8", "--epochs", "2",
                "--batch", "64", "--seed", "1"]
        assert main(["train", "--out", str(out_dir), *args]) == 0
        capsys.readouterr()
        code = main(
            ["evaluate", "--checkpoint", str(out_dir / "model.ckpt"),
             "--out", str(tmp_path / "eval"), *args]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "recall" in out and "@20" in out
        table, stored_hash = load_checkpoint(out_dir / "model.ckpt")
        assert table.num_users == 40
        assert stored_hash != 0

    def test_sweep_rows(self, tiny_dataset, tmp_path, capsys):
        out_dir = tmp_path / "sweep"
        code = main(
            ["sweep", "--data", str(tiny_dataset), "--out", str(out_dir),
             "--dim", "8", "--epochs", "2", "--batch", "64",
             "--alphas", "0.5,1.5", "--aggregators", "sagcn,mean", "--seed", "2"]
        )
        assert code == 0
        lines = (out_dir / "sweep.tsv").read_text().splitlines()
        assert lines[0].split("\t")[:6] == ["aggregator", "distance", "alpha", "beta", "seed", "status"]
        rows = [ln.split("\t") for ln in lines[1:]]
        assert len(rows) == 3  # 2 alphas for sagcn + 1 mean row
        assert all(r[5] == "ok" for r in rows)
        recalls = [float(r[7]) for r in rows]
        assert recalls == sorted(recalls, reverse=True)

    def test_sweep_single_point_matches_single_run(self, tiny_dataset, tmp_path):
        from sagcn.config import build_run_config
        from sagcn.runner import run_sweep, run_train

        flags = {"data": str(tiny_dataset), "dim": 8, "epochs": 2, "batch": 64, "seed": 4}
        report = run_train(build_run_config(flag_values={**flags, "out": str(tmp_path / "single")}))
        rows = run_sweep(build_run_config(flag_values={**flags, "out": str(tmp_path / "grid")}))
        assert len(rows) == 1
        assert rows[0].report.recall == report.recall
        assert rows[0].report.ndcg == report.ndcg

    def test_sweep_records_failed_rows_and_continues(self, tiny_dataset, tmp_path):
        from sagcn.config import build_run_config
        from sagcn.runner import run_sweep

        cfg = build_run_config(
            flag_values={"data": str(tiny_dataset), "out": str(tmp_path / "sweep"),
                         "dim": 8, "epochs": 2, "batch": 64}
        )
        rows = run_sweep(cfg, alphas=(1.0, -1.0))
        statuses = sorted(r.status for r in rows)
        assert statuses == ["failed:config", "ok"]
        lines = (tmp_path / "sweep" / "sweep.tsv").read_text().splitlines()
        assert len(lines) == 3
        assert lines[-1].split("\t")[5] == "failed:config"  # failures sort last

    def test_sidecar_is_reusable_config(self, tiny_dataset, tmp_path):
        out_dir = tmp_path / "run"
        assert main(
            ["train", "--data", str(tiny_dataset), "--out", str(out_dir),
             "--dim", "8", "--epochs", "2", "--batch", "64", "--seed", "5", "--alpha", "0.9"]
        ) == 0
        sidecar = out_dir / "model.ckpt.cfg"
        values = parse_config_file(sidecar)
        cfg = build_run_config(values)
        assert cfg.alpha == 0.9 and cfg.dim == 8
