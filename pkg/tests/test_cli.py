import json
import os

import numpy as np
import pytest

from polisum.cli import ExperimentConfig, cli_main
from polisum.core import ConfigError, Summary
from polisum.evaluate import run_cross_matrix
from polisum.experiment import GridworldExperiment
from polisum.report import emit_heatmap
from polisum.sweep import read_sweep_rows, run_sweep, sweep_cells


def run_cli(*argv):
    return cli_main(list(argv))


class TestConfig:
    def test_round_trip_semantic_identity(self, tmp_path):
        cfg = ExperimentConfig(domain="pacman", summary_sizes=(12, 24),
                               n_restarts=5, master_seed=3, baselines=True)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        back = ExperimentConfig.from_sources(path)
        assert back == cfg

    def test_grid_membership_enforced(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(summary_sizes=(13,))
        cfg = ExperimentConfig(summary_sizes=(13,), allow_custom_grids=True)
        assert cfg.summary_sizes == (13,)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"no_such_key": 1}')
        with pytest.raises(ConfigError):
            ExperimentConfig.from_sources(path)

    def test_bad_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(il_kernel="sigmoid:2")


class TestCliCommands:
    def test_solve_twice_identical_bytes(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("solve", "--domain", "gridworld", "--seed", "7",
                       "--out", str(out)) == 0
        path = out / "gridworld" / "solve" / "policy_seed7.json"
        first = path.read_bytes()
        assert run_cli("solve", "--domain", "gridworld", "--seed", "7",
                       "--out", str(out)) == 0
        assert path.read_bytes() == first
        doc = json.loads(first)
        assert len(doc["canonical"]) == 81
        assert all(doc["canonical"][s] in doc["optimal_set"][s] for s in range(81))

    def test_extract_il_k12_is_singletons(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("extract", "--model", "il", "--domain", "gridworld",
                       "--k", "12", "--out", str(out)) == 0
        path = out / "gridworld" / "extract" / "summary_il_k12_seed0.json"
        doc = json.loads(path.read_text())
        assert doc["k"] == 12 and doc["l"] == 1
        assert len(doc["trajectories"]) == 12
        assert all(len(t) == 1 for t in doc["trajectories"])

    def test_extract_then_reconstruct_and_eval(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("extract", "--model", "irl", "--domain", "gridworld",
                       "--k", "12", "--irl-l", "3", "--out", str(out)) == 0
        summary = out / "gridworld" / "extract" / "summary_irl_k12_seed0.json"
        assert run_cli("reconstruct", "--model", "irl", "--domain", "gridworld",
                       "--summary", str(summary), "--out", str(out),
                       "--debug-dumps") == 0
        rec = out / "gridworld" / "reconstruct" / "reconstruction_irl.json"
        assert rec.exists()
        assert (out / "gridworld" / "reconstruct" / "debug_irl.json").exists()
        assert run_cli("eval", "--model", "il", "--domain", "gridworld",
                       "--summary", str(summary), "--out", str(out)) == 0
        score = json.loads((out / "gridworld" / "eval" / "score_il.json").read_text())
        assert 0.0 <= score["accuracy"] <= 1.0
        assert score["n_unseen"] > 0

    def test_unknown_flag_exits_one(self, capsys):
        assert run_cli("solve", "--bogus-flag") == 1

    def test_domain_mismatch_exits_one(self, tmp_path):
        out = tmp_path / "out"
        run_cli("extract", "--model", "il", "--domain", "gridworld",
                "--k", "12", "--out", str(out))
        summary = out / "gridworld" / "extract" / "summary_il_k12_seed0.json"
        assert run_cli("eval", "--model", "il", "--domain", "pacman",
                       "--summary", str(summary), "--out", str(out)) == 1

    def test_env_var_overrides_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("POLISUM_OUT", str(tmp_path / "envout"))
        assert run_cli("solve", "--domain", "gridworld", "--seed", "1",
                       "--out", str(tmp_path / "ignored")) == 0
        assert (tmp_path / "envout" / "gridworld" / "solve"
                / "policy_seed1.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_cross_matrix_artifacts(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("cross-matrix", "--domain", "gridworld", "--k", "12",
                       "--irl-l", "2", "--il-kernel", "rbf:1",
                       "--restarts", "2", "--workers", "1",
                       "--out", str(out)) == 0
        base = out / "gridworld" / "cross_matrix"
        for name in ("matrix.json", "rows.csv", "heatmap.svg", "log.txt"):
            assert (base / name).exists(), name
        doc = json.loads((base / "matrix.json").read_text())
        assert set(doc["cells"]) == {"il|il", "il|irl", "irl|il", "irl|irl"}
        assert "provenance" in doc

    def test_report_from_matrix(self, tmp_path):
        out = tmp_path / "out"
        run_cli("cross-matrix", "--domain", "gridworld", "--k", "12",
                "--irl-l", "2", "--il-kernel", "rbf:1", "--restarts", "1",
                "--workers", "1", "--out", str(out))
        src = out / "gridworld" / "cross_matrix"
        assert run_cli("report", "--from", str(src), "--domain", "gridworld",
                       "--out", str(out)) == 0
        assert (out / "gridworld" / "report" / "heatmap.svg").exists()


class TestHeatmap:
    def test_annotations_match_csv(self, tmp_path):
        matrix = run_cross_matrix("gridworld", 12, 2, "rbf:1", 2, 3)
        path = tmp_path / "hm.svg"
        emit_heatmap(matrix, path)
        svg = path.read_text()
        for (rec, ext), stats in matrix.cells.items():
            assert f"{stats.accuracy_mean:.2f}" in svg
            assert f"{stats.value_diff_scaled_mean:.2f}" in svg

    def test_empty_matrix_refused(self, tmp_path):
        from polisum.evaluate import CrossMatrix

        empty = CrossMatrix(domain="gridworld", k=1, l_irl=1, kernel="rbf:1",
                            master_seed=0, n_restarts=0, n_failures=0)
        with pytest.raises(ConfigError):
            emit_heatmap(empty, tmp_path / "x.svg")


class TestSweep:
    def small_kwargs(self, path):
        return dict(
            domain="gridworld", out_path=path, master_seed=4,
            sizes=(12,), traj_lengths=(1, 2), kernels=("rbf:1",),
            n_restarts=2, baselines=True, provenance="# provenance test",
        )

    def test_row_count_and_resume(self, tmp_path):
        full = tmp_path / "full.csv"
        run_sweep(**self.small_kwargs(full))
        rows = read_sweep_rows(full)
        # per restart: 2 irl + 1 il + 2 random_irl + 1 random_il = 6 cells
        assert len(rows) == 12
        cells = sweep_cells("gridworld", (12,), (1, 2), ("rbf:1",), 2, True)
        assert len(cells) == 12

        # interrupt after 5 rows: resumed file must match the clean run
        partial = tmp_path / "partial.csv"
        lines = full.read_text().splitlines(keepends=True)
        partial.write_text("".join(lines[: 2 + 5]))  # provenance + header + 5
        run_sweep(**{**self.small_kwargs(partial), "out_path": partial})
        assert partial.read_text() == full.read_text()

    def test_random_summary_full_budget_and_determinism(self):
        exp = GridworldExperiment(seed=2)
        a = exp.random_summary("il", 81, 1, seed=5)
        assert sorted(a.summary.states()) == list(range(81))
        b = exp.random_summary("il", 81, 1, seed=5)
        assert a.summary.pairs() == b.summary.pairs()
        c = exp.random_summary("irl", 12, 3, seed=5)
        assert c.summary.budget == 12
        assert all(len(t) == 3 for t in c.summary.trajectories)
