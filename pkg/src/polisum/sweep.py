"""Matched-model hyperparameter sweep with seeded restarts, incremental CSV
persistence and resume, plus random-summary baselines."""

from __future__ import annotations

import csv
import os
import traceback
from dataclasses import dataclass

import numpy as np

from .core import ConfigError
from .evaluate import restart_seed, score_accuracy, score_value_diff
from .experiment import make_experiment
from .il import KernelSpec

PAPER_SIZES = (12, 24, 36, 48, 60)
PAPER_TRAJ_LENGTHS = (1, 2, 3, 4)
PAPER_KERNELS = ("rbf:0.1", "rbf:1", "poly:0.1:2", "poly:0.1:3",
                 "poly:1:2", "poly:1:3")

CSV_FIELDS = ("domain", "method", "hyperparams", "summary_size", "restart",
              "accuracy", "value_diff_raw")


@dataclass(frozen=True)
class SweepCell:
    domain: str
    method: str  # "irl" | "il" | "random_irl" | "random_il"
    hyperparams: str  # "l=3" or a kernel string
    summary_size: int
    restart: int

    @property
    def key(self) -> tuple:
        return (self.domain, self.method, self.hyperparams,
                str(self.summary_size), str(self.restart))


def sweep_cells(domain: str, sizes, traj_lengths, kernels, n_restarts: int,
                baselines: bool) -> list[SweepCell]:
    """Deterministic cell order: restart-major so one environment build
    serves every method and size."""
    cells = []
    for restart in range(n_restarts):
        for size in sizes:
            for l in traj_lengths:
                cells.append(SweepCell(domain, "irl", f"l={l}", size, restart))
            for kernel in kernels:
                cells.append(SweepCell(domain, "il", kernel, size, restart))
            if baselines:
                for l in traj_lengths:
                    cells.append(
                        SweepCell(domain, "random_irl", f"l={l}", size, restart)
                    )
                cells.append(SweepCell(domain, "random_il", "l=1", size, restart))
    return cells


def _traj_length(hyperparams: str) -> int:
    if not hyperparams.startswith("l="):
        raise ConfigError(f"expected trajectory-length hyperparams, got {hyperparams!r}")
    return int(hyperparams[2:])


_METHOD_STREAMS = {"irl": 1, "il": 2, "random_irl": 3, "random_il": 4}


def evaluate_cell(exp, cell: SweepCell, master_seed: int) -> tuple[float, float]:
    """Matched-model extraction and reconstruction for one sweep cell."""
    seed = restart_seed(master_seed, cell.restart,
                        100 * _METHOD_STREAMS[cell.method] + cell.summary_size)
    if cell.method == "irl":
        tagged = exp.extract_irl(cell.summary_size, _traj_length(cell.hyperparams), seed)
    elif cell.method == "il":
        tagged = exp.extract_il(cell.summary_size, KernelSpec.parse(cell.hyperparams))
    elif cell.method == "random_irl":
        tagged = exp.random_summary("irl", cell.summary_size,
                                    _traj_length(cell.hyperparams), seed)
    elif cell.method == "random_il":
        tagged = exp.random_summary("il", cell.summary_size, 1, seed)
    else:
        raise ConfigError(f"unknown sweep method {cell.method!r}")

    unseen = exp.unseen_of(tagged)
    if cell.method.endswith("irl"):
        policy = exp.reconstruct_irl(tagged)
        preds = exp.irl_predictions(policy, unseen)
        value = exp.value_of_irl(policy)
    else:
        kernel = KernelSpec.parse(
            cell.hyperparams if cell.method == "il" else "rbf:1"
        )
        preds, model = exp.reconstruct_il(tagged, kernel)
        value = exp.value_of_il(tagged, preds, unseen, model)
    accuracy = score_accuracy(exp.demo_policy, preds, unseen)
    return accuracy, score_value_diff(exp.value_star(), value)


class SweepWriter:
    """Append-only CSV of sweep rows with a provenance comment line; existing
    rows are loaded so re-runs resume instead of duplicating work."""

    def __init__(self, path, provenance: str):
        self.path = path
        self.existing: set[tuple] = set()
        exists = os.path.exists(path)
        if exists:
            with open(path) as fh:
                for row in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
                    self.existing.add((row["domain"], row["method"],
                                       row["hyperparams"], row["summary_size"],
                                       row["restart"]))
        self._fh = open(path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if not exists:
            self._fh.write(provenance + "\n")
            self._writer.writerow(CSV_FIELDS)
            self._fh.flush()

    def has(self, cell: SweepCell) -> bool:
        return cell.key in self.existing

    def write(self, cell: SweepCell, accuracy: float, value_diff: float) -> None:
        self._writer.writerow(
            [cell.domain, cell.method, cell.hyperparams, cell.summary_size,
             cell.restart, f"{accuracy:.10g}", f"{value_diff:.10g}"]
        )
        self._fh.flush()
        self.existing.add(cell.key)

    def close(self) -> None:
        self._fh.close()


def run_sweep(domain: str, out_path, master_seed: int,
              sizes=PAPER_SIZES, traj_lengths=PAPER_TRAJ_LENGTHS,
              kernels=PAPER_KERNELS, n_restarts: int = 75,
              baselines: bool = True, domain_kwargs: dict | None = None,
              provenance: str = "#", log=None) -> list[dict]:
    """Evaluate every (method, hyperparams, size, restart) cell with its own
    matched-model summary; rows stream to ``out_path`` and completed rows
    are skipped on resume.  Per-cell failures are logged and skipped."""
    cells = sweep_cells(domain, sizes, traj_lengths, kernels, n_restarts, baselines)
    writer = SweepWriter(out_path, provenance)
    rows = []
    exp, exp_restart = None, None
    try:
        for cell in cells:
            if writer.has(cell):
                continue
            if exp_restart != cell.restart:
                exp = make_experiment(domain,
                                      restart_seed(master_seed, cell.restart, 0),
                                      **(domain_kwargs or {}))
                exp_restart = cell.restart
            try:
                accuracy, value_diff = evaluate_cell(exp, cell, master_seed)
            except Exception:
                if log:
                    log(f"cell {cell} failed:\n{traceback.format_exc(limit=6)}")
                continue
            writer.write(cell, accuracy, value_diff)
            rows.append({**cell.__dict__, "accuracy": accuracy,
                         "value_diff_raw": value_diff})
    finally:
        writer.close()
    return rows


def read_sweep_rows(path) -> list[dict]:
    with open(path) as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        rows = []
        for row in reader:
            row["summary_size"] = int(row["summary_size"])
            row["restart"] = int(row["restart"])
            row["accuracy"] = float(row["accuracy"])
            row["value_diff_raw"] = float(row["value_diff_raw"])
            rows.append(row)
    return rows


def rank_settings(rows: list[dict]) -> list[dict]:
    """Mean accuracy per (domain, method, hyperparams, size), best first."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row["domain"], row["method"], row["hyperparams"],
               row["summary_size"])
        groups.setdefault(key, []).append(row["accuracy"])
    ranked = [
        {
            "domain": d, "method": m, "hyperparams": h, "summary_size": s,
            "mean_accuracy": float(np.mean(accs)), "n": len(accs),
        }
        for (d, m, h, s), accs in groups.items()
    ]
    ranked.sort(key=lambda r: (-r["mean_accuracy"], r["method"],
                               r["hyperparams"], r["summary_size"]))
    return ranked
