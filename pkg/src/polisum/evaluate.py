"""Reconstruction-quality metrics and the extractor-by-reconstructor
cross matrix."""

from __future__ import annotations

import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import EvaluationError, Policy
from .experiment import make_experiment
from .il import KernelSpec

MODELS = ("il", "irl")


def score_accuracy(policy_star: Policy, predictions, unseen) -> float:
    """Fraction of unseen states where the prediction is an optimal action."""
    unseen = [int(s) for s in unseen]
    if len(unseen) == 0:
        raise EvaluationError("no unseen states to score")
    if isinstance(predictions, dict):
        missing = [s for s in unseen if s not in predictions]
        if missing:
            raise EvaluationError(f"missing prediction for state {missing[0]}")
        preds = np.array([predictions[s] for s in unseen], dtype=np.int64)
    else:
        preds = np.asarray(predictions, dtype=np.int64)
        if preds.shape != (len(unseen),):
            raise EvaluationError("predictions must align with the unseen states")
    hits = policy_star.optimal_mask[np.asarray(unseen, dtype=np.int64), preds]
    return float(hits.mean())


def score_value_diff(value_star: float, value_hat: float) -> float:
    """Absolute difference between the two policies' estimated values."""
    return abs(float(value_star) - float(value_hat))


def minmax_scale(values) -> np.ndarray:
    """Affine map of the cell values onto [0, 1]; a constant input maps to
    all zeros."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@dataclass
class CellStats:
    accuracy_mean: float
    accuracy_stderr: float
    value_diff_mean: float
    value_diff_stderr: float
    value_diff_scaled_mean: float = 0.0
    value_diff_scaled_stderr: float = 0.0
    n: int = 0


@dataclass
class CrossMatrix:
    """2x2 grid over (reconstructor, extractor) with per-cell statistics."""

    domain: str
    k: int
    l_irl: int
    kernel: str
    master_seed: int
    n_restarts: int
    n_failures: int
    cells: dict = field(default_factory=dict)  # (rec, ext) -> CellStats

    def cell(self, reconstructor: str, extractor: str) -> CellStats:
        return self.cells[(reconstructor, extractor)]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "k": self.k,
            "l_irl": self.l_irl,
            "kernel": self.kernel,
            "master_seed": self.master_seed,
            "n_restarts": self.n_restarts,
            "n_failures": self.n_failures,
            "cells": {
                f"{rec}|{ext}": vars(stats)
                for (rec, ext), stats in sorted(self.cells.items())
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CrossMatrix":
        cells = {}
        for key, stats in doc["cells"].items():
            rec, ext = key.split("|")
            cells[(rec, ext)] = CellStats(**stats)
        return cls(
            domain=doc["domain"], k=doc["k"], l_irl=doc["l_irl"],
            kernel=doc["kernel"], master_seed=doc["master_seed"],
            n_restarts=doc["n_restarts"], n_failures=doc["n_failures"],
            cells=cells,
        )


def restart_seed(master_seed: int, restart: int, stream: int = 0) -> int:
    """Stable child seed so any subset of restarts reproduces independently."""
    ss = np.random.SeedSequence([int(master_seed), int(restart), int(stream)])
    return int(ss.generate_state(1)[0])


def run_restart_cells(domain: str, k: int, l_irl: int, kernel: str,
                      master_seed: int, restart: int,
                      domain_kwargs: dict | None = None) -> dict:
    """One restart: fresh environment, both summaries, all four
    reconstructions.  Returns {(rec, ext): (accuracy, value_diff_raw)}."""
    kernel_spec = KernelSpec.parse(kernel)
    exp = make_experiment(domain, restart_seed(master_seed, restart, 0),
                          **(domain_kwargs or {}))
    summaries = {
        "irl": exp.extract_irl(k, l_irl, restart_seed(master_seed, restart, 1)),
        "il": exp.extract_il(k, kernel_spec),
    }
    value_star = exp.value_star()
    out = {}
    for ext, tagged in summaries.items():
        unseen = exp.unseen_of(tagged)
        policy = exp.reconstruct_irl(tagged)
        preds = exp.irl_predictions(policy, unseen)
        out[("irl", ext)] = (
            score_accuracy(exp.demo_policy, preds, unseen),
            score_value_diff(value_star, exp.value_of_irl(policy)),
        )
        preds_il, model = exp.reconstruct_il(tagged, kernel_spec)
        out[("il", ext)] = (
            score_accuracy(exp.demo_policy, preds_il, unseen),
            score_value_diff(value_star,
                             exp.value_of_il(tagged, preds_il, unseen, model)),
        )
    return out


def _restart_worker(args):
    domain, k, l_irl, kernel, master_seed, restart, domain_kwargs = args
    try:
        return restart, run_restart_cells(domain, k, l_irl, kernel,
                                          master_seed, restart, domain_kwargs)
    except Exception:
        return restart, {"error": traceback.format_exc(limit=8)}


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(len(values)))


def run_cross_matrix(domain: str, k: int, l_irl: int, kernel: str,
                     n_restarts: int, seed: int, workers: int = 1,
                     domain_kwargs: dict | None = None,
                     log=None) -> CrossMatrix:
    """Aggregate the four (reconstructor, extractor) cells over seeded
    restarts.  Failed restarts are excluded and counted; more than 10%
    failures aborts.  Scaled value differences min-max the four cell means
    within the domain, stderr scaled by the same factor."""
    tasks = [
        (domain, k, l_irl, kernel, seed, r, domain_kwargs)
        for r in range(n_restarts)
    ]
    results: dict[int, dict] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for restart, cells in pool.map(_restart_worker, tasks):
                results[restart] = cells
    else:
        for task in tasks:
            restart, cells = _restart_worker(task)
            results[restart] = cells

    failures = []
    acc: dict[tuple, list] = {}
    vdiff: dict[tuple, list] = {}
    for restart in sorted(results):
        cells = results[restart]
        if "error" in cells:
            failures.append((restart, cells["error"]))
            if log:
                log(f"restart {restart} failed:\n{cells['error']}")
            continue
        for key, (a, v) in cells.items():
            acc.setdefault(key, []).append(a)
            vdiff.setdefault(key, []).append(v)

    if len(failures) > 0.1 * n_restarts:
        raise EvaluationError(
            f"{len(failures)}/{n_restarts} restarts failed; first failure:\n"
            f"{failures[0][1]}"
        )

    keys = [(rec, ext) for rec in MODELS for ext in MODELS]
    matrix = CrossMatrix(
        domain=domain, k=k, l_irl=l_irl, kernel=kernel, master_seed=seed,
        n_restarts=n_restarts, n_failures=len(failures),
    )
    raw_means = np.array([np.mean(vdiff[key]) for key in keys])
    scaled_means = minmax_scale(raw_means)
    spread = raw_means.max() - raw_means.min()
    scale = 1.0 / spread if spread > 0 else 0.0
    for i, key in enumerate(keys):
        a = np.asarray(acc[key])
        v = np.asarray(vdiff[key])
        matrix.cells[key] = CellStats(
            accuracy_mean=float(a.mean()),
            accuracy_stderr=_stderr(a),
            value_diff_mean=float(v.mean()),
            value_diff_stderr=_stderr(v),
            value_diff_scaled_mean=float(scaled_means[i]),
            value_diff_scaled_stderr=_stderr(v) * scale,
            n=len(a),
        )
    return matrix
