"""Deterministic artifact emission: matrix CSV/JSON and the annotated 2x2
heatmap (reconstruction model by extraction model)."""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from .core import ConfigError
from .evaluate import MODELS, CrossMatrix


def canonical_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(doc))


def config_hash(doc) -> str:
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def provenance_line(cfg_hash: str, master_seed: int, version: str) -> str:
    return f"# provenance config={cfg_hash} seed={master_seed} version={version}"


def matrix_csv_rows(matrix: CrossMatrix) -> list[list]:
    rows = []
    for ext in MODELS:
        for rec in MODELS:
            stats = matrix.cell(rec, ext)
            for metric, mean, stderr in (
                ("accuracy", stats.accuracy_mean, stats.accuracy_stderr),
                ("value_diff_raw", stats.value_diff_mean, stats.value_diff_stderr),
                ("value_diff_scaled", stats.value_diff_scaled_mean,
                 stats.value_diff_scaled_stderr),
            ):
                rows.append([matrix.domain, ext, rec, metric,
                             f"{mean:.10g}", f"{stderr:.10g}", stats.n])
    return rows


def write_matrix_csv(path, matrix: CrossMatrix, provenance: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(provenance + "\n")
        writer = csv.writer(fh)
        writer.writerow(["domain", "extractor", "reconstructor", "metric",
                         "mean", "stderr", "n"])
        writer.writerows(matrix_csv_rows(matrix))


def emit_heatmap(matrix: CrossMatrix, path, provenance: str = "") -> None:
    """Two annotated 2x2 panels (accuracy; 0-1 scaled value difference) as a
    standalone SVG with no timestamps, so output bytes are reproducible."""
    if not matrix.cells:
        raise ConfigError("refusing to render an empty matrix")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "polisum"}):
        fig, axes = plt.subplots(1, 2, figsize=(7.2, 3.2))
        panels = (
            ("accuracy", lambda s: s.accuracy_mean, "Blues"),
            ("scaled value difference", lambda s: s.value_diff_scaled_mean,
             "Reds"),
        )
        for ax, (title, pick, cmap) in zip(axes, panels):
            grid = np.array([
                [pick(matrix.cell(rec, ext)) for ext in MODELS]
                for rec in MODELS
            ])
            ax.imshow(grid, cmap=cmap, vmin=0.0, vmax=1.0)
            for i in range(2):
                for j in range(2):
                    ax.text(j, i, f"{grid[i, j]:.2f}", ha="center",
                            va="center", fontsize=12)
            ax.set_xticks([0, 1], [m.upper() for m in MODELS])
            ax.set_yticks([0, 1], [m.upper() for m in MODELS])
            ax.set_xlabel("summary extraction model")
            ax.set_ylabel("reconstruction model")
            ax.set_title(f"{matrix.domain}: {title}")
        fig.tight_layout()
        fig.savefig(path, format="svg",
                    metadata={"Date": None, "Description": provenance})
        plt.close(fig)
