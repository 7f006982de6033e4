"""Decomposition-analysis reports: CSV data files plus rendered figures.

Each emitter writes plottable CSV data and, unless disabled, a matplotlib
figure in SVG next to it. Figure files are rendered deterministically (fixed
hash salt, no embedded timestamps) so repeated runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .decomposition import DecompositionOutput, EmbeddingMatrix
from .errors import TooFewError
from .scoring import ScoreVector

__all__ = [
    "emit_decomposition_reports",
    "emit_projection_report",
]

HEATMAP_COLUMNS = 40
SENSITIVITY_THRESHOLDS = (0.80, 0.90, 0.95)
_SVG_SALT = "caprank"


def _save_figure(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _write_csv(path: Path, header: Sequence[str], rows, comment: Optional[str] = None):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if comment:
            handle.write(f"# {comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_decomposition_reports(
    decomposition: DecompositionOutput,
    matrix: EmbeddingMatrix,
    directory: str | Path,
    prefix: str = "",
    render: bool = True,
) -> list[Path]:
    """Write spectrum, heatmap-slice, and rank-sensitivity data for one scene.

    * ``spectrum.csv``: each singular value of the decomposed matrix next to
      the truncated spectrum (equal up to the retained rank, zero beyond).
    * ``heatmap.csv``: entries of the decomposed matrix, its consensus, and
      its residual over the first min(40, d) embedding dimensions.
    * ``sensitivity.csv``: per retained-component count, the captured and
      residual Frobenius norms and the cumulative variance ratio, plus marker
      rows for the 0.80/0.90/0.95 variance thresholds.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    values = decomposition.spectrum.values
    profile = decomposition.spectrum.variance_profile
    rank = decomposition.rank

    truncated = np.where(np.arange(1, values.size + 1) <= rank, values, 0.0)
    spectrum_path = directory / f"{prefix}spectrum.csv"
    _write_csv(
        spectrum_path,
        ["k", "sigma", "sigma_truncated"],
        [(k + 1, repr(float(values[k])), repr(float(truncated[k]))) for k in range(values.size)],
    )
    written.append(spectrum_path)

    cols = min(HEATMAP_COLUMNS, matrix.d)
    panels = (
        ("M", decomposition.matrix),
        ("R", decomposition.consensus),
        ("E", decomposition.residual),
    )
    heatmap_path = directory / f"{prefix}heatmap.csv"
    _write_csv(
        heatmap_path,
        ["matrix", "row", "col", "value"],
        (
            (tag, i, j, repr(float(panel[i, j])))
            for tag, panel in panels
            for i in range(matrix.n)
            for j in range(cols)
        ),
    )
    written.append(heatmap_path)

    energies = values**2
    total = float(energies.sum())
    captured = np.sqrt(np.cumsum(energies))
    residual = np.sqrt(np.maximum(total - np.cumsum(energies), 0.0))
    sensitivity_path = directory / f"{prefix}sensitivity.csv"
    rows = [
        (
            "profile",
            k + 1,
            repr(float(captured[k])),
            repr(float(residual[k])),
            repr(float(profile[k])),
            "",
        )
        for k in range(values.size)
    ]
    for tau in SENSITIVITY_THRESHOLDS:
        hit = np.nonzero(profile >= tau)[0]
        k = int(hit[0]) if hit.size else values.size - 1
        rows.append(
            (
                "threshold",
                k + 1,
                repr(float(captured[k])),
                repr(float(residual[k])),
                repr(float(profile[k])),
                repr(tau),
            )
        )
    _write_csv(
        sensitivity_path,
        ["row_type", "k", "captured_fro", "residual_fro", "cumulative_variance", "threshold"],
        rows,
    )
    written.append(sensitivity_path)

    if render:
        written.append(
            _render_spectrum(values, truncated, rank, directory / f"{prefix}spectrum.svg")
        )
        written.append(
            _render_heatmap(panels, matrix.n, cols, directory / f"{prefix}heatmap.svg")
        )
        written.append(
            _render_sensitivity(
                captured, residual, profile, directory / f"{prefix}sensitivity.svg"
            )
        )
    return written


def _render_spectrum(values, truncated, rank, path: Path) -> Path:
    ks = np.arange(1, values.size + 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(ks, values, color="black", marker="o", label="original")
    ax.plot(ks, truncated, color="tab:green", marker="s", label=f"rank {rank} approximation")
    ax.axvspan(ks[0] - 0.5, rank + 0.5, color="tab:blue", alpha=0.12, label="consensus")
    if rank < values.size:
        ax.axvspan(rank + 0.5, ks[-1] + 0.5, color="tab:orange", alpha=0.15, label="hallucination")
    ax.set_xlabel("singular value index")
    ax.set_ylabel("amplitude")
    ax.set_title("Consensus / hallucination separation")
    ax.legend()
    fig.tight_layout()
    _save_figure(fig, path)
    return path


def _render_heatmap(panels, n_rows, cols, path: Path) -> Path:
    scale = max(float(np.max(np.abs(panel[:, :cols]))) for _, panel in panels) or 1.0
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2), sharey=True)
    for ax, (tag, panel) in zip(axes, panels):
        image = ax.imshow(
            panel[:, :cols], cmap="coolwarm", vmin=-scale, vmax=scale, aspect="auto"
        )
        ax.set_title(tag)
        ax.set_xlabel("embedding dimension")
    axes[0].set_ylabel("caption row")
    fig.colorbar(image, ax=list(axes), fraction=0.025)
    _save_figure(fig, path)
    return path


def _render_sensitivity(captured, residual, profile, path: Path) -> Path:
    ks = np.arange(1, captured.size + 1)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9.6, 3.6))
    left.plot(ks, captured, color="tab:blue", marker="o", label="captured")
    left.plot(ks, residual, color="tab:red", marker="o", label="residual")
    left.set_xlabel("retained components")
    left.set_ylabel("Frobenius norm")
    left.set_title("Information distribution")
    left.legend()
    right.plot(ks, profile, color="tab:blue", marker="o")
    for tau, style in zip(SENSITIVITY_THRESHOLDS, ("--", "-.", ":")):
        right.axhline(tau, color="gray", linestyle=style, linewidth=1, label=f"{tau:.0%}")
    right.set_xlabel("retained components")
    right.set_ylabel("cumulative variance ratio")
    right.set_title("Explained variance")
    right.legend(loc="lower right")
    fig.tight_layout()
    _save_figure(fig, path)
    return path


def emit_projection_report(
    matrix: EmbeddingMatrix,
    scores: ScoreVector,
    directory: str | Path,
    prefix: str = "",
    render: bool = True,
) -> list[Path]:
    """Project mean-centered rows onto their top two principal components.

    Writes ``projection.csv`` with (caption_id, pc1, pc2, score) rows and,
    unless disabled, a scatter figure with a score-mapped color ramp. Note the
    rows are centered here even though the core decomposition is not; the CSV
    header comment records that.
    """
    if matrix.n < 3:
        raise TooFewError("projection needs at least 3 captions")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    centered = matrix.data - matrix.data.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    coords = centered @ vt[:2].T

    path = directory / f"{prefix}projection.csv"
    _write_csv(
        path,
        ["caption_id", "pc1", "pc2", "score"],
        (
            (
                matrix.row_ids[i],
                repr(float(coords[i, 0])),
                repr(float(coords[i, 1])),
                repr(float(scores.scores[i])),
            )
            for i in range(matrix.n)
        ),
        comment="rows mean-centered before projection; core decomposition is uncentered",
    )
    written = [path]
    if render:
        fig, ax = plt.subplots(figsize=(5.6, 4.4))
        scatter = ax.scatter(
            coords[:, 0], coords[:, 1], c=scores.scores, cmap="coolwarm", s=48
        )
        fig.colorbar(scatter, ax=ax, label="hallucination score")
        ax.set_xlabel("principal component 1")
        ax.set_ylabel("principal component 2")
        ax.set_title("Caption embedding projection")
        fig.tight_layout()
        svg = directory / f"{prefix}projection.svg"
        _save_figure(fig, svg)
        written.append(svg)
    return written
