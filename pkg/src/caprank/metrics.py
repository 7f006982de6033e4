"""Ground-truth scoring, selection accuracy, and Spearman sorting consistency.

Sentence-level binary hallucination labels arrive as input data; this module
turns them into per-caption ground-truth fractions, checks whether the
selected caption is hallucination-free, and measures how well the predicted
score ordering tracks the ground-truth ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyCaptionError,
    EmptyCorpusError,
    LengthMismatchError,
    MissingLabelsError,
    NoSentencesError,
    TooFewError,
)

__all__ = [
    "SentenceLabel",
    "SceneEvaluation",
    "CorrelationSummary",
    "CorpusReport",
    "split_sentences",
    "gt_caption_score",
    "scene_selection_outcome",
    "selection_accuracy",
    "spearman_rho",
    "correlation_summary",
]

_TERMINATORS = (".", "!", "?")


@dataclass(frozen=True)
class SentenceLabel:
    """One sentence of a caption with its binary hallucination flag."""

    text: str
    hallucinated: int

    def __post_init__(self):
        if self.hallucinated not in (0, 1):
            raise ValueError(f"hallucinated must be 0 or 1, got {self.hallucinated!r}")


@dataclass(frozen=True)
class SceneEvaluation:
    """Per-scene evaluation outcome.

    ``selected_fraction`` is the hallucinated-sentence fraction of the selected
    caption (higher is worse); ``correct`` is True when that fraction is zero.
    ``spearman_rho`` is None when undefined, with the reason recorded.
    """

    scene_id: str
    gt_scores: dict[str, float]
    selected: Optional[str]
    selected_fraction: Optional[float]
    correct: Optional[bool]
    spearman_rho: Optional[float]
    undefined_reason: Optional[str] = None
    labeled_captions: int = 0
    total_captions: int = 0


@dataclass(frozen=True)
class CorrelationSummary:
    """Aggregate over defined per-scene correlations."""

    defined_count: int
    undefined_count: int
    positive_fraction: float
    mean: float
    variance: float


@dataclass(frozen=True)
class CorpusReport:
    """Corpus-level aggregates across scene evaluations."""

    scene_count: int
    evaluated_count: int
    accuracy: float
    correlations: CorrelationSummary
    degenerate_count: int
    uncovered_count: int
    missing_label_count: int


def split_sentences(text: str) -> list[str]:
    """Split a caption into sentences at '.', '!' or '?' followed by whitespace.

    Terminators not followed by whitespace (decimals, ellipses, abbreviations)
    do not split, which is a documented limitation of this rule-based pass.
    Segments are trimmed and empty ones dropped; order is preserved.
    """
    stripped = text.strip()
    if not stripped:
        raise EmptyCaptionError("caption is empty after trimming")
    sentences = []
    start = 0
    for i, ch in enumerate(stripped):
        if ch in _TERMINATORS and (i + 1 == len(stripped) or stripped[i + 1].isspace()):
            segment = stripped[start : i + 1].strip()
            if segment:
                sentences.append(segment)
            start = i + 1
    tail = stripped[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def gt_caption_score(labels: Sequence[SentenceLabel]) -> float:
    """Fraction of a caption's sentences flagged as hallucinated, in [0, 1]."""
    if len(labels) == 0:
        raise NoSentencesError("caption has no labeled sentences")
    return sum(label.hallucinated for label in labels) / len(labels)


def scene_selection_outcome(
    gt_scores: Sequence[Optional[float]], selected: int
) -> tuple[float, bool]:
    """Ground-truth fraction of the selected caption plus the correctness flag.

    ``correct`` means the selected caption contains zero flagged sentences.
    """
    if not 0 <= selected < len(gt_scores):
        raise MissingLabelsError(
            f"selected index {selected} outside scene of {len(gt_scores)} captions"
        )
    fraction = gt_scores[selected]
    if fraction is None:
        raise MissingLabelsError(f"selected caption {selected} has no labels")
    return float(fraction), fraction == 0.0


def selection_accuracy(correct_flags: Sequence[bool]) -> float:
    """Fraction of scenes whose selected caption was hallucination-free."""
    if len(correct_flags) == 0:
        raise EmptyCorpusError("no scenes to aggregate")
    return sum(bool(flag) for flag in correct_flags) / len(correct_flags)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based fractional ranks, ties averaged."""
    order = np.argsort(x, kind="stable")
    sx = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    starts = np.empty(x.size, dtype=bool)
    starts[0] = True
    np.not_equal(sx[1:], sx[:-1], out=starts[1:])
    if starts.all():
        ranks[order] = np.arange(1, x.size + 1, dtype=np.float64)
        return ranks
    boundaries = np.append(np.nonzero(starts)[0], x.size)
    group_rank = 0.5 * (boundaries[1:] + boundaries[:-1] + 1)
    ranks[order] = np.repeat(group_rank, np.diff(boundaries))
    return ranks


def spearman_rho(
    h: Sequence[float], h_gt: Sequence[float]
) -> Optional[float]:
    """Spearman rank correlation between predicted and ground-truth scores.

    Ties get average (fractional) ranks; the coefficient is the Pearson
    correlation of the two rank vectors. Returns None when either rank vector
    has zero variance (constant input), in which case the correlation is
    undefined.
    """
    a = np.asarray(h, dtype=np.float64)
    b = np.asarray(h_gt, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError(f"score vectors of shape {a.shape} vs {b.shape}")
    if a.size < 2:
        raise TooFewError("need at least 2 captions for a rank correlation")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = np.dot(da, da) * np.dot(db, db)
    if denom == 0.0:
        return None
    return float(np.dot(da, db) / np.sqrt(denom))


def correlation_summary(
    rhos: Sequence[float], undefined_count: int = 0
) -> CorrelationSummary:
    """Positive fraction, mean, and variance over defined correlations.

    Undefined correlations are excluded from the statistics and only counted.
    An empty input yields a zeroed summary.
    """
    values = np.asarray(rhos, dtype=np.float64)
    if values.size == 0:
        return CorrelationSummary(
            defined_count=0,
            undefined_count=undefined_count,
            positive_fraction=0.0,
            mean=0.0,
            variance=0.0,
        )
    return CorrelationSummary(
        defined_count=int(values.size),
        undefined_count=undefined_count,
        positive_fraction=float(np.sum(values > 0) / values.size),
        mean=float(values.mean()),
        variance=float(values.var()),
    )
