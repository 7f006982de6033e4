"""Per-caption hallucination scores and minimum-score selection.

The score of caption i is the L2 norm of row i of the residual matrix: a
caption whose embedding is poorly represented by the low-rank consensus
carries more content its peers do not corroborate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import DecompositionOutput
from .errors import EmptyInputError, NonFiniteEntryError

__all__ = ["ScoreVector", "RankingResult", "hallucination_scores", "rank_and_select"]

# Scores closer than this are considered tied for the degenerate flag.
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class ScoreVector:
    """Hallucination scores aligned to caption rows, plus provenance."""

    scores: np.ndarray
    method: str
    rank: int

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise EmptyInputError("scores must be a non-empty vector")
        if not np.isfinite(scores).all() or np.any(scores < 0):
            raise NonFiniteEntryError("scores must be finite and non-negative")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class RankingResult:
    """Ascending ordering of caption rows by score.

    ``ordering[0]`` is the selected (lowest-score) caption; ties break toward
    the lower row index. ``degenerate`` marks scenes where every score is
    within ``DEGENERATE_SPREAD`` of every other, i.e. the ranking carries no
    information.
    """

    ordering: tuple[int, ...]
    selected: int
    degenerate: bool


def hallucination_scores(decomposition: DecompositionOutput) -> ScoreVector:
    """Row-wise L2 norms of the residual matrix."""
    scores = np.linalg.norm(decomposition.residual, axis=1)
    return ScoreVector(scores=scores, method=decomposition.method, rank=decomposition.rank)


def rank_and_select(scores: ScoreVector) -> RankingResult:
    """Sort captions by ascending score and select the first.

    The sort is stable with row index as tie-break, so the result is fully
    deterministic.
    """
    values = scores.scores
    ordering = tuple(int(i) for i in np.argsort(values, kind="stable"))
    spread = float(values.max() - values.min())
    return RankingResult(
        ordering=ordering,
        selected=ordering[0],
        degenerate=spread < DEGENERATE_SPREAD,
    )
