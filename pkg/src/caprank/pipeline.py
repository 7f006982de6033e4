"""End-to-end scene processing: embed, decompose, score, select, evaluate.

Scenes are independent, so ranking maps over them with a worker pool and
reduces in input order; outputs are identical for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .decomposition import DecompositionConfig, DecompositionOutput, build_matrix, decompose
from .errors import (
    CaprankError,
    LengthMismatchError,
    MissingEmbeddingsError,
    TooFewError,
)
from .metrics import (
    CorpusReport,
    SceneEvaluation,
    correlation_summary,
    gt_caption_score,
    scene_selection_outcome,
    selection_accuracy,
    spearman_rho,
)
from .provider import EmbeddingProvider
from .records import Caption, SceneRecord
from .scoring import DEGENERATE_SPREAD, RankingResult, ScoreVector, hallucination_scores, rank_and_select

__all__ = [
    "RankedScene",
    "SceneFailure",
    "rank_scene",
    "rank_corpus",
    "ranking_rows",
    "evaluate_corpus",
]


@dataclass(frozen=True)
class RankedScene:
    """Ranking outcome for one scene, with the decomposition kept for reports."""

    scene_id: str
    caption_ids: tuple[str, ...]
    scores: ScoreVector
    ranking: RankingResult
    decomposition: DecompositionOutput
    elapsed: float


@dataclass(frozen=True)
class SceneFailure:
    """A scene that could not be ranked, with the causing error."""

    scene_id: str
    error: str


def _scene_matrix(scene: SceneRecord, provider: Optional[EmbeddingProvider]):
    embeddings = [c.embedding for c in scene.captions]
    missing = [i for i, e in enumerate(embeddings) if e is None]
    if missing:
        if provider is None:
            raise MissingEmbeddingsError(
                f"scene {scene.scene_id!r} lacks embeddings and no provider is configured"
            )
        fetched = provider.fetch([scene.captions[i].text for i in missing])
        for i, vector in zip(missing, fetched):
            embeddings[i] = vector
    return build_matrix(embeddings, [c.caption_id for c in scene.captions])


def rank_scene(
    scene: SceneRecord,
    config: Optional[DecompositionConfig] = None,
    provider: Optional[EmbeddingProvider] = None,
) -> RankedScene:
    """Decompose one scene's embedding matrix and rank its captions.

    Missing embeddings are fetched through ``provider`` when configured;
    otherwise the scene fails with :class:`MissingEmbeddingsError`. The
    recorded latency covers decomposition and scoring only, not embedding
    retrieval.
    """
    config = config or DecompositionConfig()
    matrix = _scene_matrix(scene, provider)
    start = time.perf_counter()
    output = decompose(matrix, config)
    scores = hallucination_scores(output)
    ranking = rank_and_select(scores)
    elapsed = time.perf_counter() - start
    return RankedScene(
        scene_id=scene.scene_id,
        caption_ids=tuple(c.caption_id for c in scene.captions),
        scores=scores,
        ranking=ranking,
        decomposition=output,
        elapsed=elapsed,
    )


def rank_corpus(
    scenes: Sequence[SceneRecord],
    config: Optional[DecompositionConfig] = None,
    provider: Optional[EmbeddingProvider] = None,
    workers: int = 1,
) -> tuple[list[RankedScene], list[SceneFailure]]:
    """Rank every scene, in parallel across ``workers``.

    Failures are collected per scene instead of aborting the batch; results
    and failures both keep the input scene order regardless of worker count.
    """

    def run(scene: SceneRecord):
        try:
            return rank_scene(scene, config, provider)
        except CaprankError as exc:
            return SceneFailure(
                scene_id=scene.scene_id, error=f"{exc.__class__.__name__}: {exc}"
            )

    if workers <= 1 or len(scenes) <= 1:
        outcomes = [run(scene) for scene in scenes]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, scenes))
    ranked = [o for o in outcomes if isinstance(o, RankedScene)]
    failures = [o for o in outcomes if isinstance(o, SceneFailure)]
    return ranked, failures


def ranking_rows(ranked: Sequence[RankedScene]) -> list[dict]:
    """Flatten rankings to one output row per caption, in rank order."""
    rows = []
    for scene in ranked:
        for position, row_index in enumerate(scene.ranking.ordering, start=1):
            rows.append(
                {
                    "scene_id": scene.scene_id,
                    "caption_id": scene.caption_ids[row_index],
                    "score": float(scene.scores.scores[row_index]),
                    "rank": position,
                    "selected": row_index == scene.ranking.selected,
                    "method": scene.scores.method,
                    "rank_used": scene.scores.rank,
                }
            )
    return rows


def _caption_gt_score(caption: Caption) -> Optional[float]:
    if caption.sentences is None:
        return None
    return gt_caption_score(caption.sentences)


def evaluate_scene(
    scene: SceneRecord,
    predicted: dict[str, float],
    selected_id: str,
) -> SceneEvaluation:
    """Score one scene's ranking against its sentence-level labels."""
    ids = [c.caption_id for c in scene.captions]
    if set(predicted) != set(ids):
        raise LengthMismatchError(
            f"scene {scene.scene_id!r}: ranking covers {len(predicted)} captions, "
            f"scene has {len(ids)}"
        )
    gt = {c.caption_id: _caption_gt_score(c) for c in scene.captions}
    labeled = [cid for cid in ids if gt[cid] is not None]

    selected_fraction = None
    correct = None
    if gt.get(selected_id) is not None:
        selected_fraction, correct = scene_selection_outcome(
            [gt[cid] for cid in ids], ids.index(selected_id)
        )

    rho = None
    reason = None
    if len(labeled) < 2:
        reason = "too_few_labeled"
    else:
        try:
            rho = spearman_rho(
                [predicted[cid] for cid in labeled], [gt[cid] for cid in labeled]
            )
        except TooFewError:  # pragma: no cover - guarded above
            reason = "too_few_labeled"
        if rho is None and reason is None:
            reason = "zero_variance"

    return SceneEvaluation(
        scene_id=scene.scene_id,
        gt_scores={cid: gt[cid] for cid in labeled},
        selected=selected_id,
        selected_fraction=selected_fraction,
        correct=correct,
        spearman_rho=rho,
        undefined_reason=reason,
        labeled_captions=len(labeled),
        total_captions=len(ids),
    )


def evaluate_corpus(
    scenes: Sequence[SceneRecord],
    ranking_rows: Sequence[dict],
) -> tuple[list[SceneEvaluation], CorpusReport, list[SceneFailure]]:
    """Join rankings with labeled scenes and aggregate corpus metrics.

    Scenes without any labeled caption are reported as uncovered rather than
    silently dropped; scenes whose ranking rows do not match their captions
    fail individually with :class:`LengthMismatchError` recorded.
    """
    by_scene: dict[str, dict[str, float]] = {}
    selected_by_scene: dict[str, str] = {}
    degenerate_by_scene: dict[str, bool] = {}
    for row in ranking_rows:
        by_scene.setdefault(row["scene_id"], {})[row["caption_id"]] = row["score"]
        if row.get("selected"):
            selected_by_scene[row["scene_id"]] = row["caption_id"]
    for scene_id, scores in by_scene.items():
        values = list(scores.values())
        degenerate_by_scene[scene_id] = max(values) - min(values) < DEGENERATE_SPREAD

    evaluations: list[SceneEvaluation] = []
    failures: list[SceneFailure] = []
    for scene in scenes:
        if scene.scene_id not in by_scene:
            failures.append(
                SceneFailure(scene.scene_id, "LengthMismatchError: scene missing from rankings")
            )
            continue
        try:
            evaluations.append(
                evaluate_scene(
                    scene,
                    by_scene[scene.scene_id],
                    selected_by_scene[scene.scene_id],
                )
            )
        except CaprankError as exc:
            failures.append(
                SceneFailure(scene.scene_id, f"{exc.__class__.__name__}: {exc}")
            )

    outcomes = [e.correct for e in evaluations if e.correct is not None]
    rhos = [e.spearman_rho for e in evaluations if e.spearman_rho is not None]
    undefined = sum(1 for e in evaluations if e.spearman_rho is None)
    report = CorpusReport(
        scene_count=len(evaluations),
        evaluated_count=len(outcomes),
        accuracy=selection_accuracy(outcomes) if outcomes else 0.0,
        correlations=correlation_summary(rhos, undefined_count=undefined),
        degenerate_count=sum(
            1 for e in evaluations if degenerate_by_scene.get(e.scene_id, False)
        ),
        uncovered_count=sum(1 for e in evaluations if e.labeled_captions == 0),
        missing_label_count=sum(1 for e in evaluations if e.correct is None),
    )
    return evaluations, report, failures
