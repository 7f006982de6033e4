"""Rank candidate scene captions by hallucination level.

Candidate captions of the same scene are embedded, stacked into a matrix, and
split into a low-rank consensus part plus a residual; the residual row norms
rank the captions and the minimum-score caption is selected as the most
consensus-consistent.
"""

from .decomposition import (
    DecompositionConfig,
    DecompositionOutput,
    EmbeddingMatrix,
    SingularSpectrum,
    build_matrix,
    decompose,
    decompose_rpca,
    decompose_svd,
    select_rank,
    singular_spectrum,
)
from .metrics import (
    CorpusReport,
    SentenceLabel,
    correlation_summary,
    gt_caption_score,
    scene_selection_outcome,
    selection_accuracy,
    spearman_rho,
    split_sentences,
)
from .records import Caption, SceneRecord, load_scenes, write_results, write_scenes
from .scoring import RankingResult, ScoreVector, hallucination_scores, rank_and_select
from .synth import PlantedScene, SynthConfig, generate_scene, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "Caption",
    "CorpusReport",
    "DecompositionConfig",
    "DecompositionOutput",
    "EmbeddingMatrix",
    "PlantedScene",
    "RankingResult",
    "SceneRecord",
    "ScoreVector",
    "SentenceLabel",
    "SingularSpectrum",
    "SynthConfig",
    "build_matrix",
    "correlation_summary",
    "decompose",
    "decompose_rpca",
    "decompose_svd",
    "generate_scene",
    "gt_caption_score",
    "hallucination_scores",
    "load_scenes",
    "rank_and_select",
    "run_benchmark",
    "scene_selection_outcome",
    "select_rank",
    "selection_accuracy",
    "singular_spectrum",
    "spearman_rho",
    "split_sentences",
    "write_results",
    "write_scenes",
]
