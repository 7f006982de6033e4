"""Line-delimited scene/caption records and deterministic result writing.

The on-disk scene format is UTF-8 JSON lines, one caption per line:

    {"scene_id": "s1", "caption_id": "c1", "model": "tag", "text": "...",
     "embedding": [0.1, ...],                      # optional
     "sentences": [{"text": "...", "hallucinated": 0}, ...]}  # optional

Captions are grouped into scenes in order of first appearance. All fp64
values are serialized with Python's shortest round-trip repr, so writing the
same data twice produces byte-identical files and a write/load cycle is
lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    ParseError,
)
from .metrics import SentenceLabel

__all__ = [
    "Caption",
    "SceneRecord",
    "load_scenes",
    "write_scenes",
    "write_results",
]


@dataclass(frozen=True)
class Caption:
    """One candidate description of a scene."""

    caption_id: str
    model: str
    text: str
    embedding: Optional[np.ndarray] = None
    sentences: Optional[tuple[SentenceLabel, ...]] = None

    def __post_init__(self):
        if self.embedding is not None:
            vec = np.asarray(self.embedding, dtype=np.float64)
            vec = vec.copy()
            vec.setflags(write=False)
            object.__setattr__(self, "embedding", vec)


@dataclass(frozen=True)
class SceneRecord:
    """A scene id plus its ordered candidate captions."""

    scene_id: str
    captions: tuple[Caption, ...] = field(default_factory=tuple)

    @property
    def has_embeddings(self) -> bool:
        return all(c.embedding is not None for c in self.captions)

    @property
    def labeled_count(self) -> int:
        return sum(1 for c in self.captions if c.sentences is not None)


def _require(record: dict, key: str, kind, line: int):
    value = record.get(key)
    if not isinstance(value, kind) or (kind is str and not value):
        raise ParseError(f"field {key!r} missing or not a non-empty {kind.__name__}", line)
    return value


def _parse_embedding(raw, line: int) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise ParseError("field 'embedding' must be a non-empty array of numbers", line)
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise ParseError("field 'embedding' must contain only numbers", line)
    vec = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(vec).all():
        raise ParseError("field 'embedding' contains a non-finite value", line)
    return vec


def _parse_sentences(raw, line: int) -> tuple[SentenceLabel, ...]:
    if not isinstance(raw, list) or not raw:
        raise ParseError("field 'sentences' must be a non-empty array", line)
    out = []
    for entry in raw:
        if not isinstance(entry, dict) or not isinstance(entry.get("text"), str):
            raise ParseError("each sentence needs a string 'text'", line)
        if entry.get("hallucinated") not in (0, 1):
            raise ParseError("each sentence needs 'hallucinated' of 0 or 1", line)
        out.append(SentenceLabel(text=entry["text"], hallucinated=entry["hallucinated"]))
    return tuple(out)


def _reject_constant(name: str):
    raise ValueError(f"non-finite constant {name} not allowed")


def load_scenes(path: str | Path) -> list[SceneRecord]:
    """Parse and validate a scene file; scenes keep file order.

    Raises:
        ParseError: malformed JSON, missing/ill-typed fields, non-finite
            values (with the 1-based line number).
        DuplicateIdError: repeated caption id within a scene.
        DimensionMismatchError: embeddings of differing dimension within a
            scene (names the offending scene and caption).
    """
    order: list[str] = []
    captions: dict[str, list[Caption]] = {}
    dims: dict[str, tuple[int, str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, raw_line in enumerate(handle, start=1):
            if not raw_line.strip():
                continue
            try:
                record = json.loads(raw_line, parse_constant=_reject_constant)
            except ValueError as exc:
                raise ParseError(f"invalid JSON ({exc})", line_no) from None
            if not isinstance(record, dict):
                raise ParseError("each line must be a JSON object", line_no)
            scene_id = _require(record, "scene_id", str, line_no)
            caption_id = _require(record, "caption_id", str, line_no)
            model = _require(record, "model", str, line_no)
            text = _require(record, "text", str, line_no)
            embedding = None
            if record.get("embedding") is not None:
                embedding = _parse_embedding(record["embedding"], line_no)
            sentences = None
            if record.get("sentences") is not None:
                sentences = _parse_sentences(record["sentences"], line_no)

            if scene_id not in captions:
                order.append(scene_id)
                captions[scene_id] = []
            if any(c.caption_id == caption_id for c in captions[scene_id]):
                raise DuplicateIdError(
                    f"caption id {caption_id!r} repeated in scene {scene_id!r}"
                )
            if embedding is not None:
                if scene_id in dims and dims[scene_id][0] != embedding.size:
                    raise DimensionMismatchError(
                        f"scene {scene_id!r}: caption {caption_id!r} has dimension "
                        f"{embedding.size}, but caption {dims[scene_id][1]!r} has "
                        f"{dims[scene_id][0]}"
                    )
                dims.setdefault(scene_id, (embedding.size, caption_id))
            captions[scene_id].append(
                Caption(
                    caption_id=caption_id,
                    model=model,
                    text=text,
                    embedding=embedding,
                    sentences=sentences,
                )
            )
    return [SceneRecord(scene_id=s, captions=tuple(captions[s])) for s in order]


def _caption_line(scene_id: str, caption: Caption) -> str:
    record: dict = {
        "scene_id": scene_id,
        "caption_id": caption.caption_id,
        "model": caption.model,
        "text": caption.text,
    }
    if caption.embedding is not None:
        record["embedding"] = [float(x) for x in caption.embedding]
    if caption.sentences is not None:
        record["sentences"] = [
            {"text": s.text, "hallucinated": s.hallucinated} for s in caption.sentences
        ]
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def write_scenes(path: str | Path, scenes: Sequence[SceneRecord]) -> None:
    """Serialize scenes to the line-delimited format, losslessly."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for scene in scenes:
            for caption in scene.captions:
                handle.write(_caption_line(scene.scene_id, caption) + "\n")


def write_results(
    path: str | Path,
    rows: Sequence[dict],
    summary: Optional[dict] = None,
) -> None:
    """Write ranking/evaluation rows plus one trailing summary line.

    Rows are sorted by scene_id ascending, then by their in-scene rank, so the
    output is byte-identical across repeated runs on identical inputs. Callers
    must put only deterministic values into ``rows`` and ``summary``.
    """
    ordered = sorted(rows, key=lambda r: (r["scene_id"], r.get("rank", 0)))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for row in ordered:
            handle.write(json.dumps(row, ensure_ascii=False, allow_nan=False) + "\n")
        if summary is not None:
            handle.write(
                json.dumps({"summary": summary}, ensure_ascii=False, allow_nan=False, sort_keys=True)
                + "\n"
            )
