import json

import numpy as np
import pytest

from caprank.errors import DimensionMismatchError, DuplicateIdError, ParseError
from caprank.metrics import SentenceLabel
from caprank.records import (
    Caption,
    SceneRecord,
    load_scenes,
    write_results,
    write_scenes,
)


def sample_corpus():
    return [
        SceneRecord(
            scene_id="s1",
            captions=(
                Caption(
                    caption_id="c1",
                    model="alpha",
                    text="A car. A bus.",
                    embedding=np.array([0.1, -2.5, 1 / 3]),
                    sentences=(
                        SentenceLabel("A car.", 0),
                        SentenceLabel("A bus.", 1),
                    ),
                ),
                Caption(
                    caption_id="c2",
                    model="beta",
                    text="Just a car.",
                    embedding=np.array([0.4, 0.0, -1e-17]),
                ),
            ),
        ),
        SceneRecord(
            scene_id="s2",
            captions=(
                Caption(caption_id="c1", model="alpha", text="Empty street."),
            ),
        ),
    ]


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestRoundTrip:
    def test_write_then_load_is_lossless(self, tmp_path):
        path = tmp_path / "scenes.jsonl"
        corpus = sample_corpus()
        write_scenes(path, corpus)
        loaded = load_scenes(path)
        assert len(loaded) == len(corpus)
        for original, parsed in zip(corpus, loaded):
            assert parsed.scene_id == original.scene_id
            for a, b in zip(original.captions, parsed.captions):
                assert (a.caption_id, a.model, a.text) == (b.caption_id, b.model, b.text)
                if a.embedding is None:
                    assert b.embedding is None
                else:
                    assert np.array_equal(a.embedding, b.embedding)
                assert a.sentences == b.sentences

    def test_write_is_byte_stable(self, tmp_path):
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        write_scenes(first, sample_corpus())
        write_scenes(second, sample_corpus())
        assert first.read_bytes() == second.read_bytes()


class TestLoadScenes:
    def test_groups_by_scene_in_file_order(self, tmp_path):
        lines = [
            json.dumps({"scene_id": "b", "caption_id": "c1", "model": "m", "text": "t", "embedding": [1.0, 2.0]}),
            json.dumps({"scene_id": "a", "caption_id": "c1", "model": "m", "text": "t", "embedding": [3.0, 4.0]}),
            json.dumps({"scene_id": "b", "caption_id": "c2", "model": "m", "text": "t", "embedding": [5.0, 6.0]}),
        ]
        scenes = load_scenes(write_lines(tmp_path / "f.jsonl", lines))
        assert [s.scene_id for s in scenes] == ["b", "a"]
        assert [c.caption_id for c in scenes[0].captions] == ["c1", "c2"]

    def test_text_only_scene_loads(self, tmp_path):
        lines = [json.dumps({"scene_id": "s", "caption_id": "c", "model": "m", "text": "words"})]
        scenes = load_scenes(write_lines(tmp_path / "f.jsonl", lines))
        assert scenes[0].captions[0].embedding is None
        assert not scenes[0].has_embeddings

    def test_invalid_json_reports_line(self, tmp_path):
        lines = [
            json.dumps({"scene_id": "s", "caption_id": "c", "model": "m", "text": "t"}),
            "{not json",
        ]
        with pytest.raises(ParseError) as info:
            load_scenes(write_lines(tmp_path / "f.jsonl", lines))
        assert info.value.line == 2

    @pytest.mark.parametrize(
        "record",
        [
            {"caption_id": "c", "model": "m", "text": "t"},
            {"scene_id": "s", "model": "m", "text": "t"},
            {"scene_id": "s", "caption_id": "c", "text": "t"},
            {"scene_id": "s", "caption_id": "c", "model": "m"},
            {"scene_id": 7, "caption_id": "c", "model": "m", "text": "t"},
            {"scene_id": "s", "caption_id": "c", "model": "m", "text": "t", "embedding": "nope"},
            {"scene_id": "s", "caption_id": "c", "model": "m", "text": "t", "embedding": [1.0, "x"]},
            {"scene_id": "s", "caption_id": "c", "model": "m", "text": "t", "sentences": [{"text": "a"}]},
            {"scene_id": "s", "caption_id": "c", "model": "m", "text": "t",
             "sentences": [{"text": "a", "hallucinated": 2}]},
        ],
    )
    def test_malformed_record_rejected(self, tmp_path, record):
        with pytest.raises(ParseError):
            load_scenes(write_lines(tmp_path / "f.jsonl", [json.dumps(record)]))

    def test_nan_embedding_rejected_with_line(self, tmp_path):
        line = '{"scene_id": "s", "caption_id": "c", "model": "m", "text": "t", "embedding": [1.0, NaN]}'
        with pytest.raises(ParseError) as info:
            load_scenes(write_lines(tmp_path / "f.jsonl", [line]))
        assert info.value.line == 1

    def test_duplicate_caption_id(self, tmp_path):
        lines = [
            json.dumps({"scene_id": "s", "caption_id": "c", "model": "m", "text": "t"}),
            json.dumps({"scene_id": "s", "caption_id": "c", "model": "m", "text": "u"}),
        ]
        with pytest.raises(DuplicateIdError):
            load_scenes(write_lines(tmp_path / "f.jsonl", lines))

    def test_dimension_mismatch_names_ids(self, tmp_path):
        lines = [
            json.dumps({"scene_id": "sc", "caption_id": "c1", "model": "m", "text": "t",
                        "embedding": [1.0, 2.0, 3.0, 4.0]}),
            json.dumps({"scene_id": "sc", "caption_id": "c2", "model": "m", "text": "t",
                        "embedding": [1.0, 2.0, 3.0]}),
        ]
        with pytest.raises(DimensionMismatchError) as info:
            load_scenes(write_lines(tmp_path / "f.jsonl", lines))
        assert "sc" in str(info.value) and "c2" in str(info.value)

    def test_blank_lines_skipped(self, tmp_path):
        lines = [
            "",
            json.dumps({"scene_id": "s", "caption_id": "c", "model": "m", "text": "t"}),
            "   ",
        ]
        assert len(load_scenes(write_lines(tmp_path / "f.jsonl", lines))) == 1


class TestWriteResults:
    def test_sorted_by_scene_then_rank(self, tmp_path):
        rows = [
            {"scene_id": "z", "caption_id": "c", "score": 0.5, "rank": 1},
            {"scene_id": "a", "caption_id": "d", "score": 0.7, "rank": 2},
            {"scene_id": "a", "caption_id": "e", "score": 0.2, "rank": 1},
        ]
        path = tmp_path / "out.jsonl"
        write_results(path, rows, summary={"scenes": 2})
        lines = path.read_text().splitlines()
        parsed = [json.loads(line) for line in lines]
        assert [(p.get("scene_id"), p.get("rank")) for p in parsed[:3]] == [
            ("a", 1), ("a", 2), ("z", 1)
        ]
        assert parsed[3] == {"summary": {"scenes": 2}}

    def test_byte_identical_reruns(self, tmp_path):
        rows = [{"scene_id": "s", "caption_id": "c", "score": 1 / 3, "rank": 1}]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_results(a, rows, summary={"n": 1})
        write_results(b, list(reversed(rows)), summary={"n": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_empty_corpus_writes_summary_only(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_results(path, [], summary={"scenes": 0, "captions": 0})
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["summary"]["scenes"] == 0

    def test_float_round_trip_exact(self, tmp_path):
        value = 0.1 + 0.2  # not representable prettily; must survive exactly
        path = tmp_path / "out.jsonl"
        write_results(path, [{"scene_id": "s", "caption_id": "c", "score": value, "rank": 1}])
        assert json.loads(path.read_text())["score"] == value
