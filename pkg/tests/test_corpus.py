import json

import pytest

from openvik.corpus import (
    BoundingBox,
    Corpus,
    CorpusError,
    KnowledgePhrase,
    PhraseOrigin,
    Split,
    dedup_descriptors,
    index_pair_relations,
    ingest_dataset,
    normalize_text,
    persist_corpus,
)

from conftest import make_corpus, make_descriptor, make_image


def write_jsonl(path, records):
    with path.open("w") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def record(image_id="img1", descriptors=None):
    return {
        "image_id": image_id,
        "width": 224,
        "height": 224,
        "uri": f"img://{image_id}",
        "descriptors": descriptors if descriptors is not None else [],
    }


def descriptor_json(did="d1", text="boat on water", relation="on"):
    return {
        "id": did,
        "text": text,
        "subject": {"name": "boat", "box": [0, 0, 50, 50]},
        "object": {"name": "water", "box": [20, 20, 100, 100]},
        "relation": relation,
        "provenance": "original",
    }


class TestBoundingBox:
    def test_valid(self):
        box = BoundingBox(1, 2, 3, 4)
        assert box.as_tuple() == (1, 2, 3, 4)

    @pytest.mark.parametrize("coords", [(5, 0, 5, 10), (0, 5, 10, 5), (3, 0, 2, 10)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(CorpusError):
            BoundingBox(*coords)

    def test_negative_rejected(self):
        with pytest.raises(CorpusError):
            BoundingBox(-1, 0, 5, 5)


class TestIngest:
    def test_empty_file_gives_zero_counters(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        corpus = ingest_dataset(path, Split.TRAIN)
        counters = corpus.counters
        assert (counters.images, counters.descriptors) == (0, 0)
        assert counters.unique_relations == 0
        assert counters.unique_names == 0

    def test_fixture_counters(self, tmp_path, fixture_corpus):
        # 3 images, 7 descriptors; counts verified by hand over the fixture
        path = tmp_path / "c.jsonl"
        persist_corpus(fixture_corpus, path)
        corpus = ingest_dataset(path, Split.TRAIN)
        counters = corpus.counters
        assert counters.images == 3
        assert counters.descriptors == 7
        # relations: on, docked at, above, sitting on, in, near -> 6
        assert counters.unique_relations == 6
        # names: boat, water, pier, bird, people, ground, bench, plane, sky, cloud
        assert counters.unique_names == 10

    def test_round_trip_identical(self, tmp_path, fixture_corpus):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        persist_corpus(fixture_corpus, p1)
        reloaded = ingest_dataset(p1, Split.TRAIN)
        assert reloaded == fixture_corpus
        persist_corpus(reloaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = record("img1")
        bad = record("img2")
        del bad["width"]
        write_jsonl(path, [good, bad])
        with pytest.raises(CorpusError, match="line 2.*width"):
            ingest_dataset(path, Split.TRAIN)

    def test_box_outside_image_reports_locator(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        d = descriptor_json()
        d["object"]["box"] = [20, 20, 300, 100]  # x_max beyond width 224
        write_jsonl(path, [record("img1", [d])])
        with pytest.raises(CorpusError, match="line 1"):
            ingest_dataset(path, Split.TRAIN)

    def test_empty_text_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, [record("img1", [descriptor_json(text="   ")])])
        with pytest.raises(CorpusError, match="empty text"):
            ingest_dataset(path, Split.TRAIN)

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(record()) + "\n{not json\n")
        with pytest.raises(CorpusError, match="line 2"):
            ingest_dataset(path, Split.TRAIN)

    def test_unknown_provenance_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        d = descriptor_json()
        d["provenance"] = "mystery"
        write_jsonl(path, [record("img1", [d])])
        with pytest.raises(CorpusError, match="provenance"):
            ingest_dataset(path, Split.TRAIN)


class TestNormalize:
    def test_lowercase_whitespace_punct(self):
        assert normalize_text("  Boat  ON   Water. ") == "boat on water"

    def test_idempotent(self):
        text = "A  strange,   Mixed CASE phrase!!"
        assert normalize_text(normalize_text(text)) == normalize_text(text)


class TestDedup:
    def test_exact_repeat_dropped(self):
        image = make_image(
            "i",
            [
                make_descriptor("d1", "i", "boat on water"),
                make_descriptor("d2", "i", "boat on water"),
                make_descriptor("d3", "i", "bird above water"),
            ],
        )
        deduped = dedup_descriptors(image)
        assert [d.descriptor_id for d in deduped.descriptors] == ["d1", "d3"]

    def test_all_distinct_unchanged(self):
        image = make_image(
            "i",
            [make_descriptor("d1", "i", "boat on water"), make_descriptor("d2", "i", "a b c")],
        )
        assert dedup_descriptors(image) is image

    def test_case_and_whitespace_collapse(self):
        image = make_image(
            "i",
            [
                make_descriptor("d1", "i", "Boat  on water"),
                make_descriptor("d2", "i", "boat on   WATER."),
            ],
        )
        assert len(dedup_descriptors(image).descriptors) == 1

    def test_idempotent(self, fixture_corpus):
        for image in fixture_corpus.images:
            once = dedup_descriptors(image)
            assert dedup_descriptors(once) == once


class TestPairIndex:
    def test_counting(self):
        image = make_image(
            "i",
            [
                make_descriptor("d1", "i", "a on b 1", "a", "b", "on"),
                make_descriptor("d2", "i", "a on b 2", "a", "b", "on"),
                make_descriptor("d3", "i", "a near b", "a", "b", "near"),
            ],
        )
        index = index_pair_relations(make_corpus([image]))
        assert index[("a", "b")] == {"on": 2, "near": 1}

    def test_empty_corpus(self):
        assert index_pair_relations(make_corpus([])) == {}

    def test_totals_match_brute_force(self, fixture_corpus):
        index = index_pair_relations(fixture_corpus)
        for pair, counts in index.items():
            brute = sum(
                1
                for d in fixture_corpus.descriptors()
                if (d.subject.name, d.object.name) == pair
            )
            assert sum(counts.values()) == brute
        total = sum(sum(c.values()) for c in index.values())
        assert total == fixture_corpus.counters.descriptors


class TestKnowledgePhrase:
    def test_generated_requires_confidence(self):
        with pytest.raises(CorpusError, match="confidence"):
            KnowledgePhrase(
                "p1", "img1", BoundingBox(0, 0, 5, 5), "text", PhraseOrigin.GENERATED
            )

    def test_training_origin_without_confidence_ok(self):
        phrase = KnowledgePhrase(
            "p1", "img1", BoundingBox(0, 0, 5, 5), "text", PhraseOrigin.TRAINING
        )
        assert phrase.confidence is None

    def test_confidence_bounds(self):
        with pytest.raises(CorpusError):
            KnowledgePhrase(
                "p1", "img1", BoundingBox(0, 0, 5, 5), "t", PhraseOrigin.GENERATED, 1.5
            )
