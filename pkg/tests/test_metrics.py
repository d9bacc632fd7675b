import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openvik.metrics import (
    QualityReport,
    RatingRecord,
    bleu,
    cohens_kappa,
    diversity,
    freshness,
    load_ratings,
    meteor,
    quality_report,
    rouge_l,
    save_ratings,
    tokenize,
)

texts = st.lists(
    st.sampled_from("boat water pier dog man cat tree sky bird bench".split()),
    min_size=1,
    max_size=12,
).map(" ".join)


def reference_bleu(candidate, references, max_n=4):
    """Independent BLEU: explicit loops, product of precisions, same smoothing."""
    cand = candidate.lower().split()
    refs = [r.lower().split() for r in references]
    precisions = []
    for n in range(1, max_n + 1):
        cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
        matched = 0
        remaining_per_ref = []
        ref_counts = []
        for ref in refs:
            ref_counts.append(Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)))
        for gram, count in Counter(cand_grams).items():
            best = max((rc.get(gram, 0) for rc in ref_counts), default=0)
            matched += min(count, best)
        total = len(cand_grams)
        if n > 1:
            matched, total = matched + 1, total + 1
        if total == 0 or matched == 0:
            return 0.0
        precisions.append(matched / total)
    geometric = math.exp(sum(math.log(p) for p in precisions) / max_n)
    ref_len = sorted(refs, key=lambda r: (abs(len(r) - len(cand)), len(r)))[0]
    bp = 1.0 if len(cand) >= len(ref_len) else math.exp(1 - len(ref_len) / len(cand))
    return bp * geometric


class TestBleu:
    def test_identity(self):
        assert bleu("large boat docked at pier", ["large boat docked at pier"]) == pytest.approx(1.0)

    def test_disjoint_near_zero(self):
        assert bleu("cat under table", ["boat on water"]) < 0.05

    def test_twenty_fixture_pairs_match_reference_implementation(self):
        rng = random.Random(0)
        vocabulary = "boat water pier dog man cat tree sky bird bench on near at".split()
        for _ in range(20):
            cand = " ".join(rng.choices(vocabulary, k=rng.randint(2, 10)))
            refs = [
                " ".join(rng.choices(vocabulary, k=rng.randint(2, 10)))
                for _ in range(rng.randint(1, 3))
            ]
            assert bleu(cand, refs) == pytest.approx(reference_bleu(cand, refs), abs=1e-4)

    def test_empty_candidate_rejected(self):
        with pytest.raises(ValueError):
            bleu("", ["x"])

    def test_empty_references_rejected(self):
        with pytest.raises(ValueError):
            bleu("x", [])

    @given(texts, st.lists(texts, min_size=1, max_size=3))
    @settings(max_examples=100)
    def test_range(self, cand, refs):
        assert 0.0 <= bleu(cand, refs) <= 1.0


def brute_force_lcs(a, b):
    best = 0
    n = len(a)
    # all subsequences of the shorter side would blow up; classic DP instead,
    # written forward as the independent oracle
    table = [[0] * (len(b) + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    best = table[n][len(b)]
    return best


class TestRougeL:
    def test_identity(self):
        assert rouge_l("a b c d", "a b c d") == pytest.approx(1.0)

    def test_disjoint(self):
        assert rouge_l("x y z", "p q r") == 0.0

    def test_fixture_against_dp_oracle(self):
        cand, ref = "a b c d", "a c d"
        lcs = brute_force_lcs(cand.split(), ref.split())
        assert lcs == 3
        precision, recall = lcs / 4, lcs / 3
        beta = 1.2
        expected = (1 + beta**2) * precision * recall / (recall + beta**2 * precision)
        assert rouge_l(cand, ref) == pytest.approx(expected)

    def test_asymmetric(self):
        a, b = "boat on the water near pier", "boat on water"
        assert rouge_l(a, b) != rouge_l(b, a)

    @given(texts, texts)
    @settings(max_examples=100)
    def test_range_and_oracle(self, cand, ref):
        value = rouge_l(cand, ref)
        assert 0.0 <= value <= 1.0
        lcs = brute_force_lcs(tokenize(cand), tokenize(ref))
        if lcs == 0:
            assert value == 0.0


class TestMeteor:
    def test_identity_high(self):
        assert meteor("large boat docked at pier", "large boat docked at pier") >= 0.99

    def test_disjoint(self):
        assert meteor("x y z", "p q r") == 0.0

    def test_fixture_manual_alignment(self):
        # cand: "boat docked pier", ref: "boat at the pier"
        # matches: boat, pier (2); chunks: 2 (boat | pier, non-adjacent in ref)
        cand, ref = "boat docked pier", "boat at the pier"
        precision, recall = 2 / 3, 2 / 4
        f_mean = 10 * precision * recall / (recall + 9 * precision)
        penalty = 0.5 * (2 / 2) ** 3
        assert meteor(cand, ref) == pytest.approx(f_mean * (1 - penalty))

    def test_contiguous_match_single_chunk(self):
        # "boat on water" aligns as one chunk inside the reference
        value = meteor("boat on water", "the boat on water today")
        precision, recall = 3 / 3, 3 / 5
        f_mean = 10 * precision * recall / (recall + 9 * precision)
        penalty = 0.5 * (1 / 3) ** 3
        assert value == pytest.approx(f_mean * (1 - penalty))

    @given(texts, texts)
    @settings(max_examples=100)
    def test_range(self, cand, ref):
        assert 0.0 <= meteor(cand, ref) <= 1.0


class TestFreshness:
    def test_all_known(self):
        assert freshness({"a b", "c d"}, {"a b", "c d", "e"}) == 0.0

    def test_all_novel(self):
        assert freshness({"a b", "c d"}, {"x y"}) == 1.0

    def test_two_thirds(self):
        assert freshness(["a", "b", "c"], ["a"]) == pytest.approx(2 / 3)

    def test_empty_training_gives_one(self):
        assert freshness(["a", "b"], []) == 1.0

    def test_normalized_matching(self):
        assert freshness(["Boat  on water."], ["boat on water"]) == 0.0

    def test_empty_generated_rejected(self):
        with pytest.raises(ValueError):
            freshness([], ["a"])


class TestDiversity:
    def test_identical_zero(self, hash_embedder):
        assert diversity(["same text here"] * 4, hash_embedder) == pytest.approx(0.0)

    def test_orthogonal_one(self, ortho_embedder):
        assert diversity(["alpha", "beta", "gamma"], ortho_embedder) == pytest.approx(1.0)

    def test_exhaustive_permutation_invariant(self, hash_embedder):
        phrases = ["boat on water", "bird above lake", "dog chasing cat", "boat near pier"]
        shuffled = [phrases[3], phrases[1], phrases[0], phrases[2]]
        assert diversity(phrases, hash_embedder) == pytest.approx(
            diversity(shuffled, hash_embedder)
        )

    def test_sampled_mode_seeded(self, hash_embedder):
        phrases = ["boat on water", "bird above lake", "dog chasing cat", "boat near pier"]
        a = diversity(phrases, hash_embedder, n_pairs=5, seed=3)
        b = diversity(phrases, hash_embedder, n_pairs=5, seed=3)
        assert a == b

    def test_too_few_rejected(self, hash_embedder):
        with pytest.raises(ValueError):
            diversity(["only one"], hash_embedder)


class TestCohensKappa:
    def test_perfect_agreement(self):
        assert cohens_kappa([0, 1, 1, 0, 2], [0, 1, 1, 0, 2]) == pytest.approx(1.0)

    def test_chance_level_zero(self):
        # balanced 2x2 with observed agreement equal to chance agreement
        a = [0, 0, 1, 1]
        b = [0, 1, 0, 1]
        assert cohens_kappa(a, b) == pytest.approx(0.0)

    def test_constant_identical_lists(self):
        # p_e = 1 and a == b
        assert cohens_kappa([1, 1, 1], [1, 1, 1]) == 1.0

    def test_fixture_confusion_table(self):
        # confusion counts: (0,0)=20, (0,1)=5, (1,0)=10, (1,1)=15
        a = [0] * 25 + [1] * 25
        b = [0] * 20 + [1] * 5 + [0] * 10 + [1] * 15
        n = 50
        p_o = (20 + 15) / n
        p_e = (25 / n) * (30 / n) + (25 / n) * (20 / n)
        assert cohens_kappa(a, b) == pytest.approx((p_o - p_e) / (1 - p_e))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cohens_kappa([0], [0, 1])

    @given(st.lists(st.sampled_from([0, 1, 2]), min_size=1, max_size=40))
    def test_self_agreement_with_distinct_labels(self, labels):
        if len(set(labels)) >= 2:
            assert cohens_kappa(labels, labels) == pytest.approx(1.0)


class TestRatingRecord:
    def test_valid(self):
        record = RatingRecord("r1", "p1", "i1", validity=1, conformity=3)
        assert record.conformity == 3

    @pytest.mark.parametrize("validity,conformity", [(2, 0), (-1, 1), (0, 4), (1, -1)])
    def test_out_of_scale(self, validity, conformity):
        with pytest.raises(ValueError):
            RatingRecord("r1", "p1", "i1", validity=validity, conformity=conformity)

    def test_jsonl_round_trip(self, tmp_path):
        records = [
            RatingRecord("r1", "p1", "i1", 1, 3),
            RatingRecord("r2", "p1", "i1", 0, 1),
        ]
        path = tmp_path / "ratings.jsonl"
        save_ratings(records, path)
        assert load_ratings(path) == records


class TestQualityReport:
    def test_no_ratings_omits_human_fields(self, hash_embedder):
        report = quality_report(["a b", "c d"], ["a b"], [], hash_embedder)
        assert report.validity is None
        json_out = report.to_json()
        assert "validity" not in json_out
        assert json_out["freshness"] == pytest.approx(0.5)

    def test_single_rater_all_valid(self, hash_embedder):
        ratings = [RatingRecord("r1", f"p{i}", "i1", 1, 2) for i in range(3)]
        report = quality_report(["a b", "c d"], [], ratings, hash_embedder)
        assert report.validity == pytest.approx(1.0)
        assert report.conformity == pytest.approx(2 / 3)
        assert report.conformity_raw == pytest.approx(2.0)

    def test_fixture_hand_aggregation(self, hash_embedder):
        ratings = [
            RatingRecord("r1", "p1", "i1", 1, 3),
            RatingRecord("r2", "p1", "i1", 0, 1),  # p1: validity .5, conformity 2
            RatingRecord("r1", "p2", "i2", 1, 2),  # p2: validity 1, conformity 2
        ]
        report = quality_report(["a b", "c d"], [], ratings, hash_embedder)
        assert report.validity == pytest.approx((0.5 + 1.0) / 2)
        assert report.conformity_raw == pytest.approx(2.0)
        assert report.conformity == pytest.approx(2 / 3)
        assert report.validity_by_image == {
            "i1": pytest.approx(0.5),
            "i2": pytest.approx(1.0),
        }

    def test_ranges(self, hash_embedder):
        report = quality_report(
            ["boat on water", "cat under tree", "boat on water"],
            ["boat on water"],
            [RatingRecord("r1", "p1", "i1", 1, 1)],
            hash_embedder,
        )
        for value in (report.freshness, report.diversity, report.validity, report.conformity):
            assert 0.0 <= value <= 1.0
