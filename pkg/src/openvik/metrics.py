"""Generation metrics, in-depth quality metrics, and rater agreement.

Text metrics (BLEU, ROUGE-L, METEOR) operate on a shared lowercase
alphanumeric tokenization. Quality metrics cover validity and conformity
(human ratings), freshness (novelty against the training set), and
diversity (mean semantic distance between phrase pairs).
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import normalize_text
from .generator import SimilarityAdapter, pair_similarity

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """Smoothed BLEU with brevity penalty.

    Modified n-gram precision against the closest-length reference set, with
    add-one smoothing applied to orders above 1 so short exact matches still
    score 1.0.
    """
    if not candidate.strip():
        raise ValueError("candidate must be non-empty")
    if not references:
        raise ValueError("reference set must be non-empty")
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_grams = _ngrams(cand, n)
        max_ref = Counter()
        for ref in refs:
            for gram, count in _ngrams(ref, n).items():
                max_ref[gram] = max(max_ref[gram], count)
        matches = sum(min(count, max_ref[gram]) for gram, count in cand_grams.items())
        total = sum(cand_grams.values())
        if n > 1:
            matches += 1
            total += 1
        if total == 0 or matches == 0:
            return 0.0
        log_sum += math.log(matches / total) / max_n
    ref_len = min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
    bp = 1.0 if len(cand) >= ref_len else math.exp(1.0 - ref_len / max(len(cand), 1))
    return bp * math.exp(log_sum)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for token in a:
        cur = [0]
        for j, other in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if token == other else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = 1.2) -> float:
    """LCS-based F-measure, recall-weighted by beta."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        raise ValueError("both texts must be non-empty")
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return (1 + beta**2) * precision * recall / (recall + beta**2 * precision)


def _meteor_alignment(cand: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """Greedy left-to-right exact unigram alignment: (matches, chunks)."""
    used = [False] * len(ref)
    aligned: list[int | None] = []
    for token in cand:
        position = None
        for j, other in enumerate(ref):
            if not used[j] and token == other:
                position = j
                used[j] = True
                break
        aligned.append(position)
    matches = sum(1 for p in aligned if p is not None)
    chunks = 0
    prev = None
    for p in aligned:
        if p is None:
            prev = None
            continue
        if prev is None or p != prev + 1:
            chunks += 1
        prev = p
    return matches, chunks


def meteor(candidate: str, reference: str) -> float:
    """Exact-match METEOR: unigram F-mean with a fragmentation penalty.

    No stemming or synonym stages; alignment is exact-token only.
    """
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        raise ValueError("both texts must be non-empty")
    matches, chunks = _meteor_alignment(cand, ref)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


def freshness(generated: Iterable[str], training: Iterable[str]) -> float:
    """Fraction of generated phrases absent from the training set."""
    gen = list(generated)
    if not gen:
        raise ValueError("generated set must be non-empty")
    known = {normalize_text(t) for t in training}
    novel = sum(1 for g in gen if normalize_text(g) not in known)
    return novel / len(gen)


def diversity(
    phrases: Sequence[str],
    adapter: SimilarityAdapter,
    n_pairs: int | None = None,
    seed: int = 0,
) -> float:
    """Mean semantic distance clamp(1 - cosine, 0, 1) over phrase pairs.

    n_pairs=None evaluates all unordered pairs (deterministic); otherwise
    n_pairs pairs are sampled uniformly with the given seed.
    """
    if len(phrases) < 2:
        raise ValueError("diversity needs at least 2 phrases")
    if n_pairs is None:
        pairs = list(combinations(range(len(phrases)), 2))
    else:
        rng = random.Random(seed)
        all_pairs = list(combinations(range(len(phrases)), 2))
        pairs = [all_pairs[rng.randrange(len(all_pairs))] for _ in range(n_pairs)]
    total = sum(
        min(1.0, max(0.0, 1.0 - pair_similarity(phrases[i], phrases[j], adapter)))
        for i, j in pairs
    )
    return total / len(pairs)


def cohens_kappa(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement between two raters' label sequences."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty label lists")
    n = len(a)
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    counts_a, counts_b = Counter(a), Counter(b)
    labels = set(counts_a) | set(counts_b)
    expected = sum(counts_a[l] * counts_b[l] for l in labels) / (n * n)
    if expected == 1.0:
        return 1.0 if observed == 1.0 else 0.0
    return (observed - expected) / (1.0 - expected)


VALIDITY_SCALE = (0, 1)
CONFORMITY_SCALE = (0, 1, 2, 3)


@dataclass(frozen=True, slots=True)
class RatingRecord:
    rater_id: str
    phrase_id: str
    image_id: str
    validity: int
    conformity: int

    def __post_init__(self) -> None:
        if self.validity not in VALIDITY_SCALE:
            raise ValueError(f"validity must be one of {VALIDITY_SCALE}, got {self.validity}")
        if self.conformity not in CONFORMITY_SCALE:
            raise ValueError(
                f"conformity must be one of {CONFORMITY_SCALE}, got {self.conformity}"
            )

    def to_json(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "phrase_id": self.phrase_id,
            "image_id": self.image_id,
            "validity": self.validity,
            "conformity": self.conformity,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "RatingRecord":
        return cls(
            rater_id=raw["rater_id"],
            phrase_id=raw["phrase_id"],
            image_id=raw["image_id"],
            validity=raw["validity"],
            conformity=raw["conformity"],
        )


def load_ratings(path: str | Path) -> list[RatingRecord]:
    out = []
    with Path(path).open() as handle:
        for line in handle:
            if line.strip():
                out.append(RatingRecord.from_json(json.loads(line)))
    return out


def save_ratings(ratings: Iterable[RatingRecord], path: str | Path) -> None:
    with Path(path).open("w") as handle:
        for record in ratings:
            handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


@dataclass(frozen=True, slots=True)
class QualityReport:
    freshness: float
    diversity: float
    n_generated: int
    n_training: int
    validity: float | None = None
    conformity: float | None = None  # rescaled to [0,1] by /3
    validity_by_image: dict[str, float] | None = None
    conformity_raw: float | None = None
    n_ratings: int = 0

    def to_json(self) -> dict:
        out = {
            "freshness": self.freshness,
            "diversity": self.diversity,
            "sample_sizes": {
                "generated": self.n_generated,
                "training": self.n_training,
                "ratings": self.n_ratings,
            },
        }
        if self.validity is not None:
            out["validity"] = self.validity
            out["conformity"] = self.conformity
            out["conformity_raw"] = self.conformity_raw
            out["validity_by_image"] = self.validity_by_image
        return out


def quality_report(
    generated: Sequence[str],
    training: Sequence[str],
    ratings: Sequence[RatingRecord],
    adapter: SimilarityAdapter,
    n_pairs: int | None = None,
    seed: int = 0,
) -> QualityReport:
    """Aggregate the four quality metrics; human fields need ratings.

    Human ratings are averaged per phrase first, then over the corpus;
    conformity is additionally rescaled by /3 for the [0,1] report axis.
    Per-image validity means are included as an alternative grouping.
    """
    fresh = freshness(generated, training)
    div = diversity(generated, adapter, n_pairs=n_pairs, seed=seed)
    report = QualityReport(
        freshness=fresh,
        diversity=div,
        n_generated=len(generated),
        n_training=len(training),
        n_ratings=len(ratings),
    )
    if not ratings:
        return report
    per_phrase: dict[str, list[RatingRecord]] = {}
    for record in ratings:
        per_phrase.setdefault(record.phrase_id, []).append(record)
    phrase_validity = {
        pid: sum(r.validity for r in recs) / len(recs) for pid, recs in per_phrase.items()
    }
    phrase_conformity = {
        pid: sum(r.conformity for r in recs) / len(recs) for pid, recs in per_phrase.items()
    }
    validity_mean = sum(phrase_validity.values()) / len(phrase_validity)
    conformity_raw = sum(phrase_conformity.values()) / len(phrase_conformity)
    image_of = {r.phrase_id: r.image_id for r in ratings}
    by_image: dict[str, list[float]] = {}
    for pid, value in phrase_validity.items():
        by_image.setdefault(image_of[pid], []).append(value)
    validity_by_image = {img: sum(v) / len(v) for img, v in by_image.items()}
    return QualityReport(
        freshness=fresh,
        diversity=div,
        n_generated=len(generated),
        n_training=len(training),
        validity=validity_mean,
        conformity=conformity_raw / 3.0,
        conformity_raw=conformity_raw,
        validity_by_image=validity_by_image,
        n_ratings=len(ratings),
    )
