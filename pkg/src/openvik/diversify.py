"""Diversity-driven data enhancement: scoring, dropping, and augmentation.

Long-tail relation bias in the training corpus is mitigated in three steps:
score every relation with a grid TF-IDF+ importance score, randomly drop
descriptors carrying low-score relations until the corpus shrinks to a
target fraction, and augment high-score descriptors with graph-backed and
commonsense-backed variants.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Protocol

from .corpus import (
    Corpus,
    EntityMention,
    ImageRecord,
    Provenance,
    RelationalDescriptor,
    dedup_corpus,
)
from .kgbridge import KnowledgeSourceAdapter, noun_tokens

# (alpha1, alpha2) grid per frequency tercile: rarer relations keep more of
# their raw score, dominant relations are dampened harder.
DEFAULT_GRID = {
    "low": (1.0, 1.0),
    "middle": (2.0, 0.75),
    "high": (5.0, 0.5),
}


@dataclass(frozen=True, slots=True)
class RelationScoreTable:
    total_phrases: int
    frequencies: dict[str, int]
    raw_scores: dict[str, float]
    scores: dict[str, float]  # min-max normalized to [0, 1]

    def score(self, relation: str) -> float:
        return self.scores[relation]


@dataclass(frozen=True, slots=True)
class DropConfig:
    low_threshold: float = 0.4
    drop_rate: float = 0.5
    target_fraction: float = 0.6
    seed: int = 0
    max_passes: int = 50

    def __post_init__(self) -> None:
        if not 0.0 < self.target_fraction <= 1.0:
            raise ValueError(f"target_fraction out of (0,1]: {self.target_fraction}")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError(f"drop_rate out of [0,1]: {self.drop_rate}")


class CommonsenseAdapter(Protocol):
    """COMET-like completion source with attribute and effect branches."""

    def complete(self, text: str, branch: str) -> list[str]: ...


def relation_frequencies(corpus: Corpus) -> dict[str, int]:
    return dict(Counter(d.relation for d in corpus.descriptors()))


def tfidf_plus(n: int, f_r: int, alpha1: float, alpha2: float) -> float:
    """Grid TF-IDF+ raw score: (log(N / (1 + f_r * alpha1)))^alpha2.

    Natural log; negative logs (relation dominating the corpus) clamp to 0.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    if f_r < 0 or alpha1 <= 0 or alpha2 <= 0:
        raise ValueError("f_r must be >= 0 and alphas > 0")
    log_value = math.log(n / (1.0 + f_r * alpha1))
    if log_value <= 0.0:
        return 0.0
    return log_value**alpha2


def _tercile_of(rank: int, total: int) -> str:
    if rank < total / 3:
        return "low"
    if rank < 2 * total / 3:
        return "middle"
    return "high"


def score_table(
    corpus: Corpus, grid: dict[str, tuple[float, float]] | None = None
) -> RelationScoreTable:
    """Score every relation; terciles of the frequency ranking pick the scales.

    Scores are min-max normalized to [0, 1]; a degenerate constant raw score
    maps every relation to 1.
    """
    grid = dict(DEFAULT_GRID if grid is None else grid)
    missing = {"low", "middle", "high"} - grid.keys()
    if missing:
        raise ValueError(f"grid missing terciles: {sorted(missing)}")
    frequencies = relation_frequencies(corpus)
    total_phrases = sum(frequencies.values())
    if not frequencies:
        return RelationScoreTable(0, {}, {}, {})
    ordered = sorted(frequencies, key=lambda r: (frequencies[r], r))
    raw: dict[str, float] = {}
    for rank, relation in enumerate(ordered):
        alpha1, alpha2 = grid[_tercile_of(rank, len(ordered))]
        raw[relation] = tfidf_plus(total_phrases, frequencies[relation], alpha1, alpha2)
    lo, hi = min(raw.values()), max(raw.values())
    if hi == lo:
        scores = {r: 1.0 for r in raw}
    else:
        scores = {r: (v - lo) / (hi - lo) for r, v in raw.items()}
    return RelationScoreTable(total_phrases, frequencies, raw, scores)


def random_drop(corpus: Corpus, table: RelationScoreTable, config: DropConfig) -> Corpus:
    """Seeded dropping of low-importance descriptors down to a target size.

    Repeated passes over all images drop each eligible descriptor (relation
    score <= low_threshold) with probability drop_rate, until the descriptor
    count reaches target_fraction of the input count or max_passes elapse.
    High-score descriptors are never dropped.
    """
    original = corpus.counters.descriptors
    target = config.target_fraction * original
    if original == 0 or original <= target:
        return corpus
    eligible = {
        relation
        for relation in table.scores
        if table.scores[relation] <= config.low_threshold
    }
    if not eligible:
        return corpus
    rng = random.Random(config.seed)
    images = list(corpus.images)
    count = original
    for _ in range(config.max_passes):
        if count <= target:
            break
        next_images = []
        for image in images:
            kept = []
            for d in image.descriptors:
                if (
                    count > target
                    and d.relation in eligible
                    and rng.random() < config.drop_rate
                ):
                    count -= 1
                else:
                    kept.append(d)
            next_images.append(
                image if len(kept) == len(image.descriptors) else replace(image, descriptors=tuple(kept))
            )
        images = next_images
    return corpus.with_images(images)


def _existing_triples(image: ImageRecord) -> set[tuple[str, str, str]]:
    return {(d.subject.name, d.relation, d.object.name) for d in image.descriptors}


def augment_relations(
    corpus: Corpus,
    table: RelationScoreTable,
    kg: KnowledgeSourceAdapter,
    high_threshold: float = 0.6,
) -> list[RelationalDescriptor]:
    """Graph-backed relation enrichment for high-importance descriptors.

    For each descriptor whose relation scores >= high_threshold, every entity
    pair parsed from its text is looked up in the knowledge graph; edges with
    weight > 1 become new relation-augmented descriptors, skipping triples the
    image already has.
    """
    if not 0.0 <= high_threshold <= 1.0:
        raise ValueError(f"high_threshold out of [0,1]: {high_threshold}")
    out: list[RelationalDescriptor] = []
    for image in corpus.images:
        existing = _existing_triples(image)
        serial = 0
        for d in image.descriptors:
            if table.scores.get(d.relation, 0.0) < high_threshold:
                continue
            entities = list(dict.fromkeys([d.subject.name, d.object.name] + noun_tokens(d.text)))
            for a in entities:
                for edge in kg.edges(a):
                    if edge.weight <= 1.0:
                        continue
                    if edge.target not in entities:
                        continue
                    triple = (a, edge.rel.lower(), edge.target)
                    if triple in existing:
                        continue
                    existing.add(triple)
                    subject_box = d.subject.box if a == d.subject.name else d.object.box
                    object_box = d.object.box if edge.target == d.object.name else d.subject.box
                    out.append(
                        RelationalDescriptor(
                            descriptor_id=f"{d.descriptor_id}#rel{serial}",
                            image_id=image.image_id,
                            text=f"{a} {edge.rel} {edge.target}",
                            subject=EntityMention(a, subject_box),
                            object=EntityMention(edge.target, object_box),
                            relation=edge.rel,
                            provenance=Provenance.RELATION_AUGMENTED,
                        )
                    )
                    serial += 1
    return out


def augment_entities(
    corpus: Corpus,
    table: RelationScoreTable,
    kg: KnowledgeSourceAdapter,
    commonsense: CommonsenseAdapter,
    relatedness_threshold: float = 0.85,
) -> list[RelationalDescriptor]:
    """Entity and attribute enrichment of each image's top-scored descriptor.

    The object of the highest-importance descriptor is swapped for every
    graph entity related at >= relatedness_threshold; the commonsense
    adapter's attribute and effect branches add descriptive variants.
    """
    out: list[RelationalDescriptor] = []
    for image in corpus.images:
        if not image.descriptors:
            continue
        top = max(
            image.descriptors,
            key=lambda d: (table.scores.get(d.relation, 0.0), d.descriptor_id),
        )
        serial = 0
        for edge in kg.edges(top.object.name):
            candidate = edge.target
            if candidate == top.object.name:
                continue
            if kg.relatedness(top.object.name, candidate) < relatedness_threshold:
                continue
            new_text = top.text.replace(top.object.name, candidate)
            if new_text == top.text:
                new_text = f"{top.subject.name} {top.relation} {candidate}"
            out.append(
                RelationalDescriptor(
                    descriptor_id=f"{top.descriptor_id}#ent{serial}",
                    image_id=image.image_id,
                    text=new_text,
                    subject=top.subject,
                    object=EntityMention(candidate, top.object.box),
                    relation=top.relation,
                    provenance=Provenance.ENTITY_AUGMENTED,
                )
            )
            serial += 1
        for branch in ("attribute", "effect"):
            for phrase in commonsense.complete(top.text, branch):
                out.append(
                    RelationalDescriptor(
                        descriptor_id=f"{top.descriptor_id}#attr{serial}",
                        image_id=image.image_id,
                        text=phrase,
                        subject=top.subject,
                        object=top.object,
                        relation=top.relation,
                        provenance=Provenance.ATTRIBUTE_AUGMENTED,
                    )
                )
                serial += 1
    return out


@dataclass(frozen=True, slots=True)
class EnhancementReport:
    original_count: int
    deduped_count: int
    dropped_count: int
    augmented_by_provenance: dict[str, int]

    def to_json(self) -> dict:
        return {
            "original_count": self.original_count,
            "deduped_count": self.deduped_count,
            "dropped_count": self.dropped_count,
            "augmented_by_provenance": dict(self.augmented_by_provenance),
        }


def enhance(
    corpus: Corpus,
    kg: KnowledgeSourceAdapter,
    commonsense: CommonsenseAdapter,
    drop_config: DropConfig = DropConfig(),
    high_threshold: float = 0.6,
    relatedness_threshold: float = 0.85,
    grid: dict[str, tuple[float, float]] | None = None,
) -> tuple[Corpus, EnhancementReport]:
    """Full enhancement: dedup, drop low-score data, augment high-score data."""
    original = corpus.counters.descriptors
    deduped = dedup_corpus(corpus)
    deduped_count = deduped.counters.descriptors
    table = score_table(deduped, grid=grid)
    dropped = random_drop(deduped, table, drop_config)
    dropped_count = deduped_count - dropped.counters.descriptors
    added = augment_relations(dropped, table, kg, high_threshold)
    added += augment_entities(dropped, table, kg, commonsense, relatedness_threshold)
    by_image: dict[str, list[RelationalDescriptor]] = {}
    for d in added:
        by_image.setdefault(d.image_id, []).append(d)
    images = [
        replace(image, descriptors=image.descriptors + tuple(by_image.get(image.image_id, [])))
        for image in dropped.images
    ]
    by_provenance = Counter(d.provenance.value for d in added)
    report = EnhancementReport(
        original_count=original,
        deduped_count=deduped_count,
        dropped_count=dropped_count,
        augmented_by_provenance=dict(by_provenance),
    )
    return dropped.with_images(images), report
