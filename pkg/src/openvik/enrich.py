"""Downstream enrichment: caption retrieval, situation recognition, VCR.

Extracted knowledge enriches task inputs three ways: captions gain phrases
for entity pairs whose dominant relations pass a share threshold, situation
verbs gain their most common knowledge phrase grounded in the image's
objects, and VCR options receive both augmentations stacked.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import Corpus, PairIndex
from .kgbridge import KnowledgeSourceAdapter, noun_tokens, _is_relation_token


class MatchAdapter(Protocol):
    """Image-text match scorer; higher means a better match."""

    def score(self, image_uri: str, text: str) -> float: ...


@dataclass(frozen=True, slots=True)
class DescriptorSet:
    verb: str
    descriptors: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.descriptors:
            raise ValueError("descriptor set must be non-empty")


@dataclass(frozen=True, slots=True)
class VerbLists:
    exact: frozenset
    fuzzy: frozenset

    @classmethod
    def load(cls, exact_path: str | Path | None = None, fuzzy_path: str | Path | None = None) -> "VerbLists":
        """Load verb lists; defaults to the bundled data files."""

        def read(path, default_name):
            if path is not None:
                return Path(path).read_text()
            return (resources.files("openvik") / "data" / default_name).read_text()

        exact = frozenset(read(exact_path, "verbs_exact.txt").split())
        fuzzy = frozenset(read(fuzzy_path, "verbs_fuzzy.txt").split())
        return cls(exact=exact, fuzzy=fuzzy)


def _pair_phrases(
    pair: tuple[str, str], pair_index: PairIndex, corpus: Corpus, min_share: float
) -> list[str]:
    """Texts of corpus descriptors whose relation share for the pair > min_share."""
    counts = pair_index.get(pair)
    if not counts:
        return []
    total = sum(counts.values())
    dominant = {rel for rel, c in counts.items() if c / total > min_share}
    if not dominant:
        return []
    phrases: list[str] = []
    seen: set[str] = set()
    for d in corpus.descriptors():
        if (
            (d.subject.name, d.object.name) == pair
            and d.relation in dominant
            and d.text not in seen
        ):
            seen.add(d.text)
            phrases.append(d.text)
    return phrases


def enrich_caption(
    caption: str,
    pair_index: PairIndex,
    corpus: Corpus,
    min_share: float = 0.3,
) -> str:
    """Append knowledge phrases for caption entity pairs with dominant relations.

    The share threshold is strict: a relation must occur in more than
    min_share of the pair's descriptors to qualify.
    """
    if not 0.0 < min_share < 1.0:
        raise ValueError(f"min_share out of (0,1): {min_share}")
    nouns = noun_tokens(caption)
    appended: list[str] = []
    seen: set[str] = set()
    for i, a in enumerate(nouns):
        for b in nouns[i + 1 :]:
            for pair in ((a, b), (b, a)):
                for phrase in _pair_phrases(pair, pair_index, corpus, min_share):
                    if phrase not in seen:
                        seen.add(phrase)
                        appended.append(phrase)
    if not appended:
        return caption
    return ". ".join([caption] + appended)


def recall_at_k(rankings: Sequence[tuple[object, Sequence[object]]], k: int) -> float:
    """Fraction of queries whose gold item appears in the top k candidates."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not rankings:
        return 0.0
    hits = sum(1 for gold, candidates in rankings if gold in candidates[:k])
    return hits / len(rankings)


def _resolve_verb(
    verb: str,
    relations: set[str],
    verb_lists: VerbLists,
    kg: KnowledgeSourceAdapter | None,
    relatedness_threshold: float,
) -> str | None:
    """Nearest corpus relation: exact match, then fuzzy-list + relatedness."""
    if verb in relations:
        return verb
    for rel in relations:
        if verb in rel.split():
            return verb
    if verb in verb_lists.fuzzy and kg is not None:
        best: str | None = None
        best_score = 0.0
        for rel in sorted(relations):
            score = kg.relatedness(verb, rel)
            if score >= relatedness_threshold and score > best_score:
                best, best_score = rel, score
        return best
    return None


def gsr_descriptor_set(
    verb: str,
    corpus: Corpus,
    image_objects: set[str],
    verb_lists: VerbLists,
    kg: KnowledgeSourceAdapter | None = None,
    relatedness_threshold: float = 0.85,
) -> DescriptorSet:
    """Descriptors for a candidate situation verb.

    Starts from "An image of <verb>"; when the verb (or its fuzzy match)
    occurs as a corpus relation, the most frequent knowledge phrase
    containing it whose subject or object appears among the image objects is
    appended. Frequency ties resolve to the lexicographically smaller phrase.
    """
    if not verb.strip():
        raise ValueError("verb must be non-empty")
    verb = verb.strip().lower()
    original = f"An image of {verb}"
    relations = {d.relation for d in corpus.descriptors()}
    resolved = _resolve_verb(verb, relations, verb_lists, kg, relatedness_threshold)
    if resolved is None:
        return DescriptorSet(verb=verb, descriptors=(original,))
    candidates = Counter()
    for d in corpus.descriptors():
        if f" {resolved} " not in f" {' '.join(d.text.lower().split())} ":
            continue
        if d.subject.name in image_objects or d.object.name in image_objects:
            candidates[d.text] += 1
    if not candidates:
        return DescriptorSet(verb=verb, descriptors=(original,))
    best = min(candidates, key=lambda t: (-candidates[t], t))
    return DescriptorSet(verb=verb, descriptors=(original, best))


def gsr_score(image_uri: str, descriptor_set: DescriptorSet, adapter: MatchAdapter) -> float:
    """Additive decomposition: mean adapter score over the descriptor set."""
    scores = [adapter.score(image_uri, d) for d in descriptor_set.descriptors]
    return sum(scores) / len(scores)


def enrich_vcr(
    question: str,
    options: Sequence[str],
    pair_index: PairIndex,
    corpus: Corpus,
    verb_lists: VerbLists,
    kg: KnowledgeSourceAdapter | None = None,
    min_share: float = 0.3,
    image_objects: set[str] | None = None,
) -> list[str]:
    """Two-level option enrichment: pair relations, then verb contexts.

    Each returned text starts with the unmodified option, followed by any
    appended contexts.
    """
    if len(options) < 2:
        raise ValueError("VCR needs at least 2 options")
    if image_objects is None:
        image_objects = {d.subject.name for d in corpus.descriptors()} | {
            d.object.name for d in corpus.descriptors()
        }
    enriched = []
    for option in options:
        combined = f"{question} {option}"
        level1 = enrich_caption(combined, pair_index, corpus, min_share=min_share)
        contexts = level1[len(combined) :].lstrip(". ") if len(level1) > len(combined) else ""
        parts = [option]
        if contexts:
            parts.append(contexts)
        for token in option.lower().split():
            if not _is_relation_token(token):
                continue
            dset = gsr_descriptor_set(token, corpus, image_objects, verb_lists, kg=kg)
            parts.extend(d for d in dset.descriptors[1:] if d not in parts)
        enriched.append(". ".join(parts))
    return enriched


def classification_metrics(
    predictions: Sequence, golds: Sequence
) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, F1); P/R/F1 macro-averaged over labels."""
    if len(predictions) != len(golds):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(golds)}")
    if not golds:
        raise ValueError("empty label lists")
    accuracy = sum(1 for p, g in zip(predictions, golds) if p == g) / len(golds)
    labels = sorted(set(predictions) | set(golds), key=repr)
    precisions, recalls, f1s = [], [], []
    for label in labels:
        tp = sum(1 for p, g in zip(predictions, golds) if p == label and g == label)
        fp = sum(1 for p, g in zip(predictions, golds) if p == label and g != label)
        fn = sum(1 for p, g in zip(predictions, golds) if p != label and g == label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    n = len(labels)
    return (accuracy, sum(precisions) / n, sum(recalls) / n, sum(f1s) / n)
