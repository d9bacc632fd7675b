"""Triplet parsing, knowledge-graph mapping, and knowledge-source overlap.

Free-form phrases are reduced to (subject, relation, object) triplets with a
small pattern-based chunker, mapped onto graph nodes by exact name lookup
with embedding similarity over edge relations, and compared against
LLM-elicited phrases through a record/replay client.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import normalize_text
from .generator import SimilarityAdapter, pair_similarity

UNMAPPED_SENTINEL = -1.0

DETERMINERS = frozenset(
    "a an the this that these those its his her their our your my some any each every".split()
)

PREPOSITIONS = frozenset(
    "on in at under over near behind above below beside by with of from to into onto "
    "around across against along between beneath during without inside outside up "
    "down off upon through next after before toward towards among atop".split()
)

ADJECTIVES = frozenset(
    "large small big little tall short long old young new red blue green yellow black "
    "white brown orange purple pink gray grey striped wooden metal plastic bright dark "
    "warm cold dry wet flat round fresh empty full three two four five many several "
    "adventurous cute dirty clean shiny broken tiny huge handy brave thick cozy "
    "colorful".split()
)

EXTRA_VERBS = frozenset(
    "is are was were has have had sits stands wears holds rest rests lies hangs "
    "docked parked attached covered filled surrounded adorning chasing licking "
    "leaving".split()
)

# Tokens with verb-like suffixes that are overwhelmingly nouns in this domain.
NOUN_EXCEPTIONS = frozenset(
    "building buildings painting paintings ceiling clothing railing lightning morning "
    "evening awning wing wings ring rings king thing things spring string ceiling "
    "duckling sibling darling dumpling bed beds speed seed seeds weed shed sled feed "
    "breed red bred fed led need reed bleed bird ground background playground".split()
)


def _verb_lexicon() -> frozenset:
    words: set[str] = set(EXTRA_VERBS)
    for name in ("verbs_exact.txt", "verbs_fuzzy.txt"):
        data = (resources.files("openvik") / "data" / name).read_text()
        words.update(w for w in data.split() if w)
    return frozenset(words)


VERB_LEXICON = _verb_lexicon()


def _is_relation_token(token: str) -> bool:
    if token in PREPOSITIONS:
        return True
    if token in NOUN_EXCEPTIONS:
        return False
    if token in VERB_LEXICON:
        return True
    if "-" in token and any(_is_relation_token(part) for part in token.split("-")):
        return True
    if len(token) >= 5 and (token.endswith("ing") or token.endswith("ed")):
        return True
    return False


def _is_noun(token: str) -> bool:
    return (
        token not in DETERMINERS
        and token not in ADJECTIVES
        and not _is_relation_token(token)
    )


@dataclass(frozen=True, slots=True)
class Triplet:
    subject: str
    relation: str
    object: str
    phrase_id: str = ""

    def __post_init__(self) -> None:
        for name in ("subject", "relation", "object"):
            value = normalize_text(getattr(self, name))
            if not value:
                raise ValueError(f"triplet {name} empty")
            object.__setattr__(self, name, value)

    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)

    def render(self) -> str:
        return f"{self.subject} {self.relation} {self.object}"


@dataclass(frozen=True, slots=True)
class ParseResult:
    triplet: Triplet
    residual: tuple[str, ...]


def parse_triplet(text: str, phrase_id: str = "") -> ParseResult | None:
    """Pattern-based subject/relation/object extraction.

    The first verb or preposition run preceded by a noun becomes the
    relation; the nearest noun before it is the subject and the first noun
    after it is the object. Leftover adjectives and dangling nouns are kept
    as residual modifiers. Returns None when no such pattern exists.
    """
    tokens = normalize_text(text).split()
    subject = None
    relation_run: list[str] = []
    obj = None
    residual: list[str] = []
    i = 0
    # subject + relation run
    while i < len(tokens):
        token = tokens[i]
        if _is_relation_token(token) and subject is not None:
            while i < len(tokens) and _is_relation_token(tokens[i]):
                relation_run.append(tokens[i])
                i += 1
            break
        if _is_noun(token):
            if subject is not None:
                residual.append(subject)
            subject = token
        elif token in ADJECTIVES or _is_relation_token(token):
            residual.append(token)
        i += 1
    if subject is None or not relation_run:
        return None
    # object and trailing residual
    while i < len(tokens):
        token = tokens[i]
        if _is_noun(token):
            if obj is None:
                obj = token
            else:
                residual.append(token)
        elif token not in DETERMINERS:
            residual.append(token)
        i += 1
    if obj is None:
        return None
    triplet = Triplet(subject, " ".join(relation_run), obj, phrase_id=phrase_id)
    return ParseResult(triplet=triplet, residual=tuple(residual))


def noun_tokens(text: str) -> list[str]:
    """All noun-like tokens of a phrase, in order, without duplicates."""
    seen: set[str] = set()
    out = []
    for token in normalize_text(text).split():
        if _is_noun(token) and token not in seen:
            seen.add(token)
            out.append(token)
    return out


class KnowledgeSourceAdapter(Protocol):
    """ConceptNet-like graph: node edges and between-word relatedness."""

    def has_node(self, name: str) -> bool: ...

    def edges(self, node: str) -> list:  # list of objects with .rel/.target/.weight
        ...

    def relatedness(self, a: str, b: str) -> float: ...


@dataclass(frozen=True, slots=True)
class MappingResult:
    triplet: Triplet
    matched: bool
    best_similarity: float
    matched_edge: tuple[str, float] | None = None


def map_to_kg(
    triplet: Triplet,
    kg: KnowledgeSourceAdapter,
    sim: SimilarityAdapter,
    threshold: float = 0.75,
) -> MappingResult:
    """Map triplet endpoints to graph nodes and match the relation by cosine.

    Matched iff both endpoints resolve to nodes and the best relation
    similarity among edges between them is >= threshold.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0,1], got {threshold}")
    if not (kg.has_node(triplet.subject) and kg.has_node(triplet.object)):
        return MappingResult(triplet, matched=False, best_similarity=UNMAPPED_SENTINEL)
    best = UNMAPPED_SENTINEL
    best_edge = None
    for edge in kg.edges(triplet.subject):
        if edge.target != triplet.object:
            continue
        similarity = pair_similarity(triplet.relation, edge.rel, sim)
        if similarity > best:
            best = similarity
            best_edge = (edge.rel, edge.weight)
    matched = best >= threshold
    return MappingResult(
        triplet, matched=matched, best_similarity=best, matched_edge=best_edge
    )


LLM_PROMPT_TEMPLATE = (
    "Suppose you are looking at an image that contains the following subject and "
    "object entities:\n"
    "Subject list: [{subjects}]\n"
    "Object list: [{objects}]\n"
    "Please extract 5-10 condensed descriptions that describe the interactions "
    "and/or relations among those entities in the image. Try to elucidate the "
    "associations and relationships with diverse language formats instead of "
    "being restricted to sub-verb-obj tuples."
)


def build_llm_prompt(subjects: Sequence[str], objects: Sequence[str]) -> str:
    """Instantiate the knowledge-elicitation prompt with entity lists."""
    if not subjects or not objects:
        raise ValueError("subject and object lists must be non-empty")
    return LLM_PROMPT_TEMPLATE.format(
        subjects=", ".join(subjects), objects=", ".join(objects)
    )


class LlmClient(Protocol):
    def complete(self, prompt: str) -> list[str]: ...


class CassetteLlmClient:
    """Record/replay client over a JSONL cassette of request/response pairs."""

    def __init__(self, cassette_path: str | Path, inner: LlmClient | None = None):
        self.path = Path(cassette_path)
        self.inner = inner
        self._cache: dict[str, list[str]] = {}
        if self.path.exists():
            with self.path.open() as handle:
                for line in handle:
                    if line.strip():
                        entry = json.loads(line)
                        self._cache[entry["request"]["prompt"]] = entry["response"]["phrases"]

    def complete(self, prompt: str) -> list[str]:
        if prompt in self._cache:
            return list(self._cache[prompt])
        if self.inner is None:
            raise KeyError(f"prompt not in cassette and no live client bound: {prompt!r}")
        phrases = self.inner.complete(prompt)
        self._cache[prompt] = phrases
        with self.path.open("a") as handle:
            handle.write(
                json.dumps({"request": {"prompt": prompt}, "response": {"phrases": phrases}})
                + "\n"
            )
        return phrases


VENN_CELLS = (
    "visual_only",
    "kg_only",
    "llm_only",
    "visual_kg",
    "visual_llm",
    "kg_llm",
    "all_three",
)


@dataclass(frozen=True, slots=True)
class OverlapReport:
    counts: dict[str, int]
    examples: dict[str, tuple[Triplet, ...]]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _in_set(triplet: Triplet, pool: Iterable[Triplet], sim, threshold: float) -> bool:
    for other in pool:
        if triplet.subject == other.subject and triplet.object == other.object:
            if triplet.relation == other.relation:
                return True
            if pair_similarity(triplet.relation, other.relation, sim) >= threshold:
                return True
    return False


def overlap_report(
    visual: Iterable[Triplet],
    kg_matched: Iterable[Triplet],
    llm: Iterable[Triplet],
    sim: SimilarityAdapter,
    threshold: float = 0.75,
    max_examples: int = 20,
) -> OverlapReport:
    """Populate the 7 membership cells over the three knowledge sets.

    Triplet identity across sets requires identical endpoints and relation
    similarity >= threshold. Counts are over distinct triplets of the union.
    """
    sets = {"visual": list(visual), "kg": list(kg_matched), "llm": list(llm)}
    distinct: dict[tuple[str, str, str], Triplet] = {}
    membership: dict[tuple[str, str, str], set[str]] = {}
    for source, pool in sets.items():
        for triplet in pool:
            key = triplet.key()
            distinct.setdefault(key, triplet)
            membership.setdefault(key, set()).add(source)
    for key, triplet in distinct.items():
        for source, pool in sets.items():
            if source not in membership[key] and _in_set(triplet, pool, sim, threshold):
                membership[key].add(source)
    cell_of = {
        frozenset({"visual"}): "visual_only",
        frozenset({"kg"}): "kg_only",
        frozenset({"llm"}): "llm_only",
        frozenset({"visual", "kg"}): "visual_kg",
        frozenset({"visual", "llm"}): "visual_llm",
        frozenset({"kg", "llm"}): "kg_llm",
        frozenset({"visual", "kg", "llm"}): "all_three",
    }
    counts = {cell: 0 for cell in VENN_CELLS}
    examples: dict[str, list[Triplet]] = {cell: [] for cell in VENN_CELLS}
    for key in sorted(distinct):
        cell = cell_of[frozenset(membership[key])]
        counts[cell] += 1
        if len(examples[cell]) < max_examples:
            examples[cell].append(distinct[key])
    return OverlapReport(
        counts=counts, examples={c: tuple(v) for c, v in examples.items()}
    )


def overlap_report_to_json(report: OverlapReport) -> dict:
    return {
        "counts": report.counts,
        "total": report.total,
        "examples": {
            cell: [t.render() for t in triplets]
            for cell, triplets in report.examples.items()
        },
    }
