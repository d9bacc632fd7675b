"""Domain types, dataset ingestion, persistence, and indexes.

The corpus is a collection of images, each carrying relational descriptors:
a free-form description text plus the subject/object entity mentions (with
boxes) and the relation linking them. Records are stored as JSON lines, one
image per line.
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class CorpusError(ValueError):
    """Raised on schema or invariant violations during ingestion."""


class Provenance(str, Enum):
    ORIGINAL = "original"
    RELATION_AUGMENTED = "relation-augmented"
    ENTITY_AUGMENTED = "entity-augmented"
    ATTRIBUTE_AUGMENTED = "attribute-augmented"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class PhraseOrigin(str, Enum):
    GENERATED = "generated"
    TRAINING = "training"
    AUGMENTED = "augmented"


_WS_RE = re.compile(r"\s+")
_TERMINAL_PUNCT_RE = re.compile(r"[.!?;:,]+$")


def normalize_text(text: str) -> str:
    """Canonical text form used for dedup and freshness matching.

    Lowercase, trim, collapse internal whitespace, strip terminal punctuation.
    """
    out = _WS_RE.sub(" ", text.strip().lower())
    return _TERMINAL_PUNCT_RE.sub("", out).strip()


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned pixel box, origin top-left, exclusive of degenerate spans."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if min(self.x_min, self.y_min, self.x_max, self.y_max) < 0:
            raise CorpusError(f"negative coordinate in box {self.as_tuple()}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise CorpusError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def fits_in(self, width: int, height: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True, slots=True)
class EntityMention:
    name: str
    box: BoundingBox

    def __post_init__(self) -> None:
        normalized = normalize_text(self.name)
        if not normalized:
            raise CorpusError("entity name empty after normalization")
        object.__setattr__(self, "name", normalized)


@dataclass(frozen=True, slots=True)
class RelationalDescriptor:
    descriptor_id: str
    image_id: str
    text: str
    subject: EntityMention
    object: EntityMention
    relation: str
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError(f"descriptor {self.descriptor_id}: empty text")
        relation = self.relation.strip().lower()
        if not relation:
            raise CorpusError(f"descriptor {self.descriptor_id}: empty relation")
        object.__setattr__(self, "relation", relation)
        object.__setattr__(self, "provenance", Provenance(self.provenance))


@dataclass(frozen=True, slots=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    uri: str
    descriptors: tuple[RelationalDescriptor, ...] = ()

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise CorpusError(f"image {self.image_id}: non-positive dimensions")
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        for d in self.descriptors:
            for mention in (d.subject, d.object):
                if not mention.box.fits_in(self.width, self.height):
                    raise CorpusError(
                        f"image {self.image_id}, descriptor {d.descriptor_id}: "
                        f"box {mention.box.as_tuple()} outside "
                        f"{self.width}x{self.height}"
                    )


@dataclass(frozen=True, slots=True)
class CorpusCounters:
    images: int
    descriptors: int
    unique_relations: int
    unique_names: int


@dataclass(frozen=True, slots=True)
class Corpus:
    split: Split
    images: tuple[ImageRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "images", tuple(self.images))

    @property
    def counters(self) -> CorpusCounters:
        relations: set[str] = set()
        names: set[str] = set()
        n_desc = 0
        for image in self.images:
            for d in image.descriptors:
                n_desc += 1
                relations.add(d.relation)
                names.add(d.subject.name)
                names.add(d.object.name)
        return CorpusCounters(len(self.images), n_desc, len(relations), len(names))

    def descriptors(self) -> Iterator[RelationalDescriptor]:
        for image in self.images:
            yield from image.descriptors

    def with_images(self, images: Iterable[ImageRecord]) -> "Corpus":
        return Corpus(split=self.split, images=tuple(images))


@dataclass(frozen=True, slots=True)
class KnowledgePhrase:
    """A free-form knowledge string tied to an image region."""

    phrase_id: str
    image_id: str
    region: BoundingBox
    text: str
    origin: PhraseOrigin
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError(f"phrase {self.phrase_id}: empty text")
        origin = PhraseOrigin(self.origin)
        object.__setattr__(self, "origin", origin)
        if origin is PhraseOrigin.GENERATED:
            if self.confidence is None:
                raise CorpusError(f"phrase {self.phrase_id}: generated without confidence")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise CorpusError(f"phrase {self.phrase_id}: confidence out of [0,1]")


# --- JSONL (de)serialization ---------------------------------------------


def _box_from_json(raw: object, where: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4 or not all(isinstance(v, int) for v in raw):
        raise CorpusError(f"{where}: box must be 4 integers, got {raw!r}")
    return BoundingBox(*raw)


def _mention_from_json(raw: object, where: str) -> EntityMention:
    if not isinstance(raw, dict) or not isinstance(raw.get("name"), str):
        raise CorpusError(f"{where}: mention must be an object with a string name")
    return EntityMention(name=raw["name"], box=_box_from_json(raw.get("box"), where))


def image_from_json(raw: dict, where: str = "record") -> ImageRecord:
    for key, typ in (("image_id", str), ("width", int), ("height", int), ("uri", str)):
        if not isinstance(raw.get(key), typ):
            raise CorpusError(f"{where}: field {key!r} missing or not {typ.__name__}")
    descriptors = []
    for i, d in enumerate(raw.get("descriptors", [])):
        loc = f"{where}, descriptor[{i}]"
        if not isinstance(d, dict):
            raise CorpusError(f"{loc}: not an object")
        for key in ("id", "text", "relation", "provenance"):
            if not isinstance(d.get(key), str):
                raise CorpusError(f"{loc}: field {key!r} missing or not str")
        try:
            provenance = Provenance(d["provenance"])
        except ValueError:
            raise CorpusError(f"{loc}: unknown provenance {d['provenance']!r}") from None
        descriptors.append(
            RelationalDescriptor(
                descriptor_id=d["id"],
                image_id=raw["image_id"],
                text=d["text"],
                subject=_mention_from_json(d.get("subject"), loc),
                object=_mention_from_json(d.get("object"), loc),
                relation=d["relation"],
                provenance=provenance,
            )
        )
    return ImageRecord(
        image_id=raw["image_id"],
        width=raw["width"],
        height=raw["height"],
        uri=raw["uri"],
        descriptors=tuple(descriptors),
    )


def image_to_json(image: ImageRecord) -> dict:
    return {
        "image_id": image.image_id,
        "width": image.width,
        "height": image.height,
        "uri": image.uri,
        "descriptors": [
            {
                "id": d.descriptor_id,
                "text": d.text,
                "subject": {"name": d.subject.name, "box": list(d.subject.box.as_tuple())},
                "object": {"name": d.object.name, "box": list(d.object.box.as_tuple())},
                "relation": d.relation,
                "provenance": d.provenance.value,
            }
            for d in image.descriptors
        ],
    }


def ingest_dataset(path: str | Path, split: Split | str) -> Corpus:
    """Load and validate a JSONL corpus file.

    Malformed records raise CorpusError carrying the 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    images: list[ImageRecord] = []
    with path.open() as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc})") from None
            try:
                images.append(image_from_json(raw, where=f"line {lineno}"))
            except CorpusError as exc:
                message = str(exc)
                if f"line {lineno}" not in message:
                    message = f"line {lineno}: {message}"
                raise CorpusError(message) from None
    return Corpus(split=Split(split), images=tuple(images))


def persist_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as handle:
        for image in corpus.images:
            handle.write(json.dumps(image_to_json(image), sort_keys=True) + "\n")


def phrase_to_json(phrase: KnowledgePhrase) -> dict:
    out = {
        "phrase_id": phrase.phrase_id,
        "image_id": phrase.image_id,
        "region": list(phrase.region.as_tuple()),
        "text": phrase.text,
        "origin": phrase.origin.value,
    }
    if phrase.confidence is not None:
        out["confidence"] = phrase.confidence
    return out


def phrase_from_json(raw: dict) -> KnowledgePhrase:
    return KnowledgePhrase(
        phrase_id=raw["phrase_id"],
        image_id=raw["image_id"],
        region=_box_from_json(raw["region"], "phrase"),
        text=raw["text"],
        origin=PhraseOrigin(raw["origin"]),
        confidence=raw.get("confidence"),
    )


def load_phrases(path: str | Path) -> list[KnowledgePhrase]:
    phrases = []
    with Path(path).open() as handle:
        for line in handle:
            if line.strip():
                phrases.append(phrase_from_json(json.loads(line)))
    return phrases


def persist_phrases(phrases: Iterable[KnowledgePhrase], path: str | Path) -> None:
    with Path(path).open("w") as handle:
        for phrase in phrases:
            handle.write(json.dumps(phrase_to_json(phrase), sort_keys=True) + "\n")


# --- operations ------------------------------------------------------------


def dedup_descriptors(image: ImageRecord) -> ImageRecord:
    """Drop descriptors whose normalized text repeats; keep first occurrences."""
    seen: set[str] = set()
    kept = []
    for d in image.descriptors:
        key = normalize_text(d.text)
        if key not in seen:
            seen.add(key)
            kept.append(d)
    if len(kept) == len(image.descriptors):
        return image
    return replace(image, descriptors=tuple(kept))


def dedup_corpus(corpus: Corpus) -> Corpus:
    return corpus.with_images(dedup_descriptors(image) for image in corpus.images)


PairIndex = dict[tuple[str, str], dict[str, int]]


def index_pair_relations(corpus: Corpus) -> PairIndex:
    """Count relations between every ordered (subject, object) name pair."""
    index: PairIndex = defaultdict(Counter)
    for d in corpus.descriptors():
        index[(d.subject.name, d.object.name)][d.relation] += 1
    return {pair: dict(counts) for pair, counts in index.items()}
