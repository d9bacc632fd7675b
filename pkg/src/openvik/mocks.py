"""Deterministic mock adapters for hermetic tests and desk-scale runs.

Every adapter here is seed-stable: identical inputs always produce identical
outputs, with no network or model weights involved.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import BoundingBox, ImageRecord
from .generator import DecodingConfig, MaskPrompt
from .regions import RegionProposal, RelationalRegion, union_box


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.md5(text.encode()).digest()[:8], "big")


class HashingEmbedder:
    """Token n-gram hashing embedder, L2-normalized.

    Identical texts embed identically; token-disjoint texts are (near)
    orthogonal. Serves as the SimilarityAdapter in tests.
    """

    def __init__(self, dim: int = 256, ngram: int = 2):
        self.dim = dim
        self.ngram = ngram

    def embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        vec = np.zeros(self.dim)
        grams = list(tokens)
        for n in range(2, self.ngram + 1):
            grams.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
        for gram in grams:
            vec[_stable_hash(gram) % self.dim] += 1.0
        norm = np.linalg.norm(vec)
        if norm == 0:
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class OrthogonalEmbedder:
    """Maps each distinct text to its own basis vector: cosine is 1 or 0."""

    def __init__(self, dim: int = 4096):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        vec[_stable_hash(text) % self.dim] = 1.0
        return vec


class FixedSimilarityAdapter:
    """Returns preset cosine values for known pairs; embeds via 2-D rotation.

    pairs maps frozenset({a, b}) -> cosine. Unknown pairs fall back to 0.
    Only usable through pair_similarity-style dot products when both texts
    are registered against a common anchor; intended for table-driven tests.
    """

    def __init__(self, pairs: dict[frozenset, float]):
        self._pairs = pairs

    def similarity(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self._pairs.get(frozenset({a, b}), 0.0)


@dataclass
class MockDetectorAdapter:
    """Table-driven detector: proposals per image URI, analytic losses.

    When a URI is missing from the table, proposals are synthesized from a
    seeded RNG keyed on the URI so every image yields deterministic output.
    """

    proposals_by_uri: dict[str, list[RegionProposal]] = field(default_factory=dict)
    seed: int = 0
    synth_count: int = 5
    synth_extent: int = 224

    def propose(self, image_uri: str) -> list[RegionProposal]:
        if image_uri in self.proposals_by_uri:
            return list(self.proposals_by_uri[image_uri])
        rng = random.Random((self.seed, image_uri).__str__())
        out = []
        for _ in range(self.synth_count):
            x0 = rng.randrange(0, self.synth_extent - 2)
            y0 = rng.randrange(0, self.synth_extent - 2)
            x1 = rng.randrange(x0 + 1, self.synth_extent)
            y1 = rng.randrange(y0 + 1, self.synth_extent)
            out.append(RegionProposal(BoundingBox(x0, y0, x1, y1), round(rng.random(), 6)))
        return out

    def train_step(
        self,
        image: ImageRecord,
        target_regions: list[RelationalRegion],
        target_texts: list[str],
    ) -> tuple[float, float]:
        # Analytic pseudo-losses: box spread for regression, mean text length
        # for knowledge supervision. Deterministic and non-negative.
        if not target_regions:
            return (0.0, 0.0)
        covering = target_regions[0].box
        for region in target_regions[1:]:
            covering = union_box(covering, region.box)
        image_area = image.width * image.height
        l_rd = 1.0 - covering.area() / image_area
        l_k = sum(math.log1p(len(t.split())) for t in target_texts) / len(target_texts)
        return (max(0.0, l_rd), l_k)


_PHRASE_BANK = [
    "large boat docked at pier",
    "flying jet leaving behind smoke",
    "people shopping at market",
    "three layer cake on table",
    "red sticker on fence",
    "baby elephants walking around wood",
    "striped cat sleeping on warm chair",
    "blue post attached to wall",
    "old woman sitting on bench",
    "dog chasing the man",
]


@dataclass
class MockGeneratorAdapter:
    """Table-driven generator with deterministic hash fallback."""

    texts_by_key: dict[tuple[str, tuple[int, int, int, int]], str] = field(
        default_factory=dict
    )
    seed: int = 0

    def _mask_key(self, image_uri: str, mask: MaskPrompt) -> int:
        payload = f"{self.seed}|{image_uri}|{mask.patch_size}|" + mask.grid.tobytes().hex()
        return _stable_hash(payload)

    def generate(
        self, image_uri: str, mask: MaskPrompt, decoding: DecodingConfig
    ) -> tuple[str, float]:
        key = self._mask_key(image_uri, mask)
        text = _PHRASE_BANK[key % len(_PHRASE_BANK)]
        confidence = (key % 10_000) / 10_000
        return text, confidence

    def mle_loss(self, image_uri: str, mask: MaskPrompt, target_text: str) -> float:
        key = self._mask_key(image_uri, mask) ^ _stable_hash(target_text)
        return 0.5 + (key % 1000) / 1000

    def token_logprob(self, image_uri: str, mask: MaskPrompt, text: str) -> float:
        key = self._mask_key(image_uri, mask) ^ _stable_hash(text)
        return -((key % 5000) / 1000) - 0.1


class FailingGeneratorAdapter(MockGeneratorAdapter):
    """Fails on every Nth region; used to exercise partial-result handling."""

    def __init__(self, fail_every: int = 2):
        super().__init__()
        self.fail_every = fail_every
        self._calls = 0

    def generate(self, image_uri, mask, decoding):
        self._calls += 1
        if self._calls % self.fail_every == 0:
            raise RuntimeError("mock generator failure")
        return super().generate(image_uri, mask, decoding)


@dataclass(frozen=True)
class KgEdge:
    rel: str
    target: str
    weight: float


@dataclass
class MockKnowledgeSource:
    """In-memory ConceptNet-like graph.

    edges_by_node maps a node name to its outgoing edges; relatedness_table
    maps unordered name pairs to a [0,1] score (default 0 for unknown pairs,
    1 for identical names).
    """

    edges_by_node: dict[str, list[KgEdge]] = field(default_factory=dict)
    relatedness_table: dict[frozenset, float] = field(default_factory=dict)

    def has_node(self, name: str) -> bool:
        name = name.lower()
        if name in self.edges_by_node:
            return True
        return any(
            edge.target == name for edges in self.edges_by_node.values() for edge in edges
        )

    def edges(self, node: str) -> list[KgEdge]:
        return list(self.edges_by_node.get(node.lower(), []))

    def relatedness(self, a: str, b: str) -> float:
        a, b = a.lower(), b.lower()
        if a == b:
            return 1.0
        return self.relatedness_table.get(frozenset({a, b}), 0.0)


@dataclass
class MockCommonsense:
    """Table-driven COMET-like adapter with attribute/effect branches."""

    completions: dict[tuple[str, str], list[str]] = field(default_factory=dict)

    def complete(self, text: str, branch: str) -> list[str]:
        if branch not in ("attribute", "effect"):
            raise ValueError(f"unknown branch {branch!r}")
        return list(self.completions.get((text, branch), []))


@dataclass
class MockMatchAdapter:
    """Deterministic image-text match scorer (pseudo log-probabilities)."""

    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    offset: float = 0.0

    def score(self, image_uri: str, text: str) -> float:
        if (image_uri, text) in self.scores:
            return self.scores[(image_uri, text)] + self.offset
        key = _stable_hash(f"{image_uri}::{text}")
        return -((key % 8000) / 1000) - 0.05 + self.offset
