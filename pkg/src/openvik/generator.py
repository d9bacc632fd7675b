"""Knowledge generator loss stack, mask prompting, and extraction.

The generator is trained with a weighted sum of the language-modeling loss
and an inter-sequence variety regularizer that penalizes pairs of generated
phrases whose semantic cosine similarity exceeds a small margin. At
inference, detected regions are turned into binary patch masks that prompt
the generator toward the relational foreground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Protocol, Sequence

import numpy as np

from .corpus import BoundingBox, ImageRecord, KnowledgePhrase, PhraseOrigin
from .regions import DetectorAdapter, select_regions


class SimilarityAdapter(Protocol):
    """Deterministic text embedder producing unit-norm vectors."""

    def embed(self, text: str) -> np.ndarray: ...


class GeneratorAdapter(Protocol):
    """Contract hiding the vision encoder / text decoder pair."""

    def mle_loss(self, image_uri: str, mask: "MaskPrompt", target_text: str) -> float: ...

    def generate(
        self, image_uri: str, mask: "MaskPrompt", decoding: "DecodingConfig"
    ) -> tuple[str, float]: ...

    def token_logprob(self, image_uri: str, mask: "MaskPrompt", text: str) -> float: ...


@dataclass(frozen=True, slots=True)
class MaskPrompt:
    """Binary patch-resolution mask over an image."""

    grid: np.ndarray  # 2-D uint8, entries in {0, 1}
    patch_size: int
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        expected = (
            math.ceil(self.image_height / self.patch_size),
            math.ceil(self.image_width / self.patch_size),
        )
        if self.grid.shape != expected:
            raise ValueError(f"grid shape {self.grid.shape} != expected {expected}")
        if not np.isin(self.grid, (0, 1)).all():
            raise ValueError("mask grid entries must be 0 or 1")


PAIR_MODE_MEAN = "all-unordered-pairs"
PAIR_MODE_SUM_OVER_N = "sum-over-n"


@dataclass(frozen=True, slots=True)
class VarietyConfig:
    phi: float = 0.01
    alpha: float = 0.7
    pair_mode: str = PAIR_MODE_MEAN

    def __post_init__(self) -> None:
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi must be in (0,1), got {self.phi}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.pair_mode not in (PAIR_MODE_MEAN, PAIR_MODE_SUM_OVER_N):
            raise ValueError(f"unknown pair_mode {self.pair_mode!r}")


@dataclass(frozen=True, slots=True)
class DecodingConfig:
    strategy: str = "contrastive"
    width: int = 5
    penalty: float = 0.6


def pair_similarity(a: str, b: str, adapter: SimilarityAdapter) -> float:
    """Cosine similarity between the unit embeddings of two texts."""
    if not a.strip() or not b.strip():
        raise ValueError("pair_similarity requires non-empty texts")
    return float(np.dot(adapter.embed(a), adapter.embed(b)))


def variety_penalty(s: float, phi: float) -> float:
    """Amplifying penalty for a similar pair: ReLU(-log(1 - (s - phi)))."""
    inner = 1.0 - (s - phi)
    if inner <= 0.0:
        raise ValueError(f"similarity {s} out of domain for phi={phi}")
    return max(0.0, -math.log(inner))


def variety_loss(
    phrases: Sequence[str],
    adapter: SimilarityAdapter,
    config: VarietyConfig = VarietyConfig(),
) -> float:
    """Inter-sequence variety regularizer over phrase pairs of one image.

    Defaults to the mean over all unordered pairs; ``sum-over-n`` divides the
    pair sum by the phrase count instead.
    """
    n = len(phrases)
    if n < 2:
        return 0.0
    total = sum(
        variety_penalty(pair_similarity(a, b, adapter), config.phi)
        for a, b in combinations(phrases, 2)
    )
    if config.pair_mode == PAIR_MODE_SUM_OVER_N:
        return total / n
    return total / (n * (n - 1) / 2)


def generator_loss(l_mle: float, l_v: float, alpha: float = 0.7) -> float:
    """Overall generator objective: alpha * MLE + (1 - alpha) * variety."""
    for name, value in (("l_mle", l_mle), ("l_v", l_v)):
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"{name} must be finite and non-negative, got {value}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    return alpha * l_mle + (1.0 - alpha) * l_v


def build_mask_prompt(
    region: BoundingBox, image_width: int, image_height: int, patch_size: int
) -> MaskPrompt:
    """Binary patch grid: 1 iff the patch overlaps the region with positive area."""
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if not region.fits_in(image_width, image_height):
        raise ValueError(
            f"region {region.as_tuple()} outside image {image_width}x{image_height}"
        )
    rows = math.ceil(image_height / patch_size)
    cols = math.ceil(image_width / patch_size)
    grid = np.zeros((rows, cols), dtype=np.uint8)
    row_lo = region.y_min // patch_size
    row_hi = (region.y_max - 1) // patch_size
    col_lo = region.x_min // patch_size
    col_hi = (region.x_max - 1) // patch_size
    grid[row_lo : row_hi + 1, col_lo : col_hi + 1] = 1
    return MaskPrompt(
        grid=grid,
        patch_size=patch_size,
        image_width=image_width,
        image_height=image_height,
    )


@dataclass(frozen=True, slots=True)
class ExtractionFailure:
    image_id: str
    region: BoundingBox
    error: str


@dataclass(slots=True)
class ExtractionResult:
    phrases: list[KnowledgePhrase] = field(default_factory=list)
    failures: list[ExtractionFailure] = field(default_factory=list)


def extract_knowledge(
    image: ImageRecord,
    detector: DetectorAdapter,
    generator: GeneratorAdapter,
    decoding: DecodingConfig = DecodingConfig(),
    patch_size: int = 16,
    max_regions: int = 30,
) -> ExtractionResult:
    """Detect relational regions and generate one knowledge phrase per region.

    Per-region adapter failures are collected; successful regions still yield
    phrases.
    """
    result = ExtractionResult()
    proposals = select_regions(detector.propose(image.uri), cap=max_regions)
    for index, proposal in enumerate(proposals):
        try:
            mask = build_mask_prompt(proposal.box, image.width, image.height, patch_size)
            text, confidence = generator.generate(image.uri, mask, decoding)
            result.phrases.append(
                KnowledgePhrase(
                    phrase_id=f"{image.image_id}#g{index}",
                    image_id=image.image_id,
                    region=proposal.box,
                    text=text,
                    origin=PhraseOrigin.GENERATED,
                    confidence=confidence,
                )
            )
        except Exception as exc:  # noqa: BLE001 - partial results by contract
            result.failures.append(
                ExtractionFailure(image.image_id, proposal.box, str(exc))
            )
    return result
