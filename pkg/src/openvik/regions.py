"""Relation-centric region construction and the detector objective.

The detector learns to regress boxes that cover a subject-object interaction
rather than a single object. Its training target for a descriptor is the
union of the subject and object boxes, and its objective is the sum of a
region regression loss and a knowledge supervision loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

from .corpus import BoundingBox, ImageRecord


@dataclass(frozen=True, slots=True)
class RelationalRegion:
    descriptor_id: str
    image_id: str
    box: BoundingBox


@dataclass(frozen=True, slots=True)
class RegionProposal:
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} out of [0,1]")


class DetectorAdapter(Protocol):
    """Contract hiding the neural region detector.

    Implementations must be deterministic under a fixed seed and return
    non-negative finite losses.
    """

    def propose(self, image_uri: str) -> list[RegionProposal]: ...

    def train_step(
        self,
        image: ImageRecord,
        target_regions: list[RelationalRegion],
        target_texts: list[str],
    ) -> tuple[float, float]:
        """Returns (region regression loss, knowledge supervision loss)."""
        ...


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Smallest axis-aligned box containing both inputs."""
    return BoundingBox(
        x_min=min(a.x_min, b.x_min),
        y_min=min(a.y_min, b.y_min),
        x_max=max(a.x_max, b.x_max),
        y_max=max(a.y_max, b.y_max),
    )


def build_relational_regions(image: ImageRecord) -> list[RelationalRegion]:
    """One region per descriptor: the union of its subject and object boxes."""
    return [
        RelationalRegion(
            descriptor_id=d.descriptor_id,
            image_id=image.image_id,
            box=union_box(d.subject.box, d.object.box),
        )
        for d in image.descriptors
    ]


def detector_loss(l_rd: float, l_k: float) -> float:
    """Overall detector objective: regression loss plus knowledge loss."""
    for name, value in (("l_rd", l_rd), ("l_k", l_k)):
        if not math.isfinite(value):
            raise ValueError(f"{name} is not finite: {value}")
        if value < 0:
            raise ValueError(f"{name} is negative: {value}")
    return l_rd + l_k

def select_regions(proposals: list[RegionProposal], cap: int = 30) -> list[RegionProposal]:
    """Keep at most ``cap`` proposals, highest confidence first.

    Ties are broken by box coordinates so the selection is deterministic.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    ordered = sorted(proposals, key=lambda p: (-p.confidence, p.box.as_tuple()))
    return ordered[:cap]
