import random

import pytest

from openvik.corpus import (
    BoundingBox,
    Corpus,
    EntityMention,
    ImageRecord,
    Provenance,
    RelationalDescriptor,
    Split,
)
from openvik.mocks import HashingEmbedder, OrthogonalEmbedder


def make_descriptor(
    descriptor_id,
    image_id,
    text,
    subject="thing",
    obj="place",
    relation="on",
    sbox=(0, 0, 10, 10),
    obox=(5, 5, 20, 20),
    provenance=Provenance.ORIGINAL,
):
    return RelationalDescriptor(
        descriptor_id=descriptor_id,
        image_id=image_id,
        text=text,
        subject=EntityMention(subject, BoundingBox(*sbox)),
        object=EntityMention(obj, BoundingBox(*obox)),
        relation=relation,
        provenance=provenance,
    )


def make_image(image_id, descriptors, width=224, height=224, uri=None):
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        uri=uri or f"img://{image_id}",
        descriptors=tuple(descriptors),
    )


def make_corpus(images, split=Split.TRAIN):
    return Corpus(split=split, images=tuple(images))


@pytest.fixture
def fixture_corpus():
    """3 images, 7 descriptors: known counters and pair structure."""
    d = make_descriptor
    images = [
        make_image(
            "img1",
            [
                d("i1d1", "img1", "boat on water", "boat", "water", "on"),
                d("i1d2", "img1", "large boat docked at pier", "boat", "pier", "docked at"),
                d("i1d3", "img1", "bird above water", "bird", "water", "above"),
            ],
        ),
        make_image(
            "img2",
            [
                d("i2d1", "img2", "people on ground", "people", "ground", "on"),
                d("i2d2", "img2", "people sitting on bench", "people", "bench", "sitting on"),
            ],
        ),
        make_image(
            "img3",
            [
                d("i3d1", "img3", "plane in sky", "plane", "sky", "in"),
                d("i3d2", "img3", "cloud near plane", "cloud", "plane", "near"),
            ],
        ),
    ]
    return make_corpus(images)


def synthetic_biased_corpus(n_descriptors=1000, low_fraction=0.7, seed=7):
    """Corpus dominated by a few frequent relations; used for drop tests."""
    rng = random.Random(seed)
    common = [("people", "on", "ground"), ("man", "in", "room"), ("cup", "on", "table")]
    rare_relations = [
        "docked at", "soaring over", "adorning", "resting beside", "chasing",
        "leaning against", "balancing on", "sheltering under", "gliding past",
        "sprouting from",
    ]
    images = []
    per_image = 10
    idx = 0
    for image_num in range(n_descriptors // per_image):
        descriptors = []
        for _ in range(per_image):
            if rng.random() < low_fraction:
                s, r, o = common[rng.randrange(len(common))]
            else:
                r = rare_relations[rng.randrange(len(rare_relations))]
                s, o = f"ent{rng.randrange(40)}", f"obj{rng.randrange(40)}"
            descriptors.append(
                make_descriptor(
                    f"d{idx}", f"img{image_num}", f"{s} {r} {o} #{idx}", s, o, r
                )
            )
            idx += 1
        images.append(make_image(f"img{image_num}", descriptors))
    return make_corpus(images)


@pytest.fixture
def hash_embedder():
    return HashingEmbedder()


@pytest.fixture
def ortho_embedder():
    return OrthogonalEmbedder()
