"""Stage orchestration: artifact production, manifests, atomic writes.

Each stage reads its prerequisite artifacts from the output directory,
writes its own artifacts atomically, and records a manifest with input
hashes, the config hash, and the seed so reruns are verifiable.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import PipelineConfig
from .corpus import (
    Corpus,
    dedup_corpus,
    ingest_dataset,
    index_pair_relations,
    load_phrases,
    persist_corpus,
    persist_phrases,
)
from .diversify import DropConfig, enhance
from .enrich import VerbLists, enrich_caption
from .generator import (
    DecodingConfig,
    VarietyConfig,
    extract_knowledge,
    generator_loss,
    variety_loss,
)
from .kgbridge import (
    CassetteLlmClient,
    Triplet,
    build_llm_prompt,
    map_to_kg,
    overlap_report,
    overlap_report_to_json,
    parse_triplet,
)
from .metrics import load_ratings, quality_report
from .mocks import (
    HashingEmbedder,
    KgEdge,
    MockCommonsense,
    MockDetectorAdapter,
    MockGeneratorAdapter,
    MockKnowledgeSource,
)
from .regions import build_relational_regions, detector_loss


class MissingPrerequisite(FileNotFoundError):
    def __init__(self, path: Path, producing_stage: str):
        self.producing_stage = producing_stage
        super().__init__(
            f"missing {path}; run the {producing_stage!r} stage first"
        )


class AdapterFailure(RuntimeError):
    pass


@dataclass
class StageAdapters:
    """Adapter bundle used by the stages; mocks by default, all injectable."""

    detector: object = None
    generator: object = None
    embedder: object = None
    kg: object = None
    commonsense: object = None

    @classmethod
    def mocks(cls, seed: int) -> "StageAdapters":
        kg = MockKnowledgeSource(
            edges_by_node={
                "boat": [KgEdge("rest-on", "water", 2.0), KgEdge("sail-on", "sea", 0.5)],
                "plane": [KgEdge("similar-to", "jet", 2.0)],
                "people": [KgEdge("walk-on", "ground", 1.5)],
            },
            relatedness_table={frozenset({"plane", "jet"}): 0.9},
        )
        commonsense = MockCommonsense(
            completions={}
        )
        return cls(
            detector=MockDetectorAdapter(seed=seed),
            generator=MockGeneratorAdapter(seed=seed),
            embedder=HashingEmbedder(),
            kg=kg,
            commonsense=commonsense,
        )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(
    stage: str, config: PipelineConfig, out_dir: Path, inputs: list[Path], outputs: list[Path]
) -> Path:
    manifest = {
        "stage": stage,
        "seed": config.seed,
        "config_sha256": hashlib.sha256(config.canonical_json().encode()).hexdigest(),
        "inputs": {str(p): _sha256(p) for p in sorted(inputs)},
        "outputs": {str(p): _sha256(p) for p in sorted(outputs)},
        "versions": {"openvik": __version__},
    }
    path = out_dir / f"manifest_{stage}.json"
    atomic_write(path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def _require(path: Path, producing_stage: str) -> Path:
    if not path.exists():
        raise MissingPrerequisite(path, producing_stage)
    return path


def _out_dir(config: PipelineConfig) -> Path:
    return Path(config["paths"]["out_dir"])


def _load_stage_corpus(path: Path, config: PipelineConfig) -> Corpus:
    return ingest_dataset(path, config.split)


def run_stage(
    name: str, config: PipelineConfig, adapters: StageAdapters | None = None
) -> list[Path]:
    """Run one stage; returns the artifact paths it produced (manifest last)."""
    if adapters is None:
        adapters = StageAdapters.mocks(config.seed)
    out_dir = _out_dir(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = _STAGES.get(name)
    if runner is None:
        raise ValueError(f"unknown stage {name!r}; known: {sorted(_STAGES)}")
    return runner(config, adapters, out_dir)


def _stage_ingest(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    source = Path(config["paths"]["corpus"])
    _require(source, "ingest (needs paths.corpus pointing at a dataset file)")
    corpus = ingest_dataset(source, config.split)
    target = out_dir / "corpus.jsonl"
    persist_corpus(corpus, target)
    counters = corpus.counters
    stats = {
        "images": counters.images,
        "descriptors": counters.descriptors,
        "unique_relations": counters.unique_relations,
        "unique_names": counters.unique_names,
    }
    stats_path = out_dir / "corpus_stats.json"
    atomic_write(stats_path, json.dumps(stats, sort_keys=True, indent=2) + "\n")
    manifest = _write_manifest("ingest", config, out_dir, [source], [target, stats_path])
    return [target, stats_path, manifest]


def _stage_enhance(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    source = _require(out_dir / "corpus.jsonl", "ingest")
    corpus = _load_stage_corpus(source, config)
    section = config["enhance"]
    enhanced, report = enhance(
        corpus,
        kg=adapters.kg,
        commonsense=adapters.commonsense,
        drop_config=DropConfig(
            low_threshold=section["low_threshold"],
            drop_rate=section["drop_rate"],
            target_fraction=section["target_fraction"],
            seed=config.seed,
            max_passes=section["max_passes"],
        ),
        high_threshold=section["high_threshold"],
        relatedness_threshold=section["relatedness_threshold"],
    )
    target = out_dir / "enhanced.jsonl"
    persist_corpus(enhanced, target)
    report_path = out_dir / "enhancement_report.json"
    atomic_write(report_path, json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    manifest = _write_manifest("enhance", config, out_dir, [source], [target, report_path])
    return [target, report_path, manifest]


def _training_corpus(config: PipelineConfig, out_dir: Path) -> tuple[Path, Corpus]:
    enhanced = out_dir / "enhanced.jsonl"
    if enhanced.exists():
        return enhanced, _load_stage_corpus(enhanced, config)
    source = _require(out_dir / "corpus.jsonl", "ingest")
    return source, _load_stage_corpus(source, config)


def _stage_train_detector(
    config: PipelineConfig, adapters: StageAdapters, out_dir: Path
) -> list[Path]:
    source, corpus = _training_corpus(config, out_dir)
    epochs = config["detector"]["epochs"]
    losses = []
    for _ in range(epochs):
        epoch_losses = []
        for image in corpus.images:
            regions = build_relational_regions(image)
            texts = [d.text for d in image.descriptors]
            try:
                l_rd, l_k = adapters.detector.train_step(image, regions, texts)
            except Exception as exc:
                raise AdapterFailure(f"detector train_step failed: {exc}") from exc
            epoch_losses.append(detector_loss(l_rd, l_k))
        losses.append(sum(epoch_losses) / len(epoch_losses) if epoch_losses else 0.0)
    target = out_dir / "detector_losses.json"
    atomic_write(target, json.dumps({"epoch_losses": losses}, indent=2) + "\n")
    manifest = _write_manifest("train-detector", config, out_dir, [source], [target])
    return [target, manifest]


def _stage_train_generator(
    config: PipelineConfig, adapters: StageAdapters, out_dir: Path
) -> list[Path]:
    source, corpus = _training_corpus(config, out_dir)
    section = config["generator"]
    variety_config = VarietyConfig(phi=section["phi"], alpha=section["alpha"])
    epochs = section["epochs"]
    losses = []
    for _ in range(epochs):
        epoch_losses = []
        for image in corpus.images:
            texts = [d.text for d in image.descriptors]
            if not texts:
                continue
            l_v = variety_loss(texts, adapters.embedder, variety_config)
            # pseudo MLE from the mock generator over the full-image prompt
            from .generator import build_mask_prompt

            mask = build_mask_prompt(
                _full_box(image), image.width, image.height, section["patch_size"]
            )
            try:
                l_mle = sum(
                    adapters.generator.mle_loss(image.uri, mask, t) for t in texts
                ) / len(texts)
            except Exception as exc:
                raise AdapterFailure(f"generator mle_loss failed: {exc}") from exc
            epoch_losses.append(generator_loss(l_mle, l_v, section["alpha"]))
        losses.append(sum(epoch_losses) / len(epoch_losses) if epoch_losses else 0.0)
    target = out_dir / "generator_losses.json"
    atomic_write(target, json.dumps({"epoch_losses": losses}, indent=2) + "\n")
    manifest = _write_manifest("train-generator", config, out_dir, [source], [target])
    return [target, manifest]


def _full_box(image):
    from .corpus import BoundingBox

    return BoundingBox(0, 0, image.width, image.height)


def _stage_extract(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    source, corpus = _training_corpus(config, out_dir)
    decoding = DecodingConfig(**config["decoding"])
    phrases = []
    failures = []
    for image in corpus.images:
        result = extract_knowledge(
            image,
            adapters.detector,
            adapters.generator,
            decoding=decoding,
            patch_size=config["generator"]["patch_size"],
            max_regions=config["detector"]["max_regions"],
        )
        phrases.extend(result.phrases)
        failures.extend(result.failures)
    target = out_dir / "knowledge.jsonl"
    persist_phrases(phrases, target)
    failures_path = out_dir / "extract_failures.json"
    atomic_write(
        failures_path,
        json.dumps(
            [
                {"image_id": f.image_id, "region": list(f.region.as_tuple()), "error": f.error}
                for f in failures
            ],
            indent=2,
        )
        + "\n",
    )
    manifest = _write_manifest("extract", config, out_dir, [source], [target, failures_path])
    return [target, failures_path, manifest]


def _stage_evaluate(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    knowledge_path = _require(out_dir / "knowledge.jsonl", "extract")
    corpus_path = _require(out_dir / "corpus.jsonl", "ingest")
    corpus = _load_stage_corpus(corpus_path, config)
    generated = [p.text for p in load_phrases(knowledge_path)]
    training = [d.text for d in corpus.descriptors()]
    ratings_path = config["paths"]["ratings"]
    ratings = load_ratings(ratings_path) if ratings_path and Path(ratings_path).exists() else []
    inputs = [knowledge_path, corpus_path]
    if ratings:
        inputs.append(Path(ratings_path))
    report = quality_report(generated, training, ratings, adapters.embedder)
    target = out_dir / "quality_report.json"
    atomic_write(target, json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    manifest = _write_manifest("evaluate", config, out_dir, inputs, [target])
    return [target, manifest]


def _stage_compare_kg(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    knowledge_path = _require(out_dir / "knowledge.jsonl", "extract")
    cassette_path = Path(config["paths"]["cassette"] or "")
    if not config["paths"]["cassette"]:
        raise MissingPrerequisite(
            Path("<paths.cassette>"), "configuration (set paths.cassette)"
        )
    _require(cassette_path, "cassette recording (provide the LLM cassette file)")
    phrases = load_phrases(knowledge_path)
    visual = []
    subjects, objects = [], []
    for phrase in phrases:
        parsed = parse_triplet(phrase.text, phrase_id=phrase.phrase_id)
        if parsed is None:
            continue
        visual.append(parsed.triplet)
        if parsed.triplet.subject not in subjects:
            subjects.append(parsed.triplet.subject)
        if parsed.triplet.object not in objects:
            objects.append(parsed.triplet.object)
    threshold = config["mapping"]["threshold"]
    kg_matched = []
    for triplet in visual:
        try:
            result = map_to_kg(triplet, adapters.kg, adapters.embedder, threshold)
        except Exception as exc:
            raise AdapterFailure(f"kg mapping failed: {exc}") from exc
        if result.matched:
            kg_matched.append(triplet)
    llm_triplets: list[Triplet] = []
    if subjects and objects:
        client = CassetteLlmClient(cassette_path)
        try:
            responses = client.complete(build_llm_prompt(subjects, objects))
        except KeyError as exc:
            raise AdapterFailure(str(exc)) from exc
        for text in responses:
            parsed = parse_triplet(text)
            if parsed is not None:
                llm_triplets.append(parsed.triplet)
    report = overlap_report(visual, kg_matched, llm_triplets, adapters.embedder, threshold)
    target = out_dir / "overlap_report.json"
    atomic_write(
        target, json.dumps(overlap_report_to_json(report), sort_keys=True, indent=2) + "\n"
    )
    manifest = _write_manifest(
        "compare-kg", config, out_dir, [knowledge_path, cassette_path], [target]
    )
    return [target, manifest]


def _stage_enrich(config: PipelineConfig, adapters: StageAdapters, out_dir: Path) -> list[Path]:
    corpus_path = _require(out_dir / "corpus.jsonl", "ingest")
    queries_path = Path(config["paths"]["queries"] or "")
    if not config["paths"]["queries"]:
        raise MissingPrerequisite(Path("<paths.queries>"), "configuration (set paths.queries)")
    _require(queries_path, "query preparation (provide the queries JSONL)")
    corpus = _load_stage_corpus(corpus_path, config)
    pair_index = index_pair_relations(corpus)
    min_share = config["enrichment"]["min_share"]
    lines = []
    with queries_path.open() as handle:
        for line in handle:
            if not line.strip():
                continue
            query = json.loads(line)
            enriched = enrich_caption(query["caption"], pair_index, corpus, min_share)
            appended = []
            if enriched != query["caption"]:
                appended = enriched[len(query["caption"]) :].lstrip(". ").split(". ")
            lines.append(
                json.dumps(
                    {
                        "query_id": query["query_id"],
                        "original": query["caption"],
                        "enriched": enriched,
                        "appended": appended,
                    },
                    sort_keys=True,
                )
            )
    target = out_dir / "enriched_queries.jsonl"
    atomic_write(target, "\n".join(lines) + ("\n" if lines else ""))
    manifest = _write_manifest(
        "enrich", config, out_dir, [corpus_path, queries_path], [target]
    )
    return [target, manifest]


_STAGES = {
    "ingest": _stage_ingest,
    "enhance": _stage_enhance,
    "train-detector": _stage_train_detector,
    "train-generator": _stage_train_generator,
    "extract": _stage_extract,
    "evaluate": _stage_evaluate,
    "compare-kg": _stage_compare_kg,
    "enrich": _stage_enrich,
}
