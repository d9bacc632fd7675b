"""Command-line surface: `openvik <stage> --config <path>` plus the
annotation server.

Exit codes: 0 success, 2 config error, 3 missing prerequisite, 4 adapter
failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import STAGES, ConfigError, PipelineConfig, validate_config
from .pipeline import AdapterFailure, MissingPrerequisite, run_stage

EXIT_CONFIG_ERROR = 2
EXIT_MISSING_PREREQUISITE = 3
EXIT_ADAPTER_FAILURE = 4


def _load_config(config_path: str | None, seed: int | None, out: str | None) -> PipelineConfig:
    try:
        config = validate_config(config_path) if config_path else validate_config({})
    except ConfigError as exc:
        for error in exc.errors:
            click.echo(f"config error: {error}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides.setdefault("paths", {})
    if overrides or out is not None:
        raw = {
            "seed": seed if seed is not None else config.seed,
            "split": config.split,
            "stages": config.stage_toggles,
            **config.sections,
        }
        if out is not None:
            raw["paths"] = {**config.sections["paths"], "out_dir": out}
        config = validate_config(raw)
    return config


@click.group()
def main() -> None:
    """Open visual knowledge extraction pipeline."""


def _make_stage_command(stage: str):
    @click.option("--config", "config_path", type=click.Path(exists=True), default=None)
    @click.option("--seed", type=int, default=None, help="Override the global seed.")
    @click.option("--out", type=click.Path(), default=None, help="Override the output dir.")
    def command(config_path, seed, out):
        config = _load_config(config_path, seed, out)
        if not config.stage_enabled(stage):
            click.echo(f"stage {stage!r} disabled by config; nothing to do")
            return
        try:
            artifacts = run_stage(stage, config)
        except MissingPrerequisite as exc:
            click.echo(f"missing prerequisite: {exc}", err=True)
            sys.exit(EXIT_MISSING_PREREQUISITE)
        except AdapterFailure as exc:
            click.echo(f"adapter failure: {exc}", err=True)
            sys.exit(EXIT_ADAPTER_FAILURE)
        for path in artifacts:
            click.echo(str(path))

    command.__name__ = stage.replace("-", "_")
    return main.command(name=stage)(command)


for _stage in STAGES:
    _make_stage_command(_stage)


@main.command(name="serve-annotation")
@click.option("--port", type=int, default=8711)
@click.option("--host", default="127.0.0.1")
@click.option(
    "--corpus",
    "knowledge_path",
    type=click.Path(exists=True),
    required=True,
    help="Knowledge phrases JSONL to annotate.",
)
@click.option("--log", "log_path", type=click.Path(), default=None, help="Ratings audit log.")
def serve_annotation(port, host, knowledge_path, log_path):
    """Serve the annotation HTTP API consumed by the rating UI."""
    import uvicorn

    from .annotation import AnnotationStore, create_app
    from .corpus import load_phrases

    phrases = load_phrases(knowledge_path)
    store = AnnotationStore.from_phrases(phrases, log_path=log_path)
    uvicorn.run(create_app(store), host=host, port=port)


if __name__ == "__main__":
    main()
