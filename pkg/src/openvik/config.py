"""Pipeline configuration: schema, validation, and environment overrides.

The config is a single YAML document. Validation collects every error
instead of stopping at the first, and rejects unknown keys. Environment
variables named OPENVIK_<SECTION>_<KEY> override file values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

STAGES = (
    "ingest",
    "enhance",
    "train-detector",
    "train-generator",
    "extract",
    "evaluate",
    "compare-kg",
    "enrich",
)


def _in_range(lo, hi, lo_open=False, hi_open=False) -> Callable[[Any], bool]:
    def check(v):
        if lo_open and v <= lo:
            return False
        if not lo_open and v < lo:
            return False
        if hi_open and v >= hi:
            return False
        if not hi_open and v > hi:
            return False
        return True

    return check


def _positive(v) -> bool:
    return v > 0


# section -> key -> (python type, default, validator or allowed set, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "paths": {
        "corpus": (str, "", None),
        "out_dir": (str, "out", None),
        "cassette": (str, "", None),
        "verbs_exact": (str, "", None),
        "verbs_fuzzy": (str, "", None),
        "ratings": (str, "", None),
        "queries": (str, "", None),
    },
    "detector": {
        "batch_size": (int, 4, _positive),
        "optimizer": (str, "adaptive-moment", {"adaptive-moment"}),
        "epsilon": (float, 1e-8, _positive),
        "initial_lr": (float, 1e-5, _positive),
        "schedule": (str, "cosine", {"cosine", "constant"}),
        "weight_decay": (float, 0.05, _in_range(0.0, 1.0)),
        "epochs": (int, 20, _positive),
        "max_regions": (int, 30, _positive),
    },
    "generator": {
        "batch_size": (int, 4, _positive),
        "epsilon": (float, 1e-8, _positive),
        "initial_lr": (float, 1e-5, _positive),
        "schedule": (str, "cosine", {"cosine", "constant"}),
        "weight_decay": (float, 0.05, _in_range(0.0, 1.0)),
        "epochs": (int, 20, _positive),
        "alpha": (float, 0.7, _in_range(0.0, 1.0)),
        "phi": (float, 0.01, _in_range(0.0, 1.0, lo_open=True, hi_open=True)),
        "patch_size": (int, 16, _positive),
    },
    "decoding": {
        "strategy": (str, "contrastive", {"contrastive", "beam", "nucleus"}),
        "width": (int, 5, _positive),
        "penalty": (float, 0.6, _in_range(0.0, 1.0)),
    },
    "enhance": {
        "low_threshold": (float, 0.4, _in_range(0.0, 1.0)),
        "drop_rate": (float, 0.5, _in_range(0.0, 1.0)),
        "target_fraction": (float, 0.6, _in_range(0.0, 1.0, lo_open=True)),
        "high_threshold": (float, 0.6, _in_range(0.0, 1.0)),
        "relatedness_threshold": (float, 0.85, _in_range(0.0, 1.0)),
        "max_passes": (int, 50, _positive),
    },
    "mapping": {
        "threshold": (float, 0.75, _in_range(0.0, 1.0, lo_open=True)),
    },
    "enrichment": {
        "min_share": (float, 0.3, _in_range(0.0, 1.0, lo_open=True, hi_open=True)),
    },
}

ENV_PREFIX = "OPENVIK_"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    split: str
    sections: dict[str, dict[str, Any]]
    stage_toggles: dict[str, bool] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def stage_enabled(self, stage: str) -> bool:
        return self.stage_toggles.get(stage, True)

    def canonical_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "split": self.split,
                "sections": self.sections,
                "stages": self.stage_toggles,
            },
            sort_keys=True,
        )


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


def _coerce(value: Any, typ: type) -> Any:
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str) and typ is not str:
        # environment overrides arrive as strings
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
    return value


def _apply_env(raw: dict) -> dict:
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :].lower()
        if rest == "seed":
            raw["seed"] = value
            continue
        if "_" not in rest:
            continue
        section, key = rest.split("_", 1)
        if section in SCHEMA and key in SCHEMA[section]:
            raw.setdefault(section, {})[key] = value
    return raw


def validate_config(source: str | Path | dict) -> PipelineConfig:
    """Validate a config document; raises ConfigError listing every problem."""
    if isinstance(source, dict):
        raw: Any = dict(source)
    else:
        raw = yaml.safe_load(Path(source).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a mapping"])
    raw = _apply_env(raw)
    errors: list[str] = []
    known_top = {"seed", "split", "stages", *SCHEMA}
    for key in raw:
        if key not in known_top:
            errors.append(f"unknown top-level key {key!r}")

    seed = raw.get("seed", 0)
    try:
        seed = int(seed)
        if seed < 0:
            errors.append(f"seed must be >= 0, got {seed}")
    except (TypeError, ValueError):
        errors.append(f"seed must be an integer, got {seed!r}")
        seed = 0

    split = raw.get("split", "train")
    if split not in ("train", "validation", "test"):
        errors.append(f"split must be train/validation/test, got {split!r}")

    toggles = raw.get("stages", {})
    if not isinstance(toggles, dict):
        errors.append("stages must be a mapping of stage name to bool")
        toggles = {}
    else:
        for stage, enabled in toggles.items():
            if stage not in STAGES:
                errors.append(f"stages: unknown stage {stage!r}")
            if not isinstance(enabled, bool):
                errors.append(f"stages.{stage}: must be a bool")

    sections: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            errors.append(f"section {section!r} must be a mapping")
            given = {}
        for key in given:
            if key not in keys:
                errors.append(f"{section}.{key}: unknown key")
        values: dict[str, Any] = {}
        for key, (typ, default, validator) in keys.items():
            value = given.get(key, default)
            try:
                value = _coerce(value, typ)
            except ValueError:
                errors.append(f"{section}.{key}: cannot parse {value!r} as {typ.__name__}")
                value = default
            if not isinstance(value, typ) or isinstance(value, bool):
                errors.append(
                    f"{section}.{key}: expected {typ.__name__}, got {type(value).__name__}"
                )
                value = default
            elif isinstance(validator, (set, frozenset)):
                if value not in validator:
                    errors.append(
                        f"{section}.{key}: {value!r} not one of {sorted(validator)}"
                    )
            elif validator is not None and not validator(value):
                errors.append(f"{section}.{key}: {value!r} out of range")
            values[key] = value
        sections[section] = values

    if errors:
        raise ConfigError(errors)
    return PipelineConfig(
        seed=seed, split=split, sections=sections, stage_toggles=dict(toggles)
    )


def default_config() -> PipelineConfig:
    return validate_config({})
