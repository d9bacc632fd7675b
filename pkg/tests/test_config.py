import pytest

from openvik.config import (
    STAGES,
    ConfigError,
    default_config,
    validate_config,
)


class TestDefaults:
    def test_detector_defaults(self):
        config = default_config()
        det = config["detector"]
        assert det["batch_size"] == 4
        assert det["optimizer"] == "adaptive-moment"
        assert det["epsilon"] == 1e-8
        assert det["initial_lr"] == 1e-5
        assert det["schedule"] == "cosine"
        assert det["weight_decay"] == 0.05
        assert det["epochs"] == 20
        assert det["max_regions"] == 30

    def test_generator_defaults(self):
        gen = default_config()["generator"]
        assert gen["alpha"] == 0.7
        assert gen["phi"] == 0.01
        assert gen["patch_size"] == 16

    def test_decoding_defaults(self):
        dec = default_config()["decoding"]
        assert dec == {"strategy": "contrastive", "width": 5, "penalty": 0.6}

    def test_enhance_defaults(self):
        enh = default_config()["enhance"]
        assert enh["low_threshold"] == 0.4
        assert enh["drop_rate"] == 0.5
        assert enh["target_fraction"] == 0.6
        assert enh["relatedness_threshold"] == 0.85
        assert enh["max_passes"] == 50

    def test_mapping_and_enrichment_defaults(self):
        config = default_config()
        assert config["mapping"]["threshold"] == 0.75
        assert config["enrichment"]["min_share"] == 0.3

    def test_stage_names(self):
        assert STAGES == (
            "ingest",
            "enhance",
            "train-detector",
            "train-generator",
            "extract",
            "evaluate",
            "compare-kg",
            "enrich",
        )
        config = default_config()
        assert all(config.stage_enabled(stage) for stage in STAGES)


class TestValidation:
    def test_yaml_file_round_trip(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text(
            "seed: 11\nsplit: test\ndetector:\n  batch_size: 8\nstages:\n  enhance: false\n"
        )
        config = validate_config(path)
        assert config.seed == 11
        assert config.split == "test"
        assert config["detector"]["batch_size"] == 8
        assert not config.stage_enabled("enhance")
        assert config.stage_enabled("extract")

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config({"detektor": {}})
        assert any("detektor" in e for e in excinfo.value.errors)

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config({"detector": {"bach_size": 4}})
        assert any("detector.bach_size" in e for e in excinfo.value.errors)

    def test_all_errors_collected(self):
        bad = {
            "seed": -1,
            "split": "dev",
            "detector": {"batch_size": 0, "optimizer": "sgd"},
            "generator": {"alpha": 1.5},
            "mystery": {},
        }
        with pytest.raises(ConfigError) as excinfo:
            validate_config(bad)
        errors = excinfo.value.errors
        assert len(errors) == 6
        joined = "\n".join(errors)
        for fragment in (
            "seed",
            "split",
            "detector.batch_size",
            "detector.optimizer",
            "generator.alpha",
            "mystery",
        ):
            assert fragment in joined

    def test_type_mismatch_reported(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config({"decoding": {"width": "wide"}})
        assert any("decoding.width" in e for e in excinfo.value.errors)

    def test_int_promoted_to_float(self):
        config = validate_config({"enhance": {"drop_rate": 1}})
        assert config["enhance"]["drop_rate"] == 1.0

    def test_bool_is_not_int(self):
        with pytest.raises(ConfigError):
            validate_config({"detector": {"batch_size": True}})

    def test_boundary_values(self):
        with pytest.raises(ConfigError):
            validate_config({"generator": {"phi": 0.0}})
        with pytest.raises(ConfigError):
            validate_config({"mapping": {"threshold": 0.0}})
        assert validate_config({"mapping": {"threshold": 1.0}})["mapping"]["threshold"] == 1.0

    def test_unknown_stage_toggle(self):
        with pytest.raises(ConfigError) as excinfo:
            validate_config({"stages": {"deploy": True}})
        assert any("deploy" in e for e in excinfo.value.errors)


class TestEnvOverrides:
    def test_section_override(self, monkeypatch):
        monkeypatch.setenv("OPENVIK_DETECTOR_BATCH_SIZE", "16")
        assert validate_config({})["detector"]["batch_size"] == 16

    def test_seed_override(self, monkeypatch):
        monkeypatch.setenv("OPENVIK_SEED", "99")
        assert validate_config({}).seed == 99

    def test_override_beats_file_value(self, monkeypatch):
        monkeypatch.setenv("OPENVIK_GENERATOR_ALPHA", "0.5")
        assert validate_config({"generator": {"alpha": 0.9}})["generator"]["alpha"] == 0.5

    def test_invalid_override_collected(self, monkeypatch):
        monkeypatch.setenv("OPENVIK_DETECTOR_EPOCHS", "minus-one")
        with pytest.raises(ConfigError) as excinfo:
            validate_config({})
        assert any("detector.epochs" in e for e in excinfo.value.errors)

    def test_unrelated_env_ignored(self, monkeypatch):
        monkeypatch.setenv("OPENVIK_DETECTOR_NOPE", "1")
        monkeypatch.setenv("OTHER_VAR", "1")
        validate_config({})


class TestCanonicalJson:
    def test_deterministic(self):
        a = validate_config({"seed": 3}).canonical_json()
        b = validate_config({"seed": 3}).canonical_json()
        assert a == b

    def test_sensitive_to_values(self):
        a = validate_config({"seed": 3}).canonical_json()
        b = validate_config({"seed": 4}).canonical_json()
        assert a != b
