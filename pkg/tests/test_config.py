"""Config file parsing, presets and validation."""

from dataclasses import replace
from pathlib import Path

import pytest

from src.config import (
    ExperimentConfig,
    ci_config,
    default_config,
    dump_config,
    load_config,
    parse_config,
)
from src.errors import ArtifactError, ConfigParseError, ConfigurationError
from src.transfer import TransferMethod

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestPresets:
    """Test the shipped config files."""

    def test_default_file_matches_defaults(self):
        assert load_config(CONFIGS / "default.cfg") == default_config()

    def test_ci_file_matches_small_preset(self):
        assert load_config(CONFIGS / "ci.cfg") == ci_config()

    def test_ci_preset_shape(self):
        config = ci_config()
        assert config.devices == ("b", "c")
        assert config.model.input_shape == config.data.shape == (1, 20, 32)
        assert not config.mixup.enabled

    def test_dump_is_parseable(self):
        """A dumped config reads back as the same experiment."""
        config = replace(ci_config(), methods=("tsl", "at+tsl"), trials=3)
        assert parse_config(dump_config(config)) == config

    def test_fingerprint_tracks_seed(self):
        config = ci_config()
        assert config.fingerprint() == ci_config().fingerprint()
        assert config.with_seed(7).fingerprint() != config.fingerprint()
        seeded = config.with_seed(7)
        seeds = {seeded.data.seed, seeded.model.seed, seeded.pretrain.seed, seeded.schedule.seed}
        assert seeds == {7}


class TestParsing:
    """Test the ``section.key = value`` format."""

    def test_overrides_and_comments(self):
        text = (
            "# wider latent\n"
            "transfer.sigma = 0.5  # trailing comment\n"
            "\n"
            "experiment.methods = tsl, vbkt+tsl\n"
        )
        config = parse_config(text)
        assert config.transfer.sigma == 0.5
        assert config.methods == ("tsl", "vbkt+tsl")
        assert config.trials == default_config().trials

    def test_typed_values(self):
        config = parse_config(
            "transfer.method = at\ntransfer.cache_source = yes\ndata.shape = 1, 40, 64\n"
        )
        assert config.transfer.method is TransferMethod.AT
        assert config.transfer.cache_source is True
        assert config.data.shape == (1, 40, 64)

    def test_data_devices_drive_experiment_devices(self):
        config = parse_config("data.devices = b, s3\n")
        assert config.devices == ("b", "s3")

    def test_experiment_devices_subset(self):
        config = parse_config("data.devices = b, s3\nexperiment.devices = s3\n")
        assert config.devices == ("s3",)

    def test_base_is_respected(self):
        config = parse_config("experiment.trials = 1\n", ci_config())
        assert config.data == ci_config().data
        assert config.trials == 1

    def test_missing_equals(self):
        with pytest.raises(ConfigParseError, match="line 2") as info:
            parse_config("transfer.sigma = 0.2\ntransfer.temperature 2\n")
        assert info.value.line == 2
        assert info.value.exit_code == 4

    def test_unknown_section(self):
        with pytest.raises(ConfigParseError, match="unknown section 'optim'") as info:
            parse_config("\n\noptim.lr = 0.1\n")
        assert info.value.line == 3
        assert info.value.field == "optim.lr"

    def test_unknown_key(self):
        with pytest.raises(ConfigParseError, match="line 1, field 'model.colour': unknown key"):
            parse_config("model.colour = red\n")

    def test_bad_value(self):
        with pytest.raises(ConfigParseError, match="field 'transfer.sigma': bad value 'wide'"):
            parse_config("transfer.sigma = wide\n")

    def test_bad_boolean(self):
        with pytest.raises(ConfigParseError, match="expected a boolean"):
            parse_config("mixup.enabled = sometimes\n")

    def test_invalid_value_names_its_section(self):
        """Validation failures point at the section's first line."""
        with pytest.raises(ConfigParseError, match="sigma must be finite") as info:
            parse_config("data.seed = 1\ntransfer.temperature = 2.0\ntransfer.sigma = -1\n")
        assert info.value.line == 2
        assert info.value.field == "transfer"

    def test_unknown_method_key(self):
        with pytest.raises(ConfigurationError, match="unknown transfer method"):
            parse_config("experiment.methods = tsl, rkd\n")

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError, match="must equal data.shape"):
            parse_config("data.shape = 1, 20, 32\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError):
            load_config(tmp_path / "nope.cfg")


class TestValidation:
    """Test cross-section checks of the experiment config."""

    def test_devices_must_be_generated(self):
        with pytest.raises(ConfigurationError, match="not generated"):
            replace(ci_config(), devices=("s6",))

    def test_duplicate_methods(self):
        with pytest.raises(ConfigurationError, match="duplicates"):
            replace(ci_config(), methods=("tsl", "tsl"))

    @pytest.mark.parametrize(
        "overrides",
        [{"trials": 0}, {"workers": 0}, {"discrepancy_class": 3}, {"discrepancy_samples": 1}],
    )
    def test_counts(self, overrides):
        with pytest.raises(ConfigurationError):
            replace(ci_config(), **overrides)

    def test_default_devices(self):
        assert ExperimentConfig().devices == ExperimentConfig().data.devices
