"""Model checkpoint files."""

import struct

import numpy as np
import pytest

from src.autodiff import load_checkpoint, save_checkpoint
from src.errors import ArtifactError


class TestCheckpoint:
    """Save/load keeps every parameter, running statistic and the latent placement."""

    def test_trained_state_survives(self, tiny_model, tmp_path):
        """A model with moved BN statistics evaluates identically after reload."""
        x = np.random.default_rng(0).random((6, 1, 8, 8))
        tiny_model.forward(x)
        path = save_checkpoint(tiny_model, tmp_path / "model.ltk")
        loaded = load_checkpoint(path)
        assert loaded.fingerprint() == tiny_model.fingerprint()
        assert loaded.latent_site == tiny_model.latent_site
        np.testing.assert_array_equal(loaded.predict_logits(x), tiny_model.predict_logits(x))

    def test_latent_depth_recorded(self, tiny_model, tmp_path):
        path = save_checkpoint(tiny_model.clone(latent_depth=0), tmp_path / "shallow.ltk")
        assert load_checkpoint(path).latent_site.depth == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError, match="not found"):
            load_checkpoint(tmp_path / "absent.ltk")

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bogus.ltk"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ArtifactError, match="not an LTK1"):
            load_checkpoint(path)

    def test_truncated_file(self, tiny_model, tmp_path):
        path = save_checkpoint(tiny_model, tmp_path / "model.ltk")
        path.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(ArtifactError, match="truncated"):
            load_checkpoint(path)

    def test_header_layout(self, tiny_model, tmp_path):
        """Magic, then the layer count, then the format version."""
        header = save_checkpoint(tiny_model, tmp_path / "model.ltk").read_bytes()[:12]
        assert header[:4] == b"LTK1"
        assert struct.unpack("<II", header[4:]) == (len(tiny_model.layers), 1)

    def test_unknown_version(self, tiny_model, tmp_path):
        path = save_checkpoint(tiny_model, tmp_path / "model.ltk")
        data = bytearray(path.read_bytes())
        data[8:12] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(ArtifactError, match="version 99"):
            load_checkpoint(path)
