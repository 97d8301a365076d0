import json

import numpy as np
import pytest

from mocap_text.exceptions import CheckpointVersionError, ConfigError
from mocap_text.models.caption_model import CaptionModel
from mocap_text.models.sample_model import Normalization
from mocap_text.schemas.training_schemas import TrainingConfig
from mocap_text.services.checkpoint_service import (
    decode_values,
    encode_values,
    load_checkpoint,
    save_checkpoint,
)
from mocap_text.services.decoding_service import greedy_decode


class TestCheckpoint:
    """Saving and loading models"""

    def test_values_reload_bit_exactly(self, rng):
        """Test 17 significant digits restore every float64"""
        values = rng.normal(size=(3, 4)) * 1e-3
        assert np.array_equal(decode_values(encode_values(values), (3, 4)), values)

    def test_reload_identical_parameters(self, tiny_model, tmp_path):
        """Test every parameter reloads with equal shape and value"""
        path = save_checkpoint(tiny_model, tmp_path / "model.json", TrainingConfig(epochs=3))
        model, training = load_checkpoint(path)
        assert list(model.params) == list(tiny_model.params)
        for name, value in tiny_model.params.items():
            assert np.array_equal(model.params[name], value)
        assert model.config == tiny_model.config
        assert model.vocabulary.words == tiny_model.vocabulary.words
        assert training.epochs == 3

    def test_reloaded_model_decodes_identically(self, tiny_model, motion, tmp_path):
        """Test generation is unchanged after a save/load cycle"""
        model, _ = load_checkpoint(save_checkpoint(tiny_model, tmp_path / "m.json"))
        assert greedy_decode(model, motion).tokens == greedy_decode(tiny_model, motion).tokens

    def test_normalization_saved(self, tiny_vocab, model_config_factory, tmp_path):
        """Test normalization statistics travel with the model"""
        norm = Normalization(mean=np.arange(6.0), std=np.full(6, 2.0))
        model = CaptionModel.create(model_config_factory(), tiny_vocab, 0, norm)
        loaded, _ = load_checkpoint(save_checkpoint(model, tmp_path / "m.json"))
        assert np.array_equal(loaded.normalization.mean, norm.mean)
        assert np.array_equal(loaded.normalization.std, norm.std)

    def test_missing_file(self, tmp_path):
        """Test a missing checkpoint raises FileNotFoundError"""
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.json")

    def test_version_mismatch(self, tiny_model, tmp_path):
        """Test another format version raises CheckpointVersionError"""
        path = save_checkpoint(tiny_model, tmp_path / "m.json")
        document = json.loads(path.read_text())
        document["format_version"] = 99
        path.write_text(json.dumps(document))
        with pytest.raises(CheckpointVersionError, match="format version 99"):
            load_checkpoint(path)

    def test_shape_mismatch(self, tiny_model, tmp_path):
        """Test a parameter that does not match the config raises ConfigError"""
        path = save_checkpoint(tiny_model, tmp_path / "m.json")
        document = json.loads(path.read_text())
        document["parameters"][0]["shape"] = [1, -1]
        path.write_text(json.dumps(document))
        with pytest.raises(ConfigError, match="misshapen"):
            load_checkpoint(path)

    def test_not_json(self, tmp_path):
        """Test a non-JSON file raises ConfigError"""
        path = tmp_path / "m.json"
        path.write_text("not json")
        with pytest.raises(ConfigError):
            load_checkpoint(path)
