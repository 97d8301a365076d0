import numpy as np
import pytest

from mocap_text.core import tensor as T
from mocap_text.core.tensor import Tensor
from mocap_text.exceptions import DimensionError
from mocap_text.models.encoder_model import (
    EncoderFactory,
    encode,
    encoder_parameter_count,
    gru_cell_step,
    gru_parameter_shapes,
)
from mocap_text.models.params import constant_all, initialize, spec_count
from mocap_text.schemas.model_schemas import EncoderConfig


def _params(cfg, seed=0):
    spec = EncoderFactory.get_encoder(cfg.kind).parameter_shapes(cfg)
    return spec, constant_all(initialize(spec, seed))


class TestEncoderParameters:
    """Parameter layout and closed-form counts"""

    @pytest.mark.parametrize(
        "cfg",
        [
            EncoderConfig(kind="gru", input_dim=63, hidden_dim=64),
            EncoderConfig(kind="bigru", input_dim=63, hidden_dim=64),
            EncoderConfig(kind="mlp", input_dim=63, mlp_layers=2, mlp_dims=[64, 64]),
            EncoderConfig(kind="mlp", input_dim=63, mlp_layers=4, mlp_dims=[128] * 3 + [64]),
        ],
    )
    def test_count_matches_spec(self, cfg):
        """Test the closed form equals the declared shapes"""
        spec = EncoderFactory.get_encoder(cfg.kind).parameter_shapes(cfg)
        assert spec_count(spec) == encoder_parameter_count(cfg)

    def test_gru_count_value(self):
        """Test 3(wn + n^2 + n) for w=63, n=64"""
        cfg = EncoderConfig(kind="gru", input_dim=63, hidden_dim=64)
        assert encoder_parameter_count(cfg) == 3 * (63 * 64 + 64 * 64 + 64)

    def test_bigru_doubles_gru(self):
        """Test the bidirectional encoder has twice the parameters"""
        gru = EncoderConfig(kind="gru", input_dim=10, hidden_dim=8)
        bigru = EncoderConfig(kind="bigru", input_dim=10, hidden_dim=8)
        assert encoder_parameter_count(bigru) == 2 * encoder_parameter_count(gru)

    def test_mlp_layer_count_validated(self):
        """Test mlp_dims must list one width per layer"""
        with pytest.raises(ValueError, match="widths for"):
            EncoderConfig(kind="mlp", mlp_layers=3, mlp_dims=[64, 64])

    def test_unknown_kind(self):
        """Test the factory rejects unknown encoder kinds"""
        with pytest.raises(ValueError, match="Unsupported encoder kind"):
            EncoderFactory.get_encoder("lstm")

    def test_supported_kinds(self):
        """Test the factory lists every kind"""
        assert set(EncoderFactory.get_supported_kinds()) == {"gru", "bigru", "mlp"}


class TestGRUCell:
    """Single GRU step"""

    def test_zero_update_gate_gives_candidate(self, rng):
        """Test z = 0 yields h' = tanh candidate"""
        spec = gru_parameter_shapes("g", 3, 2)
        params = {name: np.zeros(shape) for name, (shape, _) in spec.items()}
        params["g.b_z"] = np.full(2, -1e3)
        params["g.W_h"] = rng.normal(size=(3, 2))
        x = rng.normal(size=(1, 3))
        h = gru_cell_step(x, np.ones((1, 2)), constant_all(params), "g")
        assert np.allclose(h.data, np.tanh(x @ params["g.W_h"]))

    def test_saturated_update_gate_keeps_state(self, rng):
        """Test z = 1 copies the previous state"""
        spec = gru_parameter_shapes("g", 3, 2)
        params = {name: rng.normal(size=shape) for name, (shape, _) in spec.items()}
        params["g.b_z"] = np.full(2, 1e3)
        h_prev = np.array([[0.3, -0.7]])
        h = gru_cell_step(rng.normal(size=(1, 3)), h_prev, constant_all(params), "g")
        assert np.allclose(h.data, h_prev)

    def test_wrong_width_names_weight(self, rng):
        """Test a width mismatch names the offending weight"""
        spec = gru_parameter_shapes("g", 3, 2)
        params = constant_all(initialize(spec, 0))
        with pytest.raises(DimensionError, match="g.W_z"):
            gru_cell_step(np.ones((1, 4)), np.zeros((1, 2)), params, "g")

    def test_gradient(self, rng):
        """Test GRU step gradients against finite differences"""
        spec = gru_parameter_shapes("g", 3, 2)
        point = initialize(spec, 1)
        x, h0 = rng.normal(size=(2, 3)), rng.normal(size=(2, 2))

        def f(p):
            return T.sum(gru_cell_step(x, h0, p, "g") * np.array([1.0, -2.0]))

        assert T.grad_check(f, point) < 1e-6


class TestEncode:
    """Encoding motions"""

    @pytest.mark.parametrize("kind", ["gru", "bigru", "mlp"])
    def test_output_shapes(self, kind, motion):
        """Test state shapes per encoder kind"""
        cfg = EncoderConfig(kind=kind, input_dim=6, hidden_dim=5, mlp_layers=2, mlp_dims=[7, 5])
        _, params = _params(cfg)
        out = encode(motion, cfg, params)
        assert out.states.shape == (1, 12, cfg.output_dim)
        assert (out.final is None) == (kind == "mlp")

    def test_empty_motion_raises(self):
        """Test a motion without frames raises"""
        cfg = EncoderConfig(kind="gru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        with pytest.raises(DimensionError):
            encode(np.zeros((0, 6)), cfg, params)

    def test_wrong_width_raises(self, rng):
        """Test a frame width other than input_dim raises"""
        cfg = EncoderConfig(kind="mlp", input_dim=6, mlp_layers=2, mlp_dims=[7, 5])
        _, params = _params(cfg)
        with pytest.raises(DimensionError, match="frame width 5"):
            encode(rng.normal(size=(4, 5)), cfg, params)

    def test_gru_is_causal(self, motion):
        """Test changing a late frame leaves earlier GRU states unchanged"""
        cfg = EncoderConfig(kind="gru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        changed = motion.copy()
        changed[8] += 10.0
        a = encode(motion, cfg, params).states.data
        b = encode(changed, cfg, params).states.data
        assert np.array_equal(a[:, :8], b[:, :8])
        assert not np.allclose(a[:, 8], b[:, 8])

    def test_bigru_sees_future(self, motion):
        """Test the backward half of frame 0 depends on the last frame"""
        cfg = EncoderConfig(kind="bigru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        changed = motion.copy()
        changed[-1] += 10.0
        a = encode(motion, cfg, params).states.data
        b = encode(changed, cfg, params).states.data
        assert np.array_equal(a[0, 0, :5], b[0, 0, :5])
        assert not np.allclose(a[0, 0, 5:], b[0, 0, 5:])

    def test_mlp_is_framewise(self, motion):
        """Test MLP state j depends on frame j only"""
        cfg = EncoderConfig(kind="mlp", input_dim=6, mlp_layers=2, mlp_dims=[7, 5])
        _, params = _params(cfg)
        changed = motion.copy()
        changed[4] += 3.0
        a = encode(motion, cfg, params).states.data[0]
        b = encode(changed, cfg, params).states.data[0]
        differs = ~np.all(np.isclose(a, b), axis=1)
        assert differs.tolist() == [j == 4 for j in range(12)]

    def test_padding_matches_unpadded(self, motion):
        """Test a padded batch row equals the sequence encoded alone"""
        cfg = EncoderConfig(kind="bigru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        short = motion[:7]
        batch = np.zeros((2, 12, 6))
        batch[0] = motion
        batch[1, :7] = short
        padded = encode(batch, cfg, params, lengths=np.array([12, 7]))
        alone = encode(short, cfg, params)
        assert np.allclose(padded.states.data[1, :7], alone.states.data[0])
        assert np.allclose(padded.final.data[1], alone.final.data[0])
        assert np.all(padded.states.data[1, 7:] == 0.0)

    def test_invalid_lengths_raise(self, motion):
        """Test lengths beyond the frame count raise"""
        cfg = EncoderConfig(kind="gru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        with pytest.raises(DimensionError):
            encode(motion, cfg, params, lengths=np.array([13]))

    def test_tensor_input_keeps_tape(self, motion):
        """Test gradients flow back to a watched motion"""
        cfg = EncoderConfig(kind="gru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        tape = T.GradientTape()
        x = tape.watch(motion)
        grads = T.backward(T.sum(encode(x, cfg, params).states))
        assert grads[x.node_id].shape == motion.shape
        assert np.any(grads[x.node_id].data != 0.0)

    def test_encoder_gradient(self, rng):
        """Test full bigru gradients against finite differences"""
        cfg = EncoderConfig(kind="bigru", input_dim=3, hidden_dim=2)
        spec, _ = _params(cfg)
        point = initialize(spec, 5)
        x = rng.normal(size=(4, 3))

        def f(p):
            return T.sum(encode(x, cfg, p).states * np.linspace(-1, 1, 4)[:, None])

        assert T.grad_check(f, point) < 1e-6

    def test_constant_tensors_stay_untracked(self, motion):
        """Test inference with constant parameters records nothing"""
        cfg = EncoderConfig(kind="gru", input_dim=6, hidden_dim=5)
        _, params = _params(cfg)
        assert all(isinstance(p, Tensor) for p in params.values())
        assert not encode(motion, cfg, params).states.tracked
