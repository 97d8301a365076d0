import numpy as np
import pytest

from mocap_text.core import tensor as T
from mocap_text.core.tensor import Tensor
from mocap_text.models.attention_model import (
    AttentionFactory,
    attention_energies,
    attention_parameter_shapes,
    context_vector,
    gaussian_window,
    local_position,
    precompute_keys,
    recurrent_position,
    window_segment,
    window_segments,
)
from mocap_text.models.encoder_model import EncoderOutputs
from mocap_text.models.params import constant_all, initialize
from mocap_text.schemas.model_schemas import AttentionConfig

DEC, ENC = 4, 3


def _setup(rng, mode="local_recurrent", frames=10, lengths=None, **kwargs):
    cfg = AttentionConfig(mode=mode, **kwargs)
    params = constant_all(initialize(attention_parameter_shapes(cfg, DEC, ENC), 7))
    batch = 1 if lengths is None else len(lengths)
    states = rng.normal(size=(batch, frames, ENC))
    lengths = np.full(batch, frames) if lengths is None else np.asarray(lengths)
    for b, n in enumerate(lengths):
        states[b, n:] = 0.0
    enc = EncoderOutputs(states=Tensor(states), lengths=lengths)
    return cfg, params, enc


class TestWindowSegment:
    """Integer window around a position"""

    def test_interior_window(self):
        """Test a centred window of width 2D"""
        assert window_segment(10.2, 3, 50) == (7, 13)

    def test_round_half_up(self):
        """Test x.5 rounds up"""
        assert window_segment(2.5, 1, 10) == (2, 4)
        assert window_segment(3.5, 1, 10) == (3, 5)

    def test_clipped_at_start(self):
        """Test the window stops at frame 0"""
        assert window_segment(0.4, 5, 50) == (0, 5)

    def test_clipped_at_end(self):
        """Test the window stops at the last frame"""
        assert window_segment(49.0, 5, 50) == (44, 50)

    def test_clamped_beyond_end(self):
        """Test a centre past the end saturates at the last frames"""
        assert window_segment(60.0, 5, 50) == (44, 50)
        assert window_segment(60.0, 5, 50, causal=True) == (45, 50)
        assert window_segment(1e6, 2, 3) == (0, 3)

    def test_clamped_before_start(self):
        """Test a negative centre keeps frame 0 in the window"""
        assert window_segment(-7.0, 2, 10) == (0, 2)
        assert window_segment(0.0, 2, 10, causal=True) == (0, 1)

    def test_never_empty(self, rng):
        """Test every window holds a frame for any position and motion length"""
        positions = rng.uniform(-50, 200, size=1000)
        counts = rng.integers(1, 60, size=1000)
        widths = rng.integers(1, 8, size=1000)
        for causal in (False, True):
            for p, n, d in zip(positions, counts, widths):
                start, end = window_segment(p, int(d), int(n), causal)
                assert 0 <= start < end <= n

    def test_causal_excludes_centre(self):
        """Test the causal window is [c - D, c["""
        assert window_segment(10.0, 3, 50, causal=True) == (7, 10)

    def test_vectorised_matches_scalar(self, rng):
        """Test window_segments agrees with window_segment"""
        positions = rng.uniform(-2, 30, size=20)
        counts = rng.integers(5, 25, size=20)
        for causal in (False, True):
            rows = window_segments(positions, 4, counts, causal)
            expected = [window_segment(p, 4, n, causal) for p, n in zip(positions, counts)]
            assert [tuple(r) for r in rows.tolist()] == expected


class TestPositions:
    """Predicted alignment positions"""

    def test_local_position_in_range(self, rng):
        """Test p lies in [0, T_x]"""
        cfg, params, _ = _setup(rng, mode="local")
        p = local_position(rng.normal(size=(5, DEC)) * 5, np.full(5, 10), params)
        assert np.all((p.data >= 0) & (p.data <= 10))

    def test_recurrent_monotone_and_bounded(self, rng):
        """Test p_t >= min(p_{t-1}, T_x - 1) + eps, p_t >= p_{t-1} and p_t <= T_x - 1 + eps"""
        cfg, params, _ = _setup(rng, overlap=0.5, half_width=2)
        p = Tensor(np.zeros(3))
        for _ in range(30):
            nxt = recurrent_position(rng.normal(size=(3, DEC)), p, np.full(3, 20), cfg.epsilon, params)
            assert np.all(nxt.data >= np.minimum(p.data, 19) + cfg.epsilon - 1e-12)
            assert np.all(nxt.data >= p.data - 1e-12)
            assert np.all(nxt.data <= 19 + cfg.epsilon + 1e-12)
            p = nxt
        assert np.allclose(p.data, 19 + cfg.epsilon)

    def test_saturated_position_stays_put(self, rng):
        """Test alpha = 0, D = 2 on ten frames never drifts past T_x - 1 + eps"""
        cfg, params, _ = _setup(rng, overlap=0.0, half_width=2)
        p = Tensor(np.zeros(1))
        for _ in range(12):
            p = recurrent_position(rng.normal(size=(1, DEC)), p, np.array([10]), cfg.epsilon, params)
        assert np.isclose(p.data[0], 9.0 + 4.0)
        assert window_segment(float(p.data[0]), 2, 10) == (7, 10)

    def test_random_positions_bounded(self, rng):
        """Test the position bounds over 1000 random draws"""
        for _ in range(1000):
            frames = int(rng.integers(2, 40))
            cfg, params, _ = _setup(
                rng, half_width=int(rng.integers(1, 6)), overlap=float(rng.uniform())
            )
            last = frames - 1.0
            p_prev = rng.uniform(0.0, last + cfg.epsilon, size=2)
            h = rng.normal(size=(2, DEC)) * 3.0
            p = recurrent_position(h, p_prev, np.full(2, frames), cfg.epsilon, params).data
            assert np.all(p >= np.minimum(p_prev, last) + cfg.epsilon - 1e-9)
            assert np.all(p >= p_prev - 1e-9)
            assert np.all(p <= last + cfg.epsilon + 1e-9)

    def test_epsilon_from_overlap(self):
        """Test eps = (1 - alpha) 2D"""
        assert AttentionConfig(half_width=5, overlap=0.0).epsilon == 10.0
        assert AttentionConfig(half_width=5, overlap=1.0).epsilon == 0.0
        assert AttentionConfig(half_width=4).r == 2.0

    def test_disjoint_windows_at_zero_overlap(self, rng):
        """Test alpha = 0 gives non-overlapping successive windows"""
        for _ in range(200):
            d = int(rng.integers(1, 5))
            frames = int(rng.integers(10, 80))
            cfg, params, _ = _setup(rng, overlap=0.0, half_width=d)
            p = Tensor(np.zeros(1))
            previous_end = None
            for _ in range(frames):
                p = recurrent_position(rng.normal(size=(1, DEC)), p, np.array([frames]), cfg.epsilon, params)
                if np.floor(p.data[0] + 0.5) > frames - 1:
                    break
                start, end = window_segment(float(p.data[0]), d, frames)
                if previous_end is not None:
                    assert start >= previous_end
                previous_end = end

    def test_gradient_sweep(self, rng):
        """Test position gradients on random instances, inside and past the motion"""
        cfg, _, _ = _setup(rng)
        for seed in range(10):
            point = initialize(attention_parameter_shapes(cfg, DEC, ENC), seed)
            point = {k: v for k, v in point.items() if k in ("att.W_p", "att.v_p")}
            h = rng.normal(size=(3, DEC))
            frames = rng.integers(3, 30, size=3)
            p_prev = np.array([0.0, frames[1] * 0.5, frames[2] + 1.5])
            eps = float(rng.uniform(0.0, 4.0))

            def f(p):
                return T.sum(recurrent_position(h, p_prev, frames, eps, p))

            assert T.grad_check(f, point) < 1e-6

    def test_recurrent_gradient(self, rng):
        """Test position gradients against finite differences"""
        cfg, _, _ = _setup(rng)
        point = initialize(attention_parameter_shapes(cfg, DEC, ENC), 2)
        point = {k: v for k, v in point.items() if k in ("att.W_p", "att.v_p")}
        h = rng.normal(size=(2, DEC))

        def f(p):
            return T.sum(recurrent_position(h, np.array([1.0, 3.0]), np.array([10, 10]), 0.5, p))

        assert T.grad_check(f, point) < 1e-6


class TestAttentionWeights:
    """Attention rows and contexts"""

    def test_soft_rows_sum_to_one(self, rng):
        """Test soft attention is a distribution over frames"""
        cfg, params, enc = _setup(rng, mode="soft")
        keys = precompute_keys(enc, params)
        step = AttentionFactory.get_mechanism("soft").attend(
            Tensor(rng.normal(size=(1, DEC))), None, enc, keys, params, cfg
        )
        assert np.isclose(step.weights.data.sum(), 1.0)
        assert step.position is None and step.segments is None

    def test_padding_gets_zero_weight(self, rng):
        """Test frames past a row's length get exactly zero raw weight"""
        cfg, params, enc = _setup(rng, mode="soft", lengths=[10, 6])
        raw = T.softmax(attention_energies(rng.normal(size=(2, DEC)), enc, params))
        assert np.all(raw.data[1, 6:] == 0.0)
        assert np.isclose(raw.data[1].sum(), 1.0)

    def test_masked_rows_zero_outside_window(self, rng):
        """Test masked local weights vanish outside the segment"""
        cfg, params, enc = _setup(rng, mode="local", half_width=2, mask=True)
        step = AttentionFactory.get_mechanism("local").attend(
            Tensor(rng.normal(size=(1, DEC))), None, enc, precompute_keys(enc, params), params, cfg
        )
        start, end = step.segments[0]
        outside = np.ones(10, dtype=bool)
        outside[start:end] = False
        assert np.all(step.weights.data[0, outside] == 0.0)

    def test_masked_support_is_window(self, rng):
        """Test masked weights are positive exactly on the window frames"""
        for _ in range(200):
            frames = int(rng.integers(2, 30))
            cfg, params, enc = _setup(
                rng,
                frames=frames,
                half_width=int(rng.integers(1, 5)),
                overlap=float(rng.uniform()),
                mask=True,
                causal=bool(rng.integers(0, 2)),
            )
            p_prev = Tensor(rng.uniform(0.0, frames - 1.0 + cfg.epsilon, size=1))
            step = AttentionFactory.get_mechanism(cfg.mode).attend(
                Tensor(rng.normal(size=(1, DEC))), p_prev, enc, precompute_keys(enc, params), params, cfg
            )
            start, end = step.segments[0]
            inside = np.zeros(frames, dtype=bool)
            inside[start:end] = True
            assert inside.any()
            assert np.array_equal(step.weights.data[0] > 0.0, inside)

    def test_unmasked_rows_keep_tails(self, rng):
        """Test mask off keeps Gaussian-scaled weights outside the window"""
        cfg, params, enc = _setup(rng, mode="local", half_width=1, mask=False)
        step = AttentionFactory.get_mechanism("local").attend(
            Tensor(rng.normal(size=(1, DEC))), None, enc, precompute_keys(enc, params), params, cfg
        )
        assert np.all(step.weights.data[0] > 0.0)

    def test_gaussian_peak_at_position(self):
        """Test uniform raw weights peak at the rounded position"""
        raw = np.full((1, 9), 1.0 / 9)
        weights = gaussian_window(raw, np.array([4.0]), 1.5, mask=False)
        assert int(np.argmax(weights.data[0])) == 4
        assert np.isclose(weights.data[0, 4], 1.0 / 9)

    def test_context_is_weighted_sum(self, rng):
        """Test c = sum_j a_j s_j"""
        states = rng.normal(size=(1, 5, 3))
        enc = EncoderOutputs(states=Tensor(states), lengths=np.array([5]))
        weights = rng.uniform(size=(1, 5))
        context = context_vector(weights, enc)
        assert np.allclose(context.data[0], weights[0] @ states[0])

    def test_masked_context_ignores_outside_frames(self, rng):
        """Test changing a frame outside the window leaves the context alone"""
        states = rng.normal(size=(1, 8, 3))
        weights = rng.uniform(size=(1, 8))
        segments = np.array([[2, 5]])
        a = context_vector(weights, EncoderOutputs(Tensor(states), np.array([8])), True, segments)
        states[0, 6] += 100.0
        b = context_vector(weights, EncoderOutputs(Tensor(states), np.array([8])), True, segments)
        assert np.array_equal(a.data, b.data)

    def test_attention_gradient(self, rng):
        """Test recurrent local attention gradients against finite differences"""
        cfg, _, enc = _setup(rng, half_width=3, mask=True)
        point = initialize(attention_parameter_shapes(cfg, DEC, ENC), 4)
        h = rng.normal(size=(1, DEC))
        mechanism = AttentionFactory.get_mechanism(cfg.mode)

        def f(p):
            step = mechanism.attend(h, Tensor(np.array([2.3])), enc, precompute_keys(enc, p), p, cfg)
            return T.sum(step.context * np.array([1.0, -0.5, 2.0]))

        assert T.grad_check(f, point) < 1e-5

    def test_unknown_mode(self):
        """Test the factory rejects unknown modes"""
        with pytest.raises(ValueError, match="Unsupported attention mode"):
            AttentionFactory.get_mechanism("hard")

    def test_soft_has_no_position_parameters(self):
        """Test only local modes declare W_p and v_p"""
        soft = attention_parameter_shapes(AttentionConfig(mode="soft"), DEC, ENC)
        local = attention_parameter_shapes(AttentionConfig(mode="local"), DEC, ENC)
        assert "att.W_p" not in soft
        assert set(local) - set(soft) == {"att.W_p", "att.v_p"}
