"""
Soft, local and recurrent local attention over encoder states.

All modes share the additive energy ``e_j = v_a . tanh(h W_a + s_j U_a)`` and a
softmax over real frames. Local modes then predict a position ``p`` and weight
the softmax row by a Gaussian centred on it, optionally truncated to the window
``[c - D, c + D[`` around the rounded position c, clamped into the motion.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Protocol, Tuple

import numpy as np

from mocap_text.core import tensor as T
from mocap_text.core.tensor import Tensor
from mocap_text.exceptions import DimensionError
from mocap_text.models.encoder_model import EncoderOutputs
from mocap_text.models.params import ParameterSpec
from mocap_text.schemas.model_schemas import AttentionConfig, AttentionMode


@dataclass
class AttentionStep:
    """Attention produced for one decoded token"""

    weights: Tensor  # (B, T) final a_t
    raw: Tensor  # (B, T) softmax alpha_t before windowing
    context: Tensor  # (B, d_enc)
    position: Optional[Tensor] = None  # (B,)
    segments: Optional[np.ndarray] = None  # (B, 2) start, end


def attention_parameter_shapes(
    cfg: AttentionConfig, decoder_dim: int, encoder_dim: int
) -> ParameterSpec:
    spec: ParameterSpec = {
        "att.W_a": ((decoder_dim, decoder_dim), decoder_dim),
        "att.U_a": ((encoder_dim, decoder_dim), encoder_dim),
        "att.v_a": ((decoder_dim, 1), decoder_dim),
    }
    if cfg.mode != AttentionMode.SOFT:
        spec["att.W_p"] = ((decoder_dim, decoder_dim), decoder_dim)
        spec["att.v_p"] = ((decoder_dim, 1), decoder_dim)
    return spec


def precompute_keys(enc: EncoderOutputs, params: Mapping[str, Tensor]) -> Tensor:
    """Project encoder states once per sequence: s_j U_a, shape (B, T, a)"""
    return enc.states @ params["att.U_a"]


def attention_energies(
    h_prev,
    enc: EncoderOutputs,
    params: Mapping[str, Tensor],
    keys: Optional[Tensor] = None,
) -> Tensor:
    """
    Additive energies for every frame, ``-inf`` on padding.

    Args:
        h_prev: Previous decoder state (B, n')
        enc (EncoderOutputs): Encoded motion
        params (Mapping[str, Tensor]): Parameter tensors
        keys (Optional[Tensor]): Output of ``precompute_keys``, computed when omitted

    Returns:
        Tensor: Energies (B, T)

    Raises:
        DimensionError: If states and lengths disagree
    """
    h_prev = T.as_tensor(h_prev)
    lengths = np.asarray(enc.lengths)
    if lengths.shape != (enc.batch_size,) or lengths.max() > enc.frame_count:
        raise DimensionError(
            f"lengths {lengths.tolist()} do not match states of shape {enc.states.shape}"
        )
    if keys is None:
        keys = precompute_keys(enc, params)
    query = h_prev @ params["att.W_a"]
    query = T.reshape(query, (query.shape[0], 1, query.shape[1]))
    energies = T.tanh(query + keys) @ params["att.v_a"]
    energies = T.reshape(energies, energies.shape[:2])
    if enc.mask.all():
        return energies
    return T.masked_fill(energies, enc.mask, -np.inf)


def local_position(h_prev, frame_counts, params: Mapping[str, Tensor]) -> Tensor:
    """p = T_x * sigmoid(v_p . tanh(h W_p)), one position per batch row"""
    h_prev = T.as_tensor(h_prev)
    counts = np.asarray(frame_counts, dtype=np.float64)
    logit = T.tanh(h_prev @ params["att.W_p"]) @ params["att.v_p"]
    return counts * T.sigmoid(T.reshape(logit, (logit.shape[0],)))


def recurrent_position(
    h_prev,
    p_prev,
    frame_counts,
    epsilon: float,
    params: Mapping[str, Tensor],
) -> Tensor:
    """
    Monotone position update.

    With q = min(p_prev, T_x - 1):
    p_t = q + eps + (T_x - 1 - q) * sigmoid(v_p . (h W_p))

    Returns:
        Tensor: Positions (B,) in [q + eps, T_x - 1 + eps], never below ``p_prev``
    """
    h_prev, p_prev = T.as_tensor(h_prev), T.as_tensor(p_prev)
    last = np.asarray(frame_counts, dtype=np.float64) - 1.0
    logit = (h_prev @ params["att.W_p"]) @ params["att.v_p"]
    gate = T.sigmoid(T.reshape(logit, (logit.shape[0],)))
    base = T.clip_max(p_prev, last)
    return base + epsilon + (last - base) * gate


def window_segment(
    position: float, half_width: int, frame_count: int, causal: bool = False
) -> Tuple[int, int]:
    """
    Integer window around a real position, clipped to [0, T_x[.

    The centre is round-half-up of ``position``, clamped to [0, T_x - 1]
    (to [1, T_x] when ``causal``), so the window always holds a frame.
    """
    start, end = window_segments(
        np.array([position], dtype=np.float64), half_width, np.array([frame_count]), causal
    )[0]
    return int(start), int(end)


def window_segments(
    positions: np.ndarray, half_width: int, frame_counts: np.ndarray, causal: bool = False
) -> np.ndarray:
    """Vectorised ``window_segment``, shape (B, 2)"""
    counts = np.asarray(frame_counts, dtype=np.int64)
    centres = np.floor(np.asarray(positions, dtype=np.float64) + 0.5).astype(np.int64)
    if causal:
        centres = np.clip(centres, 1, counts)
        ends = centres
    else:
        centres = np.clip(centres, 0, counts - 1)
        ends = np.minimum(counts, centres + half_width)
    starts = np.maximum(0, centres - half_width)
    return np.stack([starts, ends], axis=1)


def segment_indicator(segments: np.ndarray, frame_count: int) -> np.ndarray:
    """(B, T) float 1.0 inside each row's segment"""
    frames = np.arange(frame_count)[None, :]
    inside = (frames >= segments[:, :1]) & (frames < segments[:, 1:2])
    return inside.astype(np.float64)


def gaussian_window(
    raw, position, r: float, mask: bool, segments: Optional[np.ndarray] = None
) -> Tensor:
    """
    Scale each weight by exp(-(j - p)^2 / (2 r^2)); truncate to the segment if ``mask``.

    Args:
        raw: Softmax rows (B, T)
        position: Positions (B,)
        r (float): Gaussian width in frames
        mask (bool): Zero weights outside ``segments``
        segments (Optional[np.ndarray]): (B, 2) windows, required when ``mask``

    Returns:
        Tensor: Windowed weights (B, T)
    """
    raw, position = T.as_tensor(raw), T.as_tensor(position)
    batch, frames = raw.shape
    offset = np.arange(frames, dtype=np.float64)[None, :] - T.reshape(position, (batch, 1))
    factor = T.exp(offset * offset * (-1.0 / (2.0 * r * r)))
    weights = raw * factor
    if mask:
        weights = weights * segment_indicator(segments, frames)
    return weights


def context_vector(
    weights, enc: EncoderOutputs, mask: bool = False, segments: Optional[np.ndarray] = None
) -> Tensor:
    """Weighted sum of encoder states, restricted to the segment when ``mask``"""
    weights = T.as_tensor(weights)
    batch, frames = weights.shape
    if mask and segments is not None:
        weights = weights * segment_indicator(segments, frames)
    rows = T.reshape(weights, (batch, 1, frames)) @ enc.states
    return T.reshape(rows, (batch, rows.shape[-1]))


class AttentionMechanism(Protocol):
    """Protocol for attention modes"""

    def attend(
        self,
        h_prev: Tensor,
        p_prev: Optional[Tensor],
        enc: EncoderOutputs,
        keys: Tensor,
        params: Mapping[str, Tensor],
        cfg: AttentionConfig,
    ) -> AttentionStep:
        ...


class SoftAttention:
    """Global softmax over all real frames"""

    def attend(self, h_prev, p_prev, enc, keys, params, cfg):
        raw = T.softmax(attention_energies(h_prev, enc, params, keys))
        return AttentionStep(weights=raw, raw=raw, context=context_vector(raw, enc))


class _WindowedAttention:
    def _position(self, h_prev, p_prev, enc, params, cfg) -> Tensor:
        raise NotImplementedError

    def attend(self, h_prev, p_prev, enc, keys, params, cfg):
        raw = T.softmax(attention_energies(h_prev, enc, params, keys))
        position = self._position(h_prev, p_prev, enc, params, cfg)
        segments = window_segments(position.data, cfg.half_width, enc.lengths, cfg.causal)
        weights = gaussian_window(raw, position, cfg.r, cfg.mask, segments)
        return AttentionStep(
            weights=weights,
            raw=raw,
            context=context_vector(weights, enc, cfg.mask, segments),
            position=position,
            segments=segments,
        )


class LocalAttention(_WindowedAttention):
    """Position predicted afresh from the decoder state at every step"""

    def _position(self, h_prev, p_prev, enc, params, cfg):
        return local_position(h_prev, enc.lengths, params)


class RecurrentLocalAttention(_WindowedAttention):
    """Position advanced monotonically from the previous one"""

    def _position(self, h_prev, p_prev, enc, params, cfg):
        if p_prev is None:
            p_prev = Tensor(np.zeros(enc.batch_size))
        return recurrent_position(h_prev, p_prev, enc.lengths, cfg.epsilon, params)


class AttentionFactory:
    """Factory class for attention mechanisms"""

    _mechanisms: Dict[AttentionMode, AttentionMechanism] = {
        AttentionMode.SOFT: SoftAttention(),
        AttentionMode.LOCAL: LocalAttention(),
        AttentionMode.LOCAL_RECURRENT: RecurrentLocalAttention(),
    }

    @classmethod
    def get_mechanism(cls, mode) -> AttentionMechanism:
        try:
            mode = AttentionMode(mode)
        except ValueError:
            raise ValueError(f"Unsupported attention mode: {mode}")
        return cls._mechanisms[mode]

    @classmethod
    def get_supported_modes(cls) -> list:
        return [mode.value for mode in cls._mechanisms]
