"""
Motion encoders: unidirectional GRU, bidirectional GRU and per-frame MLP.

Closed-form parameter counts, for input width w and state size n:

    gru    3 * (w*n + n*n + n)
    bigru  2 * 3 * (w*n + n*n + n)
    mlp    sum_i (d_{i-1} * d_i + d_i)   with d_{-1} = w

GRU gating:

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    h~ = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h~ + z * h
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Protocol, Tuple

import numpy as np

from mocap_text.core import tensor as T
from mocap_text.core.tensor import Tensor
from mocap_text.exceptions import DimensionError
from mocap_text.models.params import ParameterSpec
from mocap_text.schemas.model_schemas import EncoderConfig, EncoderKind

GRU_GATES = ("z", "r", "h")


@dataclass
class EncoderOutputs:
    """Per-frame encoder states for a padded batch"""

    states: Tensor  # (B, T, d_enc)
    lengths: np.ndarray  # (B,) true frame counts
    final: Optional[Tensor] = None  # (B, n) last forward state, GRU kinds only

    @property
    def batch_size(self) -> int:
        return self.states.shape[0]

    @property
    def frame_count(self) -> int:
        return self.states.shape[1]

    @property
    def mask(self) -> np.ndarray:
        """(B, T) True on real frames"""
        return np.arange(self.frame_count)[None, :] < self.lengths[:, None]


def gru_parameter_shapes(prefix: str, input_dim: int, hidden_dim: int) -> ParameterSpec:
    spec: ParameterSpec = {}
    for gate in GRU_GATES:
        spec[f"{prefix}.W_{gate}"] = ((input_dim, hidden_dim), input_dim)
        spec[f"{prefix}.U_{gate}"] = ((hidden_dim, hidden_dim), hidden_dim)
        spec[f"{prefix}.b_{gate}"] = ((hidden_dim,), hidden_dim)
    return spec


def gru_cell_step(
    x_t, h_prev, params: Mapping[str, Tensor], prefix: str = "enc.fwd"
) -> Tensor:
    """
    Advance a GRU by one step.

    Args:
        x_t: Input rows (B, w)
        h_prev: Previous state (B, n)
        params (Mapping[str, Tensor]): Parameter tensors, keyed ``{prefix}.W_z`` etc.
        prefix (str): Name prefix of this GRU

    Returns:
        Tensor: New state (B, n)

    Raises:
        DimensionError: If an input does not match its weight
    """
    x_t, h_prev = T.as_tensor(x_t), T.as_tensor(h_prev)
    for gate in GRU_GATES:
        W, U = params[f"{prefix}.W_{gate}"], params[f"{prefix}.U_{gate}"]
        if x_t.shape[-1] != W.shape[0]:
            raise DimensionError(
                f"{prefix}.W_{gate} expects input width {W.shape[0]}, got {x_t.shape[-1]}"
            )
        if h_prev.shape[-1] != U.shape[0]:
            raise DimensionError(
                f"{prefix}.U_{gate} expects state width {U.shape[0]}, got {h_prev.shape[-1]}"
            )

    def gate(name: str, h) -> Tensor:
        return (
            x_t @ params[f"{prefix}.W_{name}"]
            + h @ params[f"{prefix}.U_{name}"]
            + params[f"{prefix}.b_{name}"]
        )

    z = T.sigmoid(gate("z", h_prev))
    r = T.sigmoid(gate("r", h_prev))
    candidate = T.tanh(gate("h", r * h_prev))
    return (1.0 - z) * candidate + z * h_prev


def run_gru(
    x: Tensor,
    mask: np.ndarray,
    params: Mapping[str, Tensor],
    prefix: str,
    reverse: bool = False,
) -> Tuple[Tensor, Tensor]:
    """
    Run a GRU over a padded batch from h0 = 0.

    Padded steps keep the previous state and emit zeros.

    Returns:
        Tuple[Tensor, Tensor]: States (B, T, n) and the state after the last real frame
    """
    batch, frames = x.shape[0], x.shape[1]
    hidden = params[f"{prefix}.U_z"].shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    outputs = [None] * frames
    order = range(frames - 1, -1, -1) if reverse else range(frames)
    for t in order:
        keep = mask[:, t : t + 1].astype(np.float64)
        h_new = gru_cell_step(T.select(x, t, axis=1), h, params, prefix)
        if keep.all():
            h = h_new
            outputs[t] = h
        else:
            h = keep * h_new + (1.0 - keep) * h
            outputs[t] = keep * h
    return T.stack(outputs, axis=1), h


class MotionEncoder(Protocol):
    """Protocol for encoder families"""

    def parameter_shapes(self, cfg: EncoderConfig) -> ParameterSpec:
        ...

    def encode(
        self, x: Tensor, mask: np.ndarray, params: Mapping[str, Tensor]
    ) -> Tuple[Tensor, Optional[Tensor]]:
        ...


class GRUEncoder:
    """Forward recurrence; row t sees frames 0..t only"""

    def parameter_shapes(self, cfg: EncoderConfig) -> ParameterSpec:
        return gru_parameter_shapes("enc.fwd", cfg.input_dim, cfg.hidden_dim)

    def encode(self, x, mask, params):
        return run_gru(x, mask, params, "enc.fwd")


class BiGRUEncoder:
    """Forward and backward states concatenated per frame"""

    def parameter_shapes(self, cfg: EncoderConfig) -> ParameterSpec:
        spec = gru_parameter_shapes("enc.fwd", cfg.input_dim, cfg.hidden_dim)
        spec.update(gru_parameter_shapes("enc.bwd", cfg.input_dim, cfg.hidden_dim))
        return spec

    def encode(self, x, mask, params):
        forward, final = run_gru(x, mask, params, "enc.fwd")
        backward, _ = run_gru(x, mask, params, "enc.bwd", reverse=True)
        return T.concat([forward, backward], axis=-1), final


class MLPEncoder:
    """Frame-wise layer stack f_i(x) = tanh(x W_i + b_i)"""

    def parameter_shapes(self, cfg: EncoderConfig) -> ParameterSpec:
        spec: ParameterSpec = {}
        width = cfg.input_dim
        for i, dim in enumerate(cfg.mlp_dims):
            spec[f"enc.mlp.{i}.W"] = ((width, dim), width)
            spec[f"enc.mlp.{i}.b"] = ((dim,), width)
            width = dim
        return spec

    def encode(self, x, mask, params):
        out = x
        i = 0
        while f"enc.mlp.{i}.W" in params:
            out = T.tanh(out @ params[f"enc.mlp.{i}.W"] + params[f"enc.mlp.{i}.b"])
            i += 1
        if not mask.all():
            out = out * mask[..., None].astype(np.float64)
        return out, None


class EncoderFactory:
    """Factory class for motion encoders"""

    _encoders: Dict[EncoderKind, MotionEncoder] = {
        EncoderKind.GRU: GRUEncoder(),
        EncoderKind.BIGRU: BiGRUEncoder(),
        EncoderKind.MLP: MLPEncoder(),
    }

    @classmethod
    def get_encoder(cls, kind) -> MotionEncoder:
        try:
            kind = EncoderKind(kind)
        except ValueError:
            raise ValueError(f"Unsupported encoder kind: {kind}")
        return cls._encoders[kind]

    @classmethod
    def get_supported_kinds(cls) -> list:
        return [kind.value for kind in cls._encoders]


def encoder_parameter_count(cfg: EncoderConfig) -> int:
    """Closed-form parameter count, see module docstring"""
    w, n = cfg.input_dim, cfg.hidden_dim
    if cfg.kind == EncoderKind.MLP:
        total, width = 0, w
        for dim in cfg.mlp_dims:
            total += width * dim + dim
            width = dim
        return total
    return cfg.direction_multiplier * 3 * (w * n + n * n + n)


def encode(
    motion,
    cfg: EncoderConfig,
    params: Mapping[str, Tensor],
    lengths: Optional[np.ndarray] = None,
) -> EncoderOutputs:
    """
    Encode one motion (T, w) or a padded batch (B, T, w).

    Args:
        motion: Frames; a Tensor keeps its tape
        cfg (EncoderConfig): Encoder configuration
        params (Mapping[str, Tensor]): Parameter tensors
        lengths (Optional[np.ndarray]): True frame counts, full length when omitted

    Returns:
        EncoderOutputs: States, lengths and the final forward state for GRU kinds

    Raises:
        DimensionError: On an empty motion or a frame width other than ``input_dim``
    """
    x = T.as_tensor(motion)
    if x.ndim == 2:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[1] == 0:
        raise DimensionError(f"motion must hold at least one frame, got shape {x.shape}")
    if x.shape[2] != cfg.input_dim:
        raise DimensionError(f"frame width {x.shape[2]} does not match {cfg.input_dim}")

    batch, frames = x.shape[0], x.shape[1]
    if lengths is None:
        lengths = np.full(batch, frames, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (batch,) or lengths.min() < 1 or lengths.max() > frames:
        raise DimensionError(f"lengths {lengths.tolist()} do not fit {frames} frames")

    mask = np.arange(frames)[None, :] < lengths[:, None]
    states, final = EncoderFactory.get_encoder(cfg.kind).encode(x, mask, params)
    return EncoderOutputs(states=states, lengths=lengths, final=final)
