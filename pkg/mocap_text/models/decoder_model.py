"""
GRU decoder with attention.

One step embeds the previous word, attends with the previous state, advances
the GRU and projects ``[y_{t-1}; h_t; c_t]`` to vocabulary logits.
"""

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from mocap_text.core import tensor as T
from mocap_text.core.tensor import Tensor
from mocap_text.exceptions import InvalidTokenError
from mocap_text.models.attention_model import (
    AttentionFactory,
    AttentionStep,
    attention_parameter_shapes,
)
from mocap_text.models.encoder_model import (
    EncoderFactory,
    EncoderOutputs,
    gru_cell_step,
    gru_parameter_shapes,
)
from mocap_text.models.params import ParameterSpec
from mocap_text.schemas.model_schemas import AttentionMode, EncoderKind, ModelConfig


@dataclass
class DecoderState:
    h: Tensor  # (B, n')
    p_prev: Optional[Tensor] = None  # (B,), recurrent local attention only
    step: int = 0


@dataclass
class StepOutput:
    logits: Tensor  # (B, V)
    state: DecoderState
    attention: AttentionStep


def needs_init_projection(cfg: ModelConfig) -> bool:
    return (
        cfg.encoder.kind != EncoderKind.MLP
        and cfg.encoder.hidden_dim != cfg.decoder.hidden_dim
    )


def model_parameter_shapes(cfg: ModelConfig, vocab_size: int) -> ParameterSpec:
    """Every parameter of the network, in initialization order"""
    n_dec, emb = cfg.decoder.hidden_dim, cfg.decoder.embedding_dim
    d_enc = cfg.encoder.output_dim

    spec = EncoderFactory.get_encoder(cfg.encoder.kind).parameter_shapes(cfg.encoder)
    spec.update(attention_parameter_shapes(cfg.attention, n_dec, d_enc))
    spec["dec.embedding"] = ((vocab_size, emb), emb)
    spec.update(gru_parameter_shapes("dec.gru", emb, n_dec))
    if needs_init_projection(cfg):
        n_enc = cfg.encoder.hidden_dim
        spec["dec.init.W"] = ((n_enc, n_dec), n_enc)
        spec["dec.init.b"] = ((n_dec,), n_enc)
    joint = emb + n_dec + d_enc
    spec["out.W"] = ((joint, vocab_size), joint)
    spec["out.b"] = ((vocab_size,), joint)
    return spec


def initial_state(
    enc: EncoderOutputs, cfg: ModelConfig, params: Mapping[str, Tensor]
) -> DecoderState:
    """Zero state for the MLP encoder, projected final forward state otherwise"""
    if enc.final is None:
        h = Tensor(np.zeros((enc.batch_size, cfg.decoder.hidden_dim)))
    elif "dec.init.W" in params:
        h = enc.final @ params["dec.init.W"] + params["dec.init.b"]
    else:
        h = enc.final
    p_prev = None
    if cfg.attention.mode == AttentionMode.LOCAL_RECURRENT:
        p_prev = Tensor(np.zeros(enc.batch_size))
    return DecoderState(h=h, p_prev=p_prev, step=0)


def decode_step(
    state: DecoderState,
    prev_tokens,
    enc: EncoderOutputs,
    keys: Tensor,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
) -> StepOutput:
    """
    Advance the decoder by one token for every batch row.

    Args:
        state (DecoderState): Current state
        prev_tokens: Previous word ids (B,)
        enc (EncoderOutputs): Encoded motion
        keys (Tensor): Precomputed attention keys
        params (Mapping[str, Tensor]): Parameter tensors
        cfg (ModelConfig): Network configuration

    Returns:
        StepOutput: Logits, advanced state and the attention of this step

    Raises:
        InvalidTokenError: If a token id lies outside the vocabulary
    """
    table = params["dec.embedding"]
    vocab_size = table.shape[0]
    prev_tokens = np.asarray(prev_tokens, dtype=np.int64).reshape(-1)
    bad = prev_tokens[(prev_tokens < 0) | (prev_tokens >= vocab_size)]
    if bad.size:
        raise InvalidTokenError(
            f"token id {int(bad[0])} outside vocabulary of size {vocab_size}"
        )

    embedded = T.take(table, prev_tokens)
    mechanism = AttentionFactory.get_mechanism(cfg.attention.mode)
    attention = mechanism.attend(state.h, state.p_prev, enc, keys, params, cfg.attention)
    h = gru_cell_step(embedded, state.h, params, "dec.gru")
    joint = T.concat([embedded, h, attention.context], axis=-1)
    logits = joint @ params["out.W"] + params["out.b"]

    p_prev = attention.position if attention.position is not None else state.p_prev
    if cfg.attention.mode != AttentionMode.LOCAL_RECURRENT:
        p_prev = None
    return StepOutput(
        logits=logits,
        state=DecoderState(h=h, p_prev=p_prev, step=state.step + 1),
        attention=attention,
    )
