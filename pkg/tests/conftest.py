import os
import sys

import numpy as np
import pytest

# Add the project root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


@pytest.fixture
def rng():
    """Seeded generator for reproducible random inputs"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_vocab():
    """Vocabulary with the reserved tokens and a few words"""
    from mocap_text.models.vocabulary_model import SPECIAL_TOKENS, Vocabulary

    return Vocabulary(words=list(SPECIAL_TOKENS) + ["a", "person", "walks", "turns"])


def make_model_config(
    encoder="mlp",
    attention="local_recurrent",
    input_dim=6,
    hidden=5,
    embedding=4,
    half_width=2,
    overlap=1.0,
    mask=True,
    causal=False,
    max_length=8,
):
    """Small ModelConfig for fast forward and gradient tests"""
    from mocap_text.schemas.model_schemas import (
        AttentionConfig,
        DecoderConfig,
        EncoderConfig,
        ModelConfig,
    )

    if encoder == "mlp":
        enc = EncoderConfig(kind="mlp", input_dim=input_dim, mlp_layers=2, mlp_dims=[7, hidden])
    else:
        enc = EncoderConfig(kind=encoder, input_dim=input_dim, hidden_dim=hidden)
    return ModelConfig(
        encoder=enc,
        attention=AttentionConfig(
            mode=attention, half_width=half_width, overlap=overlap, mask=mask, causal=causal
        ),
        decoder=DecoderConfig(hidden_dim=hidden, embedding_dim=embedding, max_length=max_length),
    )


@pytest.fixture
def model_config_factory():
    return make_model_config


@pytest.fixture
def tiny_model(tiny_vocab):
    """Untrained recurrent-local model over 6-wide frames"""
    from mocap_text.models.caption_model import CaptionModel

    return CaptionModel.create(make_model_config(), tiny_vocab, seed=3)


@pytest.fixture
def motion(rng):
    """Random 12-frame motion of width 6"""
    return rng.normal(size=(12, 6))


@pytest.fixture
def synth_samples():
    """Small deterministic synthetic dataset"""
    from mocap_text.schemas.data_schemas import ScenarioConfig
    from mocap_text.services.synth_service import synth_generate

    return synth_generate(ScenarioConfig(n_samples=6, noise=0.0), seed=11)
