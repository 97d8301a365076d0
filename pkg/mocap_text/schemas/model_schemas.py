from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from mocap_text.config import settings


class EncoderKind(str, Enum):
    """Motion encoder families"""

    GRU = "gru"
    BIGRU = "bigru"
    MLP = "mlp"


class AttentionMode(str, Enum):
    """Attention formulations"""

    SOFT = "soft"
    LOCAL = "local"
    LOCAL_RECURRENT = "local_recurrent"


class EncoderConfig(BaseModel):
    """Schema for the motion encoder"""

    kind: EncoderKind = Field(EncoderKind.MLP, description="Encoder family")
    input_dim: int = Field(63, ge=1, description="Per-frame feature width")
    hidden_dim: int = Field(64, ge=1, description="Per-direction GRU state size n")
    mlp_layers: int = Field(2, ge=1, description="MLP layer count L")
    mlp_dims: List[int] = Field(
        default_factory=lambda: [64, 64], description="MLP layer widths d_i"
    )

    @field_validator("mlp_dims")
    @classmethod
    def validate_mlp_dims(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("MLP widths must be positive")
        return v

    @model_validator(mode="after")
    def validate_layer_count(self):
        """One width per MLP layer"""
        if self.kind == EncoderKind.MLP and len(self.mlp_dims) != self.mlp_layers:
            raise ValueError(
                f"mlp_dims has {len(self.mlp_dims)} widths for {self.mlp_layers} layers"
            )
        return self

    @property
    def direction_multiplier(self) -> int:
        return 2 if self.kind == EncoderKind.BIGRU else 1

    @property
    def output_dim(self) -> int:
        if self.kind == EncoderKind.MLP:
            return self.mlp_dims[-1]
        return self.direction_multiplier * self.hidden_dim


class AttentionConfig(BaseModel):
    """Schema for the attention mechanism"""

    mode: AttentionMode = Field(AttentionMode.LOCAL_RECURRENT)
    half_width: int = Field(5, ge=1, description="Window half-width D in frames")
    gaussian_width: Optional[float] = Field(
        None, gt=0, description="Gaussian width r in frames, D/2 when unset"
    )
    overlap: float = Field(
        1.0, ge=0.0, le=1.0, description="Overlap alpha between successive windows"
    )
    mask: bool = Field(True, description="Truncate weights outside the window")
    causal: bool = Field(False, description="Use the window [p_t - D, p_t[")

    @property
    def epsilon(self) -> float:
        return (1.0 - self.overlap) * 2 * self.half_width

    @property
    def r(self) -> float:
        if self.gaussian_width is not None:
            return self.gaussian_width
        return self.half_width / 2.0


class DecoderConfig(BaseModel):
    """Schema for the GRU decoder"""

    hidden_dim: int = Field(64, ge=1, description="Decoder state size n'")
    embedding_dim: int = Field(64, ge=1)
    max_length: int = Field(
        default_factory=lambda: settings.max_decode_length, ge=1
    )
    length_penalty: float = Field(
        default_factory=lambda: settings.beam_length_penalty,
        ge=0.0,
        description="Beam score is logprob / tokens**length_penalty",
    )


class ModelConfig(BaseModel):
    """Full network configuration"""

    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    attention: AttentionConfig = Field(default_factory=AttentionConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)

    @model_validator(mode="after")
    def validate_encoder_width(self):
        """MLP output width d_enc equals the decoder hidden size"""
        if (
            self.encoder.kind == EncoderKind.MLP
            and self.encoder.mlp_dims[-1] != self.decoder.hidden_dim
        ):
            raise ValueError(
                f"MLP output width {self.encoder.mlp_dims[-1]} must equal "
                f"decoder hidden size {self.decoder.hidden_dim}"
            )
        return self
