from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mocap_text.core.tensor import Tensor
from mocap_text.models.attention_model import precompute_keys
from mocap_text.models.decoder_model import model_parameter_shapes
from mocap_text.models.encoder_model import EncoderOutputs, encode
from mocap_text.models.params import Parameters, initialize, parameter_count
from mocap_text.models.sample_model import Normalization
from mocap_text.models.vocabulary_model import Vocabulary
from mocap_text.schemas.model_schemas import ModelConfig


def pad_motions(motions: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack variable-length (T_i, w) motions into (B, max T, w) with zero padding"""
    lengths = np.array([m.shape[0] for m in motions], dtype=np.int64)
    width = motions[0].shape[1]
    batch = np.zeros((len(motions), int(lengths.max()), width))
    for i, motion in enumerate(motions):
        batch[i, : motion.shape[0]] = motion
    return batch, lengths


@dataclass
class CaptionModel:
    """Motion-to-text network: configuration, vocabulary and parameter values"""

    config: ModelConfig
    vocabulary: Vocabulary
    params: Parameters
    normalization: Optional[Normalization] = None

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        vocabulary: Vocabulary,
        seed: int,
        normalization: Optional[Normalization] = None,
    ) -> "CaptionModel":
        spec = model_parameter_shapes(config, vocabulary.size)
        return cls(config, vocabulary, initialize(spec, seed), normalization)

    @property
    def parameter_count(self) -> int:
        return parameter_count(self.params)

    def copy(self) -> "CaptionModel":
        return CaptionModel(
            self.config,
            self.vocabulary,
            {k: v.copy() for k, v in self.params.items()},
            self.normalization,
        )

    def prepare(self, motions: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Normalize and pad raw motions"""
        if self.normalization is not None:
            motions = [self.normalization.apply(m) for m in motions]
        return pad_motions(motions)

    def encode(
        self,
        motions: List[np.ndarray],
        tensors: Mapping[str, Tensor],
    ) -> Tuple[EncoderOutputs, Tensor]:
        """Encode a batch and precompute its attention keys"""
        batch, lengths = self.prepare(motions)
        enc = encode(batch, self.config.encoder, tensors, lengths)
        return enc, precompute_keys(enc, tensors)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: value.shape for name, value in self.params.items()}
