import json
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from mocap_text.exceptions import CheckpointVersionError, ConfigError
from mocap_text.models.caption_model import CaptionModel
from mocap_text.models.decoder_model import model_parameter_shapes
from mocap_text.models.sample_model import Normalization
from mocap_text.models.vocabulary_model import Vocabulary
from mocap_text.schemas.checkpoint_schemas import (
    CheckpointDocument,
    NormalizationRecord,
    ParameterRecord,
)
from mocap_text.schemas.training_schemas import TrainingConfig

FORMAT_VERSION = 1

PathLike = Union[str, Path]


def encode_values(values: np.ndarray) -> str:
    """Row-major values as 17-significant-digit decimals, which reload bit-exactly"""
    return " ".join(format(float(x), ".17g") for x in np.asarray(values).ravel())


def decode_values(text: str, shape) -> np.ndarray:
    values = np.array(text.split(), dtype=np.float64)
    return values.reshape(tuple(shape))


def to_document(model: CaptionModel, training: Optional[TrainingConfig] = None) -> CheckpointDocument:
    normalization = None
    if model.normalization is not None:
        normalization = NormalizationRecord(
            mean=encode_values(model.normalization.mean),
            std=encode_values(model.normalization.std),
        )
    return CheckpointDocument(
        format_version=FORMAT_VERSION,
        model=model.config,
        training=training,
        vocabulary=list(model.vocabulary.words),
        word_counts=dict(model.vocabulary.counts),
        normalization=normalization,
        parameters=[
            ParameterRecord(name=name, shape=list(value.shape), values=encode_values(value))
            for name, value in model.params.items()
        ],
    )


def save_checkpoint(
    model: CaptionModel, path: PathLike, training: Optional[TrainingConfig] = None
) -> Path:
    """
    Write a self-describing JSON checkpoint.

    Args:
        model (CaptionModel): Model to save
        path (PathLike): Target file
        training (Optional[TrainingConfig]): Run settings recorded alongside

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = to_document(model, training)
    path.write_text(json.dumps(document.model_dump(mode="json"), indent=1) + "\n", encoding="utf-8")
    logger.info(f"Saved checkpoint with {model.parameter_count} parameters to {path}")
    return path


def load_checkpoint(path: PathLike) -> Tuple[CaptionModel, Optional[TrainingConfig]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Returns:
        Tuple[CaptionModel, Optional[TrainingConfig]]: Model and recorded run settings

    Raises:
        FileNotFoundError: If the file does not exist
        CheckpointVersionError: If the format version is not supported
        ConfigError: If the document is malformed or shapes do not match its config
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ConfigError(f"checkpoint {path} is not valid JSON: {e}")
    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}"
        )
    try:
        document = CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"checkpoint {path} is malformed: {e.errors()[0]['msg']}")

    vocabulary = Vocabulary(words=document.vocabulary, counts=document.word_counts)
    params = {
        record.name: decode_values(record.values, record.shape)
        for record in document.parameters
    }
    expected = model_parameter_shapes(document.model, vocabulary.size)
    for name, (shape, _) in expected.items():
        if name not in params or params[name].shape != tuple(shape):
            raise ConfigError(f"checkpoint {path} parameter {name} missing or misshapen")
    if set(params) != set(expected):
        raise ConfigError(f"checkpoint {path} has unexpected parameters")

    normalization = None
    if document.normalization is not None:
        normalization = Normalization(
            mean=decode_values(document.normalization.mean, (-1,)),
            std=decode_values(document.normalization.std, (-1,)),
        )
    model = CaptionModel(document.model, vocabulary, params, normalization)
    return model, document.training
