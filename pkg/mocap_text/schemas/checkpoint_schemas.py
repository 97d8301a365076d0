from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from mocap_text.schemas.model_schemas import ModelConfig
from mocap_text.schemas.training_schemas import TrainingConfig


class ParameterRecord(BaseModel):
    """Named tensor; values are space-separated 17-significant-digit decimals"""

    name: str
    shape: List[int]
    values: str


class NormalizationRecord(BaseModel):
    mean: str
    std: str


class CheckpointDocument(BaseModel):
    """Self-describing model container"""

    format_version: int
    model: ModelConfig
    training: Optional[TrainingConfig] = None
    vocabulary: List[str] = Field(..., description="Words in id order")
    word_counts: Dict[str, int] = Field(default_factory=dict)
    normalization: Optional[NormalizationRecord] = None
    parameters: List[ParameterRecord]
