from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from mocap_text import __version__
from mocap_text.schemas.model_schemas import ModelConfig
from mocap_text.schemas.training_schemas import TrainingConfig


class GenerationRecord(BaseModel):
    """One decoded hypothesis for one sample"""

    sample_id: str
    rank: int = 0
    words: List[str]
    token_ids: List[int]
    log_probs: List[float]
    score: float
    normalized_score: float
    frame_count: int
    positions: Optional[List[float]] = None
    segments: Optional[List[Tuple[int, int]]] = None
    attention: List[List[float]]
    raw_attention: List[List[float]]


class SegmentationRecord(BaseModel):
    """Language and motion segmentation of one generation"""

    sample_id: str
    alignable: bool
    reason: Optional[str] = None
    k_indices: List[int] = Field(default_factory=list)
    k_end: Optional[int] = None
    language_segments: List[Tuple[int, int]] = Field(default_factory=list)
    motion_segments: List[Tuple[int, int]] = Field(default_factory=list)
    gaps: List[bool] = Field(default_factory=list)


class SegmentationReport(BaseModel):
    """Corpus segmentation scores over a threshold grid"""

    n_samples: int
    n_excluded: int
    excluded_ids: List[str]
    thresholds: List[float]
    iou_curve: List[float]
    iop_curve: List[float]
    iou_continuous: float
    iop_continuous: float
    element_of: Optional[float] = None


class TextScoreReport(BaseModel):
    """Corpus text-generation scores"""

    n_samples: int
    bleu: Dict[str, float]
    brevity_penalty: float
    average_length: float
    semantic_score: Optional[float] = None
    per_sample_similarity: Optional[List[float]] = None


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation, written as the run manifest"""

    command: str
    argv: List[str]
    inputs: Dict[str, str] = Field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    model: Optional[ModelConfig] = None
    training: Optional[TrainingConfig] = None
    options: Dict[str, Any] = Field(default_factory=dict)
    version: str = __version__
