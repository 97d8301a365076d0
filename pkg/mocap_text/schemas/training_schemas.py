from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from mocap_text.config import settings


class TeacherForcingMode(str, Enum):
    """Granularity of the teacher-forcing coin flip"""

    STEP = "step"
    SEQUENCE = "sequence"


class TrainingConfig(BaseModel):
    """Schema for a training run"""

    learning_rate: float = Field(1e-3, ge=0.0)
    teacher_forcing_ratio: float = Field(0.5, ge=0.0, le=1.0)
    teacher_forcing_mode: TeacherForcingMode = Field(TeacherForcingMode.STEP)
    beta: float = Field(1.0, ge=0.0, description="Length-normalization exponent")
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(50, ge=0)
    seed: int = Field(default_factory=lambda: settings.seed)
    grad_clip: Optional[float] = Field(5.0, gt=0.0, description="Max global grad norm")
