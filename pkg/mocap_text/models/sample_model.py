from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from mocap_text.models.segment_model import GroundTruthAnnotation


@dataclass
class MotionSample:
    """One motion with its descriptions"""

    id: str
    fps: float
    frames: np.ndarray  # (T, width)
    descriptions: List[str]
    annotation: Optional[GroundTruthAnnotation] = None

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])

    @property
    def width(self) -> int:
        return int(self.frames.shape[1])


@dataclass
class Normalization:
    """Per-coordinate standardization fitted on a training split"""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.std
