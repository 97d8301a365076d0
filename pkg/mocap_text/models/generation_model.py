from dataclasses import dataclass
from typing import List, Optional

import numpy as np


@dataclass
class AttentionMap:
    """Per-token attention over frames"""

    rows: np.ndarray  # (L, T) final weights a_t
    raw_rows: np.ndarray  # (L, T) softmax before windowing


@dataclass
class AlignmentTrace:
    """Per-token positions and windows, local modes only"""

    positions: Optional[np.ndarray] = None  # (L,)
    segments: Optional[np.ndarray] = None  # (L, 2)


@dataclass
class GenerationResult:
    tokens: List[int]
    words: List[str]
    attention: AttentionMap
    trace: AlignmentTrace
    log_probs: List[float]
    score: float
    normalized_score: float

    @property
    def length(self) -> int:
        return len(self.tokens)
