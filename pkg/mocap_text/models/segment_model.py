from dataclasses import dataclass, field
from typing import List, Tuple

from mocap_text.exceptions import SegmentationError


@dataclass(frozen=True)
class SegmentInterval:
    """Half-open integer frame interval [start, end["""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise SegmentationError(f"invalid interval [{self.start},{self.end}[")

    @property
    def length(self) -> int:
        return self.end - self.start

    def contains(self, frame: int) -> bool:
        return self.start <= frame < self.end

    def intersection(self, other: "SegmentInterval") -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def union_size(self, other: "SegmentInterval") -> int:
        return self.length + other.length - self.intersection(other)

    def as_tuple(self) -> Tuple[int, int]:
        return self.start, self.end


@dataclass
class GroundTruthAnnotation:
    """Annotated action words with one motion interval each"""

    action_words: List[str]
    segments: List[SegmentInterval]

    def __post_init__(self):
        if len(self.action_words) != len(self.segments):
            raise SegmentationError("one interval is required per action word")
        for i, segment in enumerate(self.segments):
            if segment.length == 0:
                raise SegmentationError(f"annotation segment {i} is empty")
            if i and segment.start <= self.segments[i - 1].start:
                raise SegmentationError("annotation segments must be ordered")


@dataclass
class SegmentationResult:
    """
    Language segments delimited by action-word indices and their motion spans.

    ``k_indices`` holds k_0 < ... < k_{n_s - 1}; the last language segment runs
    through ``k_end``, the <eos> position.
    """

    k_indices: List[int]
    k_end: int
    motion_segments: List[SegmentInterval] = field(default_factory=list)
    gaps: List[bool] = field(default_factory=list)

    @property
    def n_segments(self) -> int:
        return len(self.k_indices)

    @property
    def boundaries(self) -> List[int]:
        return list(self.k_indices) + [self.k_end + 1]

    @property
    def language_segments(self) -> List[Tuple[int, int]]:
        """Inclusive word-index ranges"""
        bounds = self.boundaries
        return [(bounds[m], bounds[m + 1] - 1) for m in range(self.n_segments)]


@dataclass(frozen=True)
class NotAlignable:
    """Prediction that cannot be matched to its annotation"""

    reason: str
