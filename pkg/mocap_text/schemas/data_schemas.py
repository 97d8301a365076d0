from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class AnnotationRecord(BaseModel):
    """One annotated primitive: action word and half-open frame interval"""

    word: str = Field(..., min_length=1)
    start: int = Field(..., ge=0)
    end: int = Field(..., ge=1)

    @model_validator(mode="after")
    def validate_interval(self):
        if self.start >= self.end:
            raise ValueError(
                f"annotation '{self.word}' has empty interval [{self.start},{self.end}["
            )
        return self


class MotionRecord(BaseModel):
    """One line of a dataset file"""

    id: str = Field(..., min_length=1)
    fps: float = Field(..., gt=0)
    width: int = Field(63, ge=1)
    frames: List[List[float]]
    descriptions: List[str]
    annotation: Optional[List[AnnotationRecord]] = None

    @field_validator("descriptions")
    @classmethod
    def validate_descriptions(cls, v):
        if not v:
            raise ValueError("at least one description is required")
        if any(not d.strip() for d in v):
            raise ValueError("descriptions must not be empty")
        return v

    @model_validator(mode="after")
    def validate_frames(self):
        """Frame count, frame width and annotation order"""
        if len(self.frames) < 2:
            raise ValueError(f"motion needs at least 2 frames, got {len(self.frames)}")
        for i, row in enumerate(self.frames):
            if len(row) != self.width:
                raise ValueError(
                    f"frame {i} has width {len(row)}, expected {self.width}"
                )
        if self.annotation:
            previous = -1
            for item in self.annotation:
                if item.start <= previous:
                    raise ValueError("annotation segments must be ordered by start")
                if item.end > len(self.frames):
                    raise ValueError(
                        f"annotation '{item.word}' ends at {item.end} beyond "
                        f"{len(self.frames)} frames"
                    )
                previous = item.start
        return self


class ScenarioConfig(BaseModel):
    """Schema for procedural dataset synthesis"""

    n_samples: int = Field(100, ge=1)
    min_primitives: int = Field(1, ge=1, le=3)
    max_primitives: int = Field(3, ge=1, le=3)
    primitives: List[str] = Field(
        default_factory=lambda: [
            "walk-forward",
            "walk-backward",
            "turn",
            "wave",
            "kick",
            "stomp",
            "squat",
        ]
    )
    compositions: Optional[List[List[str]]] = Field(
        None, description="Fixed primitive sequences, cycled over samples"
    )
    fps: float = Field(20.0, gt=0)
    noise: float = Field(0.005, ge=0.0)
    idle_min: int = Field(3, ge=0)
    idle_max: int = Field(6, ge=0)

    @model_validator(mode="after")
    def validate_ranges(self):
        if self.min_primitives > self.max_primitives:
            raise ValueError("min_primitives cannot exceed max_primitives")
        if self.idle_min > self.idle_max:
            raise ValueError("idle_min cannot exceed idle_max")
        if not self.primitives:
            raise ValueError("at least one primitive is required")
        for sequence in self.compositions or []:
            if not 1 <= len(sequence) <= 3:
                raise ValueError("compositions hold 1 to 3 primitives")
        return self


class AnnotationFileRecord(BaseModel):
    """One line of a standalone ground-truth annotation file"""

    id: str = Field(..., min_length=1)
    annotation: List[AnnotationRecord] = Field(..., min_length=1)
