import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from mocap_text.exceptions import DatasetError, SegmentationError
from mocap_text.models.sample_model import MotionSample, Normalization
from mocap_text.models.segment_model import GroundTruthAnnotation, SegmentInterval
from mocap_text.schemas.data_schemas import (
    AnnotationFileRecord,
    AnnotationRecord,
    MotionRecord,
)
from mocap_text.services.vocabulary_service import tokenize

PathLike = Union[str, Path]


@dataclass
class RecordRejection:
    line: int
    reason: str


@dataclass
class ParseResult:
    samples: List[MotionSample]
    rejections: List[RecordRejection] = field(default_factory=list)


@dataclass
class DatasetSplit:
    train: List[MotionSample]
    val: List[MotionSample]
    test: List[MotionSample]
    seed: int


def _annotation_from_records(records: Sequence[AnnotationRecord]) -> GroundTruthAnnotation:
    return GroundTruthAnnotation(
        action_words=[r.word for r in records],
        segments=[SegmentInterval(r.start, r.end) for r in records],
    )


def record_to_sample(record: MotionRecord, stride: int = 1) -> MotionSample:
    """
    Convert a validated record, keeping every ``stride``-th frame.

    Annotation intervals are mapped onto the kept frames: start rounds up,
    end rounds up, so a frame stays inside iff its source frame did.

    Raises:
        ValueError: If fewer than two frames remain after striding
    """
    frames = np.asarray(record.frames, dtype=np.float64)[::stride]
    if frames.shape[0] < 2:
        raise ValueError(
            f"{frames.shape[0]} frame left after stride {stride}, need at least 2"
        )
    annotation = None
    if record.annotation:
        annotation = GroundTruthAnnotation(
            action_words=[r.word for r in record.annotation],
            segments=[
                SegmentInterval(
                    math.ceil(r.start / stride),
                    min(frames.shape[0], math.ceil(r.end / stride)),
                )
                for r in record.annotation
            ],
        )
    return MotionSample(
        id=record.id,
        fps=record.fps / stride,
        frames=frames,
        descriptions=list(record.descriptions),
        annotation=annotation,
    )


def sample_to_record(sample: MotionSample) -> MotionRecord:
    annotation = None
    if sample.annotation is not None:
        annotation = [
            AnnotationRecord(word=w, start=s.start, end=s.end)
            for w, s in zip(sample.annotation.action_words, sample.annotation.segments)
        ]
    return MotionRecord(
        id=sample.id,
        fps=sample.fps,
        width=sample.width,
        frames=sample.frames.tolist(),
        descriptions=sample.descriptions,
        annotation=annotation,
    )


def parse_dataset(
    path: PathLike, stride: int = 1, expected_width: Optional[int] = 63
) -> ParseResult:
    """
    Read a line-delimited dataset file.

    Args:
        path (PathLike): Dataset file
        stride (int): Frame downsampling stride
        expected_width (Optional[int]): Required frame width, any width when None

    Returns:
        ParseResult: Valid samples and the rejected lines with reasons

    Raises:
        FileNotFoundError: If the file does not exist
        DatasetError: If ``stride`` is not positive or ids repeat
    """
    if stride < 1:
        raise DatasetError(f"stride must be positive, got {stride}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")

    result = ParseResult(samples=[])
    seen = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = MotionRecord.model_validate(json.loads(line))
                if expected_width is not None and record.width != expected_width:
                    raise ValueError(
                        f"frame width {record.width}, expected {expected_width}"
                    )
                if record.id in seen:
                    raise ValueError(f"duplicate id {record.id}")
                sample = record_to_sample(record, stride)
            except ValidationError as e:
                reason = e.errors()[0]["msg"]
            except (ValueError, SegmentationError) as e:
                reason = str(e)
            else:
                seen.add(record.id)
                result.samples.append(sample)
                continue
            logger.warning(f"{path}:{line_no}: rejected record: {reason}")
            result.rejections.append(RecordRejection(line=line_no, reason=reason))

    logger.info(
        f"Parsed {len(result.samples)} samples from {path} "
        f"({len(result.rejections)} rejected)"
    )
    return result


def write_dataset(samples: Iterable[MotionSample], path: PathLike) -> Path:
    """Write samples one JSON object per line; floats keep their exact repr"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for sample in samples:
            record = sample_to_record(sample)
            handle.write(json.dumps(record.model_dump(exclude_none=True)) + "\n")
    return path


def parse_annotations(path: PathLike) -> Dict[str, GroundTruthAnnotation]:
    """
    Read a ground-truth file of ``{id, annotation: [{word, start, end}]}`` lines.

    Raises:
        FileNotFoundError: If the file does not exist
        DatasetError: On a malformed line
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"annotation file not found: {path}")
    annotations: Dict[str, GroundTruthAnnotation] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = AnnotationFileRecord.model_validate(json.loads(line))
                annotations[record.id] = _annotation_from_records(record.annotation)
            except (ValidationError, ValueError, SegmentationError) as e:
                raise DatasetError(f"{path}:{line_no}: invalid annotation: {e}")
    return annotations


def split_dataset(
    samples: Sequence[MotionSample],
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 42,
) -> DatasetSplit:
    """
    Shuffle with a seeded generator and cut into train/val/test.

    Raises:
        DatasetError: If fractions are negative or do not sum to 1
    """
    if any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise DatasetError(f"split fractions must be non-negative and sum to 1: {fractions}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(fractions[0] * len(samples)))
    n_val = int(round(fractions[1] * len(samples)))
    picked = [samples[i] for i in order]
    return DatasetSplit(
        train=picked[:n_train],
        val=picked[n_train : n_train + n_val],
        test=picked[n_train + n_val :],
        seed=seed,
    )


def compute_normalization(samples: Sequence[MotionSample]) -> Normalization:
    """
    Per-coordinate mean and std over every frame of ``samples``.

    Constant coordinates get std 1 so normalization stays finite.

    Raises:
        DatasetError: If ``samples`` is empty
    """
    if not samples:
        raise DatasetError("cannot normalize an empty split")
    frames = np.concatenate([s.frames for s in samples], axis=0)
    std = frames.std(axis=0)
    std[std < 1e-8] = 1.0
    return Normalization(mean=frames.mean(axis=0), std=std)


def training_pairs(samples: Iterable[MotionSample]) -> List[Tuple[MotionSample, List[str]]]:
    """One (motion, tokens) pair per description"""
    return [(s, tokenize(d)) for s in samples for d in s.descriptions]
