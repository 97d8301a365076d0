from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from mocap_text.config import settings
from mocap_text.exceptions import NotAlignableError, SegmentationError, UnsupportedModeError
from mocap_text.models.generation_model import GenerationResult
from mocap_text.models.segment_model import (
    GroundTruthAnnotation,
    NotAlignable,
    SegmentationResult,
    SegmentInterval,
)
from mocap_text.models.vocabulary_model import EOS
from mocap_text.schemas.report_schemas import SegmentationRecord, SegmentationReport

Alignment = Union[SegmentationResult, NotAlignable]


@dataclass
class SampleScores:
    """Per-sample inputs to the corpus aggregate"""

    sample_id: str
    predicted: List[SegmentInterval]
    truth: List[SegmentInterval]
    positions: Optional[Sequence[float]] = None
    boundaries: Optional[List[int]] = None


def language_segmentation(words: Sequence[str], action_words: Sequence[str]) -> Alignment:
    """
    Locate each action word in order in a predicted sentence.

    k_m is the first occurrence of w_m after k_{m-1}; the final segment runs
    through the <eos> position k_e.

    Args:
        words (Sequence[str]): Predicted words, ending in <eos>
        action_words (Sequence[str]): Annotated action words in order

    Returns:
        Alignment: A ``SegmentationResult`` without motion spans, or ``NotAlignable``
    """
    if EOS not in words:
        return NotAlignable("prediction has no <eos>")
    k_end = list(words).index(EOS)
    if not action_words:
        return NotAlignable("annotation has no action words")

    k_indices: List[int] = []
    cursor = 0
    for word in action_words:
        try:
            k = list(words[:k_end]).index(word, cursor)
        except ValueError:
            return NotAlignable(f"action word '{word}' missing after index {cursor}")
        k_indices.append(k)
        cursor = k + 1
    return SegmentationResult(k_indices=k_indices, k_end=k_end)


def motion_segmentation(
    word_segments: Sequence[Tuple[int, int]], k_indices: Sequence[int], k_end: int
) -> Tuple[List[SegmentInterval], List[bool]]:
    """
    Cover each language segment's word windows with one interval.

    Empty windows are ignored. ``gap`` is True when the member windows leave
    frames of the cover unvisited.

    Returns:
        Tuple: One covering interval and one gap flag per language segment

    Raises:
        SegmentationError: If windows are missing for some tokens, or every
            window of a language segment is empty
    """
    bounds = list(k_indices) + [k_end + 1]
    if bounds[-1] > len(word_segments):
        raise SegmentationError(
            f"{len(word_segments)} word windows cannot cover tokens up to {k_end}"
        )
    covers, gaps = [], []
    for m in range(len(k_indices)):
        members = [
            (int(s), int(e)) for s, e in word_segments[bounds[m] : bounds[m + 1]] if e > s
        ]
        if not members:
            raise SegmentationError(
                f"language segment {m} has only empty word windows "
                f"(tokens {bounds[m]} to {bounds[m + 1] - 1})"
            )
        start = min(s for s, _ in members)
        end = max(e for _, e in members)
        reach, gap = start, False
        for s, e in sorted(members):
            if s > reach:
                gap = True
            reach = max(reach, e)
        covers.append(SegmentInterval(start, end))
        gaps.append(gap)
    return covers, gaps


def segment_generation(
    result: GenerationResult, annotation: GroundTruthAnnotation
) -> Alignment:
    """
    Full segmentation of one generation against its annotation.

    Raises:
        UnsupportedModeError: If the generation has no alignment trace
    """
    if result.trace.segments is None:
        raise UnsupportedModeError("segmentation needs local attention windows")
    alignment = language_segmentation(result.words, annotation.action_words)
    if isinstance(alignment, NotAlignable):
        return alignment
    covers, gaps = motion_segmentation(
        [tuple(s) for s in result.trace.segments], alignment.k_indices, alignment.k_end
    )
    alignment.motion_segments = covers
    alignment.gaps = gaps
    return alignment


def to_record(sample_id: str, alignment: Alignment) -> SegmentationRecord:
    if isinstance(alignment, NotAlignable):
        return SegmentationRecord(sample_id=sample_id, alignable=False, reason=alignment.reason)
    return SegmentationRecord(
        sample_id=sample_id,
        alignable=True,
        k_indices=alignment.k_indices,
        k_end=alignment.k_end,
        language_segments=alignment.language_segments,
        motion_segments=[s.as_tuple() for s in alignment.motion_segments],
        gaps=alignment.gaps,
    )


def from_record(record: SegmentationRecord) -> Alignment:
    if not record.alignable:
        return NotAlignable(record.reason or "not alignable")
    return SegmentationResult(
        k_indices=list(record.k_indices),
        k_end=record.k_end,
        motion_segments=[SegmentInterval(s, e) for s, e in record.motion_segments],
        gaps=list(record.gaps),
    )


def _check_counts(predicted: Sequence[SegmentInterval], truth: Sequence[SegmentInterval]):
    if len(predicted) != len(truth):
        raise NotAlignableError(
            f"{len(predicted)} predicted segments against {len(truth)} annotated"
        )
    if not truth:
        raise SegmentationError("score undefined for zero segments")


def iou(p: SegmentInterval, g: SegmentInterval) -> float:
    union = p.union_size(g)
    return p.intersection(g) / union if union else 0.0


def iop(p: SegmentInterval, g: SegmentInterval) -> float:
    return p.intersection(g) / p.length if p.length else 0.0


def _threshold_score(values: List[float], theta: Optional[float]) -> float:
    if theta is None:
        return float(np.mean(values))
    return float(np.mean([1.0 if v >= theta else 0.0 for v in values]))


def iou_score(
    predicted: Sequence[SegmentInterval],
    truth: Sequence[SegmentInterval],
    theta: Optional[float] = None,
) -> float:
    """
    Fraction of segments with IoU >= theta, or mean IoU when ``theta`` is None.

    Raises:
        NotAlignableError: If segment counts differ
        SegmentationError: If there are no segments
    """
    _check_counts(predicted, truth)
    return _threshold_score([iou(p, g) for p, g in zip(predicted, truth)], theta)


def iop_score(
    predicted: Sequence[SegmentInterval],
    truth: Sequence[SegmentInterval],
    theta: Optional[float] = None,
) -> float:
    """As ``iou_score`` with IoP = |P & G| / |P|; an empty P scores 0"""
    _check_counts(predicted, truth)
    return _threshold_score([iop(p, g) for p, g in zip(predicted, truth)], theta)


def element_of_score(
    positions: Optional[Sequence[float]],
    boundaries: Sequence[int],
    truth: Sequence[SegmentInterval],
) -> float:
    """
    Share of words whose rounded position falls in their segment's interval.

    Each segment contributes the mean over its words, so the score is in [0, 1].

    Args:
        positions (Optional[Sequence[float]]): Alignment position per token
        boundaries (Sequence[int]): k_0, ..., k_{n_s-1}, k_e + 1
        truth (Sequence[SegmentInterval]): Ground truth per segment

    Raises:
        UnsupportedModeError: If ``positions`` is None (soft attention)
    """
    if positions is None:
        raise UnsupportedModeError("element-of score needs alignment positions")
    n_segments = len(boundaries) - 1
    if n_segments != len(truth):
        raise NotAlignableError(f"{n_segments} language segments against {len(truth)} annotated")
    if n_segments == 0:
        raise SegmentationError("score undefined for zero segments")
    per_segment = []
    for m in range(n_segments):
        members = positions[boundaries[m] : boundaries[m + 1]]
        hits = [truth[m].contains(int(np.floor(p + 0.5))) for p in members]
        per_segment.append(float(np.mean(hits)) if hits else 0.0)
    return float(np.mean(per_segment))


def theta_grid(steps: Optional[int] = None) -> List[float]:
    return [float(t) for t in np.linspace(0.0, 1.0, steps or settings.theta_steps)]


def common_alignable_ids(alignments: Iterable[Dict[str, Alignment]]) -> List[str]:
    """Sample ids alignable in every run, for comparing models on one subset"""
    common: Optional[set] = None
    for run in alignments:
        ids = {sid for sid, a in run.items() if isinstance(a, SegmentationResult)}
        common = ids if common is None else common & ids
    return sorted(common or [])


def corpus_scores(
    alignments: Dict[str, Alignment],
    annotations: Dict[str, GroundTruthAnnotation],
    positions: Optional[Dict[str, Optional[Sequence[float]]]] = None,
    include_ids: Optional[Iterable[str]] = None,
    theta_steps: Optional[int] = None,
) -> SegmentationReport:
    """
    Mean segmentation scores over alignable samples.

    Args:
        alignments (Dict[str, Alignment]): Per-sample segmentation
        annotations (Dict[str, GroundTruthAnnotation]): Ground truth per sample
        positions (Optional[Dict]): Per-sample alignment positions for element-of
        include_ids (Optional[Iterable[str]]): Restrict scoring to these samples
        theta_steps (Optional[int]): Threshold grid size over [0, 1]

    Returns:
        SegmentationReport: Threshold curves, continuous scores, N and exclusions

    Raises:
        SegmentationError: If no sample is alignable
    """
    wanted = set(include_ids) if include_ids is not None else None
    thresholds = theta_grid(theta_steps)
    scored: List[SampleScores] = []
    excluded: List[str] = []
    for sample_id in sorted(alignments):
        if wanted is not None and sample_id not in wanted:
            continue
        alignment = alignments[sample_id]
        annotation = annotations.get(sample_id)
        if (
            annotation is None
            or isinstance(alignment, NotAlignable)
            or alignment.n_segments != len(annotation.segments)
        ):
            excluded.append(sample_id)
            continue
        scored.append(
            SampleScores(
                sample_id=sample_id,
                predicted=alignment.motion_segments,
                truth=annotation.segments,
                positions=(positions or {}).get(sample_id),
                boundaries=alignment.boundaries,
            )
        )
    if not scored:
        raise SegmentationError(f"no alignable samples ({len(excluded)} excluded)")

    def curve(score_fn) -> List[float]:
        return [
            float(np.mean([score_fn(s.predicted, s.truth, theta) for s in scored]))
            for theta in thresholds
        ]

    element_of = None
    if all(s.positions is not None for s in scored):
        element_of = float(
            np.mean([element_of_score(s.positions, s.boundaries, s.truth) for s in scored])
        )
    logger.info(f"Scored {len(scored)} samples, excluded {len(excluded)}")
    return SegmentationReport(
        n_samples=len(scored),
        n_excluded=len(excluded),
        excluded_ids=excluded,
        thresholds=thresholds,
        iou_curve=curve(iou_score),
        iop_curve=curve(iop_score),
        iou_continuous=float(np.mean([iou_score(s.predicted, s.truth) for s in scored])),
        iop_continuous=float(np.mean([iop_score(s.predicted, s.truth) for s in scored])),
        element_of=element_of,
    )
