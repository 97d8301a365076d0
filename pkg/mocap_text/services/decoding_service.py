import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from mocap_text.core import tensor as T
from mocap_text.exceptions import DatasetError
from mocap_text.models.caption_model import CaptionModel
from mocap_text.models.decoder_model import DecoderState, StepOutput, decode_step, initial_state
from mocap_text.models.encoder_model import EncoderOutputs
from mocap_text.models.generation_model import AlignmentTrace, AttentionMap, GenerationResult
from mocap_text.models.params import constant_all
from mocap_text.models.vocabulary_model import EOS_ID, SOS_ID
from mocap_text.schemas.report_schemas import GenerationRecord

PathLike = Union[str, Path]


@dataclass
class Hypothesis:
    """Partial decode: tokens so far and the per-step records behind them"""

    state: DecoderState
    tokens: List[int] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    rows: List[np.ndarray] = field(default_factory=list)
    raw_rows: List[np.ndarray] = field(default_factory=list)
    positions: List[float] = field(default_factory=list)
    segments: List[Tuple[int, int]] = field(default_factory=list)
    score: float = 0.0

    @property
    def last_token(self) -> int:
        return self.tokens[-1] if self.tokens else SOS_ID

    def extend(self, out: StepOutput, token: int, log_prob: float) -> "Hypothesis":
        att = out.attention
        positions, segments = self.positions, self.segments
        if att.position is not None:
            positions = positions + [float(att.position.data[0])]
            segments = segments + [tuple(int(v) for v in att.segments[0])]
        return Hypothesis(
            state=out.state,
            tokens=self.tokens + [token],
            log_probs=self.log_probs + [log_prob],
            rows=self.rows + [att.weights.data[0].copy()],
            raw_rows=self.raw_rows + [att.raw.data[0].copy()],
            positions=positions,
            segments=segments,
            score=self.score + log_prob,
        )


def normalized_score(score: float, length: int, penalty: float) -> float:
    return score / (max(length, 1) ** penalty)


class DecodingSession:
    """Encoded motion plus read-only parameters for one sample"""

    def __init__(self, model: CaptionModel, motion: np.ndarray):
        self.model = model
        self.tensors = constant_all(model.params)
        self.enc: EncoderOutputs
        self.enc, self.keys = model.encode([motion], self.tensors)
        self.penalty = model.config.decoder.length_penalty

    def start(self) -> Hypothesis:
        return Hypothesis(state=initial_state(self.enc, self.model.config, self.tensors))

    def step(self, hyp: Hypothesis) -> Tuple[StepOutput, np.ndarray]:
        out = decode_step(
            hyp.state, [hyp.last_token], self.enc, self.keys, self.tensors, self.model.config
        )
        return out, T.log_softmax(out.logits).data[0]

    def result(self, hyp: Hypothesis) -> GenerationResult:
        frames = self.enc.frame_count
        trace = AlignmentTrace()
        if hyp.positions:
            trace = AlignmentTrace(
                positions=np.array(hyp.positions),
                segments=np.array(hyp.segments, dtype=np.int64).reshape(-1, 2),
            )
        return GenerationResult(
            tokens=list(hyp.tokens),
            words=self.model.vocabulary.decode(hyp.tokens),
            attention=AttentionMap(
                rows=np.array(hyp.rows).reshape(-1, frames),
                raw_rows=np.array(hyp.raw_rows).reshape(-1, frames),
            ),
            trace=trace,
            log_probs=list(hyp.log_probs),
            score=hyp.score,
            normalized_score=normalized_score(hyp.score, len(hyp.tokens), self.penalty),
        )


def _resolve_max_len(model: CaptionModel, max_len: Optional[int]) -> int:
    if max_len is None:
        return model.config.decoder.max_length
    if max_len < 1:
        raise ValueError(f"max_len must be at least 1, got {max_len}")
    return max_len


def greedy_decode(
    model: CaptionModel, motion: np.ndarray, max_len: Optional[int] = None
) -> GenerationResult:
    """
    Emit the most probable word at every step.

    Args:
        model (CaptionModel): Trained model
        motion (np.ndarray): Raw frames (T, w)
        max_len (Optional[int]): Token limit, the decoder default when None

    Returns:
        GenerationResult: Tokens up to and including <eos>, or ``max_len`` tokens.
            Ties go to the lowest word id.

    Raises:
        ValueError: If ``max_len`` < 1
    """
    max_len = _resolve_max_len(model, max_len)
    session = DecodingSession(model, motion)
    hyp = session.start()
    for _ in range(max_len):
        out, log_probs = session.step(hyp)
        token = int(np.argmax(log_probs))
        hyp = hyp.extend(out, token, float(log_probs[token]))
        if token == EOS_ID:
            break
    return session.result(hyp)


def beam_decode(
    model: CaptionModel,
    motion: np.ndarray,
    beam_size: int,
    max_len: Optional[int] = None,
) -> List[GenerationResult]:
    """
    Beam search over summed token log-probabilities.

    Each live hypothesis proposes its best ``beam_size - finished`` words; the
    best proposals overall survive, and those ending in <eos> are set aside.
    Search stops when ``beam_size`` hypotheses have finished or at ``max_len``,
    when unfinished hypotheses join the pool. The pool is ranked by
    ``score / tokens ** length_penalty``.

    Args:
        model (CaptionModel): Trained model
        motion (np.ndarray): Raw frames (T, w)
        beam_size (int): Beam width
        max_len (Optional[int]): Token limit

    Returns:
        List[GenerationResult]: Up to ``beam_size`` results, best first

    Raises:
        ValueError: If ``beam_size`` < 1 or ``max_len`` < 1
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be at least 1, got {beam_size}")
    max_len = _resolve_max_len(model, max_len)
    session = DecodingSession(model, motion)

    live = [session.start()]
    finished: List[Hypothesis] = []
    for _ in range(max_len):
        width = beam_size - len(finished)
        candidates = []
        for hyp in live:
            out, log_probs = session.step(hyp)
            for token in np.argsort(-log_probs, kind="stable")[:width]:
                token = int(token)
                candidates.append((hyp.score + float(log_probs[token]), hyp, out, token, log_probs))
        candidates.sort(key=lambda c: -c[0])

        live = []
        for _, hyp, out, token, log_probs in candidates[:width]:
            extended = hyp.extend(out, token, float(log_probs[token]))
            (finished if token == EOS_ID else live).append(extended)
        if len(finished) >= beam_size or not live:
            break

    pool = finished + live
    pool.sort(key=lambda h: -normalized_score(h.score, len(h.tokens), session.penalty))
    logger.debug(f"Beam search kept {len(finished)} finished of {len(pool)} hypotheses")
    return [session.result(h) for h in pool[:beam_size]]


def to_generation_record(sample_id: str, rank: int, result: GenerationResult) -> GenerationRecord:
    trace = result.trace
    return GenerationRecord(
        sample_id=sample_id,
        rank=rank,
        words=result.words,
        token_ids=result.tokens,
        log_probs=result.log_probs,
        score=result.score,
        normalized_score=result.normalized_score,
        frame_count=int(result.attention.rows.shape[1]),
        positions=None if trace.positions is None else trace.positions.tolist(),
        segments=None if trace.segments is None else [tuple(s) for s in trace.segments.tolist()],
        attention=result.attention.rows.tolist(),
        raw_attention=result.attention.raw_rows.tolist(),
    )


def from_generation_record(record: GenerationRecord) -> GenerationResult:
    frames = record.frame_count
    trace = AlignmentTrace()
    if record.positions is not None:
        trace = AlignmentTrace(
            positions=np.array(record.positions, dtype=np.float64),
            segments=np.array(record.segments, dtype=np.int64).reshape(-1, 2),
        )
    return GenerationResult(
        tokens=list(record.token_ids),
        words=list(record.words),
        attention=AttentionMap(
            rows=np.array(record.attention, dtype=np.float64).reshape(-1, frames),
            raw_rows=np.array(record.raw_attention, dtype=np.float64).reshape(-1, frames),
        ),
        trace=trace,
        log_probs=list(record.log_probs),
        score=record.score,
        normalized_score=record.normalized_score,
    )


def write_generations(records: Iterable[GenerationRecord], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.model_dump(mode="json")) + "\n")
    return path


def read_generations(path: PathLike) -> List[GenerationRecord]:
    """
    Read generation records.

    Raises:
        FileNotFoundError: If the file does not exist
        DatasetError: On a malformed line
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"generation file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(GenerationRecord.model_validate(json.loads(line)))
            except (ValidationError, ValueError) as e:
                raise DatasetError(f"{path}:{line_no}: invalid generation record: {e}")
    return records
