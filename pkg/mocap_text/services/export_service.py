import csv
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from mocap_text.config import settings
from mocap_text.core import tensor as T
from mocap_text.exceptions import DimensionError, MocapTextError, SegmentationError
from mocap_text.models.generation_model import GenerationResult
from mocap_text.models.segment_model import SegmentationResult

PathLike = Union[str, Path]

ATTENTION_FILE = "attention.csv"
TRANSPARENCY_FILE = "transparency.csv"
COEFFICIENTS_FILE = "segment_coefficients.csv"
TRACE_FILE = "trace.jsonl"


def transparency(rows: np.ndarray, factor: Optional[float] = None) -> np.ndarray:
    """
    Per-frame skeleton opacity from attention rows.

    G = softmax_j(F * a_ij), V = G / max_j G, so every row peaks at exactly 1.

    Args:
        rows (np.ndarray): Attention rows (L, T)
        factor (Optional[float]): Sharpening factor F, from settings when None

    Returns:
        np.ndarray: V with entries in (0, 1]
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] == 0:
        raise DimensionError(f"attention rows must be a non-empty matrix, got {rows.shape}")
    factor = settings.transparency_factor if factor is None else factor
    g = T.softmax(rows * factor, axis=-1).data
    return g / g.max(axis=1, keepdims=True)


def segment_coefficients(rows: np.ndarray, boundaries: Sequence[int]) -> np.ndarray:
    """
    Mean attention row of each language segment.

    Args:
        rows (np.ndarray): Attention rows (L, T)
        boundaries (Sequence[int]): k_0, ..., k_e + 1

    Returns:
        np.ndarray: One gamma row per segment (n_s, T)
    """
    rows = np.asarray(rows, dtype=np.float64)
    if boundaries[-1] > rows.shape[0]:
        raise SegmentationError(f"boundary {boundaries[-1]} beyond {rows.shape[0]} rows")
    gammas = []
    for m in range(len(boundaries) - 1):
        start, end = boundaries[m], boundaries[m + 1]
        if end <= start:
            raise SegmentationError(f"empty language segment [{start},{end}[")
        gammas.append(rows[start:end].mean(axis=0))
    return np.array(gammas).reshape(-1, rows.shape[1])


def _write_table(path: Path, labels: Sequence[str], matrix: np.ndarray, label_header: str):
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([label_header] + [f"frame_{j}" for j in range(matrix.shape[1])])
        for label, row in zip(labels, matrix):
            writer.writerow([label] + [format(float(v), ".17g") for v in row])


def read_table(path: PathLike) -> Tuple[List[str], np.ndarray]:
    """Read back a table written by ``export``: row labels and values"""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        labels, values = [], []
        for row in reader:
            labels.append(row[0])
            values.append([float(v) for v in row[1:]])
    return labels, np.array(values, dtype=np.float64).reshape(len(labels), len(header) - 1)


def read_trace(path: PathLike) -> List[Dict]:
    with Path(path).open("r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def export(
    result: GenerationResult,
    seg: Optional[SegmentationResult],
    out_dir: PathLike,
    factor: Optional[float] = None,
) -> Dict[str, Path]:
    """
    Write attention, transparency, segment coefficients and the alignment trace.

    Args:
        result (GenerationResult): Decoded sentence with its attention
        seg (Optional[SegmentationResult]): Language segments; coefficients skipped when None
        out_dir (PathLike): Output directory, created if missing
        factor (Optional[float]): Transparency sharpening factor

    Returns:
        Dict[str, Path]: Written files by kind

    Raises:
        MocapTextError: If a file cannot be written, naming the path
    """
    out_dir = Path(out_dir)
    rows = result.attention.rows
    labels = [f"{i}:{w}" for i, w in enumerate(result.words)]
    written: Dict[str, Path] = {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)

        written["attention"] = out_dir / ATTENTION_FILE
        _write_table(written["attention"], labels, rows, "token")

        written["transparency"] = out_dir / TRANSPARENCY_FILE
        _write_table(written["transparency"], labels, transparency(rows, factor), "token")

        if seg is not None:
            bounds = seg.boundaries
            gamma_labels = [
                f"{bounds[m]}-{bounds[m + 1] - 1}:{result.words[bounds[m]]}"
                for m in range(seg.n_segments)
            ]
            written["coefficients"] = out_dir / COEFFICIENTS_FILE
            _write_table(
                written["coefficients"],
                gamma_labels,
                segment_coefficients(rows, bounds),
                "segment",
            )

        written["trace"] = out_dir / TRACE_FILE
        argmax = np.argmax(rows, axis=1)
        with written["trace"].open("w", encoding="utf-8") as handle:
            for i, word in enumerate(result.words):
                entry = {"index": i, "token": word, "argmax": int(argmax[i])}
                if result.trace.positions is not None:
                    entry["position"] = float(result.trace.positions[i])
                    entry["start"] = int(result.trace.segments[i][0])
                    entry["end"] = int(result.trace.segments[i][1])
                handle.write(json.dumps(entry) + "\n")
    except OSError as e:
        raise MocapTextError(f"cannot write export to {e.filename or out_dir}: {e.strerror}")

    logger.debug(f"Exported {len(written)} files to {out_dir}")
    return written
