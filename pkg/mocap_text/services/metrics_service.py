"""
Corpus BLEU and embedding-based semantic similarity.

BLEU uses clipped n-gram counts against every reference of a sample, the
closest reference length for the brevity penalty, and uniform weights over
1..max_n grams. Without smoothing any zero precision makes the score 0.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mocap_text.exceptions import EmbeddingError, MetricError
from mocap_text.models.vocabulary_model import EOS, PAD, SOS
from mocap_text.schemas.report_schemas import TextScoreReport
from mocap_text.services.embedding_factory import EmbeddingProvider
from mocap_text.services.vocabulary_service import tokenize

Tokens = Sequence[str]


@dataclass
class BleuResult:
    score: float
    precisions: List[float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int


@dataclass
class SemanticResult:
    score: float
    per_sample: List[float]


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def closest_reference_length(hyp_len: int, references: Sequence[Tokens]) -> int:
    """Reference length nearest the hypothesis, the shorter on ties"""
    return min((abs(len(r) - hyp_len), len(r)) for r in references)[1]


def bleu(
    predictions: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    max_n: int = 4,
    smoothing: bool = False,
) -> BleuResult:
    """
    Corpus BLEU over tokenized sentences.

    Args:
        predictions (Sequence[Tokens]): One token list per sample
        references (Sequence[Sequence[Tokens]]): One or more token lists per sample
        max_n (int): Largest n-gram order
        smoothing (bool): Add one to numerator and denominator for orders >= 2

    Returns:
        BleuResult: Score, clipped precisions, brevity penalty and lengths

    Raises:
        MetricError: On an empty corpus, misaligned lists or a sample without references
    """
    if not predictions:
        raise MetricError("BLEU of an empty corpus is undefined")
    if len(predictions) != len(references):
        raise MetricError(f"{len(predictions)} predictions for {len(references)} reference sets")
    if any(not refs for refs in references):
        raise MetricError("every sample needs at least one reference")

    matches = [0] * max_n
    totals = [0] * max_n
    hyp_length = ref_length = 0
    for hyp, refs in zip(predictions, references):
        hyp_length += len(hyp)
        ref_length += closest_reference_length(len(hyp), refs)
        for n in range(1, max_n + 1):
            hyp_counts = ngram_counts(hyp, n)
            max_ref: Counter = Counter()
            for ref in refs:
                max_ref |= ngram_counts(ref, n)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
            totals[n - 1] += max(0, len(hyp) - n + 1)

    precisions = []
    for n in range(max_n):
        if smoothing and n > 0:
            precisions.append((matches[n] + 1) / (totals[n] + 1))
        else:
            precisions.append(matches[n] / totals[n] if totals[n] else 0.0)

    if hyp_length == 0:
        penalty = 0.0
    elif hyp_length > ref_length:
        penalty = 1.0
    else:
        penalty = math.exp(1 - ref_length / hyp_length)

    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = penalty * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score, precisions, penalty, hyp_length, ref_length)


def bleu4(
    predictions: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    smoothing: bool = False,
) -> float:
    return bleu(predictions, references, 4, smoothing).score


def cosine_similarity(u, v) -> float:
    """
    Normalized dot product.

    Raises:
        MetricError: If either vector has zero norm
    """
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise MetricError("cosine similarity with a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _embed(provider: EmbeddingProvider, sentence: str) -> np.ndarray:
    try:
        return provider.embed(sentence)
    except EmbeddingError:
        raise
    except Exception as e:
        raise EmbeddingError(f"embedding failed for sentence {sentence!r}: {e}")


def semantic_score(
    references: Sequence[Sequence[str]],
    predictions: Sequence[Union[str, Sequence[str]]],
    provider: EmbeddingProvider,
) -> SemanticResult:
    """
    Mean over samples of the best reference similarity per prediction.

    sim_i = mean over predictions p of max over references r of cos(emb(p), emb(r))

    Args:
        references (Sequence[Sequence[str]]): Reference sentences per sample
        predictions (Sequence[Union[str, Sequence[str]]]): One or more predictions per sample
        provider (EmbeddingProvider): Sentence embedder

    Returns:
        SemanticResult: Corpus mean and per-sample similarity

    Raises:
        MetricError: If the lists are misaligned or empty
        EmbeddingError: If the provider fails on a sentence
    """
    if not references or len(references) != len(predictions):
        raise MetricError(
            f"{len(predictions)} predictions for {len(references)} reference sets"
        )
    cache: Dict[str, np.ndarray] = {}

    def vector(sentence: str) -> np.ndarray:
        if sentence not in cache:
            cache[sentence] = _embed(provider, sentence)
        return cache[sentence]

    per_sample = []
    for refs, preds in zip(references, predictions):
        if isinstance(preds, str):
            preds = [preds]
        if not refs or not preds:
            raise MetricError("every sample needs references and predictions")
        scores = [max(cosine_similarity(vector(p), vector(r)) for r in refs) for p in preds]
        per_sample.append(float(np.mean(scores)))
    return SemanticResult(score=float(np.mean(per_sample)), per_sample=per_sample)


def text_report(
    predictions: Sequence[str],
    references: Sequence[Sequence[str]],
    provider: Optional[EmbeddingProvider] = None,
    smoothing: bool = False,
) -> TextScoreReport:
    """BLEU@1..4, average prediction length and, with a provider, the semantic score"""
    hyps = [tokenize(p) for p in predictions]
    refs = [[tokenize(r) for r in rs] for rs in references]
    results: Dict[str, float] = {}
    penalty = 0.0
    for n in range(1, 5):
        result = bleu(hyps, refs, n, smoothing)
        results[f"bleu{n}"] = result.score
        penalty = result.brevity_penalty
    semantic: Optional[SemanticResult] = None
    if provider is not None:
        semantic = semantic_score(references, list(predictions), provider)
    return TextScoreReport(
        n_samples=len(hyps),
        bleu=results,
        brevity_penalty=penalty,
        average_length=float(np.mean([len(h) for h in hyps])),
        semantic_score=semantic.score if semantic else None,
        per_sample_similarity=semantic.per_sample if semantic else None,
    )


def strip_special(words: Sequence[str]) -> Tuple[str, ...]:
    """Drop <eos> and anything after it, and other reserved tokens"""
    out = []
    for word in words:
        if word == EOS:
            break
        if word in (PAD, SOS):
            continue
        out.append(word)
    return tuple(out)
