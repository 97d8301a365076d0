import string
from collections import Counter
from typing import Iterable, List

from loguru import logger

from mocap_text.models.sample_model import MotionSample
from mocap_text.models.vocabulary_model import SPECIAL_TOKENS, Vocabulary


def tokenize(sentence: str) -> List[str]:
    """
    Lowercase, split on whitespace and strip punctuation at token ends.

    Applied identically to training captions, references and predictions.
    """
    tokens = []
    for raw in sentence.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def build_vocab_from_sentences(sentences: Iterable[str], min_freq: int = 1) -> Vocabulary:
    """
    Build a vocabulary from raw sentences.

    Args:
        sentences (Iterable[str]): Untokenized text
        min_freq (int): Words seen fewer times map to <unk>

    Returns:
        Vocabulary: Reserved tokens first, then frequency descending, ties lexicographic
    """
    counts = Counter()
    for sentence in sentences:
        counts.update(tokenize(sentence))
    kept = sorted(
        (w for w, c in counts.items() if c >= min_freq and w not in SPECIAL_TOKENS),
        key=lambda w: (-counts[w], w),
    )
    logger.debug(f"Vocabulary: {len(kept)} of {len(counts)} words kept at min_freq={min_freq}")
    return Vocabulary(words=list(SPECIAL_TOKENS) + kept, counts=dict(sorted(counts.items())))


def build_vocab(samples: Iterable[MotionSample], min_freq: int = 1) -> Vocabulary:
    return build_vocab_from_sentences(
        (d for sample in samples for d in sample.descriptions), min_freq
    )
