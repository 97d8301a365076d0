import hashlib
import json
from pathlib import Path
from typing import Dict, Protocol, Union

import numpy as np
from loguru import logger

from mocap_text.exceptions import EmbeddingError
from mocap_text.services.vocabulary_service import tokenize


class EmbeddingProvider(Protocol):
    """Protocol for sentence-embedding providers"""

    dimension: int

    def embed(self, sentence: str) -> np.ndarray:
        """Deterministic fixed-width vector for a sentence"""
        ...


class HashedBagOfWordsProvider:
    """Token counts hashed into a fixed number of signed buckets"""

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise EmbeddingError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension

    def _bucket(self, token: str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        index = int.from_bytes(digest[:8], "little") % self.dimension
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        return index, sign

    def embed(self, sentence: str) -> np.ndarray:
        tokens = tokenize(sentence)
        if not tokens:
            raise EmbeddingError(f"cannot embed empty sentence: {sentence!r}")
        vector = np.zeros(self.dimension)
        for token in tokens:
            index, sign = self._bucket(token)
            vector[index] += sign
        if not np.any(vector):
            # signed collisions cancelled out; fall back to unsigned counts
            for token in tokens:
                vector[self._bucket(token)[0]] += 1.0
        return vector


class FileEmbeddingProvider:
    """
    Lookup table of precomputed sentence vectors.

    The file holds one JSON object per line: ``{"sentence": str, "vector": [float]}``.
    Sentences are matched after tokenization, so case and end punctuation do not matter.
    """

    def __init__(self, path: Union[str, Path]):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"embedding table not found: {path}")
        self._table: Dict[str, np.ndarray] = {}
        self.dimension = 0
        with path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    vector = np.asarray(row["vector"], dtype=np.float64)
                    key = " ".join(tokenize(row["sentence"]))
                except (ValueError, KeyError, TypeError) as e:
                    raise EmbeddingError(f"{path}:{line_no}: invalid embedding row: {e}")
                if self.dimension and vector.shape != (self.dimension,):
                    raise EmbeddingError(f"{path}:{line_no}: vector width {vector.shape}")
                self.dimension = vector.shape[0]
                self._table[key] = vector
        logger.info(f"Loaded {len(self._table)} sentence embeddings from {path}")

    def embed(self, sentence: str) -> np.ndarray:
        vector = self._table.get(" ".join(tokenize(sentence)))
        if vector is None:
            raise EmbeddingError(f"no embedding for sentence: {sentence!r}")
        return vector


class EmbeddingProviderFactory:
    """Factory class for embedding providers"""

    _providers = {
        "hashed": HashedBagOfWordsProvider,
        "file": FileEmbeddingProvider,
    }

    @classmethod
    def create(cls, kind: str, **kwargs) -> EmbeddingProvider:
        provider = cls._providers.get(kind)
        if not provider:
            raise ValueError(f"Unsupported embedding provider: {kind}")
        return provider(**kwargs)

    @classmethod
    def get_supported_providers(cls) -> list:
        return list(cls._providers.keys())
