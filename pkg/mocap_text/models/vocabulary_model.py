from dataclasses import dataclass, field
from typing import Dict, Iterable, List

from mocap_text.exceptions import InvalidTokenError

PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
SPECIAL_TOKENS = (PAD, SOS, EOS, UNK)
PAD_ID, SOS_ID, EOS_ID, UNK_ID = range(4)


@dataclass
class Vocabulary:
    """Word/id bijection; ids 0-3 are always <pad>, <sos>, <eos>, <unk>"""

    words: List[str]
    counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.words[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise InvalidTokenError(f"vocabulary must start with {SPECIAL_TOKENS}")
        self._index = {word: i for i, word in enumerate(self.words)}
        if len(self._index) != len(self.words):
            raise InvalidTokenError("vocabulary words must be unique")

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def id_of(self, word: str) -> int:
        return self._index.get(word, UNK_ID)

    def word_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.words):
            raise InvalidTokenError(
                f"token id {token_id} outside vocabulary of size {len(self.words)}"
            )
        return self.words[token_id]

    def encode(self, tokens: Iterable[str], add_eos: bool = True) -> List[int]:
        """Map words to ids; the training target ends with <eos> and has no <sos>"""
        ids = [self.id_of(word) for word in tokens]
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, token_ids: Iterable[int], keep_eos: bool = True) -> List[str]:
        words = []
        for token_id in token_ids:
            word = self.word_of(int(token_id))
            if word == EOS and not keep_eos:
                break
            words.append(word)
        return words
