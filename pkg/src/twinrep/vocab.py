"""Word-level vocabulary and fixed-length encoding of texts."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

PAD, UNK, CLS, SEP = 0, 1, 2, 3
RESERVED = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

SENTENCE_MAX_LEN = 32
PHRASE_MAX_LEN = 8

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split punctuation into its own tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TokenSequence:
    """Token ids of one text with a right-padding mask (1 = real token)."""

    ids: tuple[int, ...]
    mask: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_real(self) -> int:
        return sum(self.mask)


class Vocabulary:
    """Immutable token <-> id table with four reserved ids."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: list[str] = list(RESERVED)
        self._stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self._stoi:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self._stoi[tok] = len(self._itos)
            self._itos.append(tok)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self._itos[len(RESERVED):]

    def id_of(self, token: str) -> int:
        return self._stoi.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, text: str, max_len: int) -> TokenSequence:
        """[CLS] tokens [SEP], truncated to ``max_len - 2`` content tokens and right-padded."""
        if max_len < 3:
            raise ValueError("max_len must be at least 3")
        content = [self.id_of(t) for t in tokenize(text)][: max_len - 2]
        ids = [CLS, *content, SEP]
        n = len(ids)
        pad = max_len - n
        return TokenSequence(tuple(ids + [PAD] * pad), tuple([1] * n + [0] * pad))

    def decode(self, seq: TokenSequence) -> list[str]:
        """Content tokens of ``seq`` (specials and padding dropped)."""
        return [
            self._itos[i]
            for i, m in zip(seq.ids, seq.mask)
            if m and i not in (CLS, SEP, PAD)
        ]

    def fingerprint(self) -> str:
        """SHA-256 over the ordered token list; used for checkpoint compatibility."""
        return hashlib.sha256("\n".join(self._itos).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        text = "".join(t + "\n" for t in self.tokens)
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line for line in lines if line)


def build_vocab(lines: Iterable[str], min_count: int = 1, max_size: int | None = None) -> Vocabulary:
    """Build a vocabulary, most frequent first, ties broken lexicographically.

    ``max_size`` bounds the number of non-reserved tokens.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for line in lines for tok in tokenize(line))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    kept = [t for t in kept if t not in RESERVED]
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary(kept)
