"""Vocabulary construction and static embedding tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..tensor import RngStream
from .corpus import tokenize

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
OOV_RANGE = 0.25


class EmbeddingFormatError(ValueError):
    pass


class Vocab:
    """Token to index table with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens, min_frequency: int = 1):
        self.itos = [PAD_TOKEN, UNK_TOKEN, *tokens]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary tokens must be unique")
        self.min_frequency = min_frequency

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi and self.stoi[token] > UNK

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK) if token not in (PAD_TOKEN, UNK_TOKEN) else UNK

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)

    def as_dict(self) -> dict[str, int]:
        return dict(self.stoi)

    def to_list(self) -> list[str]:
        return self.itos[2:]

    @classmethod
    def from_list(cls, tokens, min_frequency: int = 1) -> "Vocab":
        return cls(tokens, min_frequency)


def build_vocab(corpus, min_frequency: int = 1) -> Vocab:
    """Index tokens seen at least ``min_frequency`` times.

    ``corpus`` holds sentences, token sequences or RawExamples. Ordering is
    descending frequency, then lexicographic.
    """
    counts: Counter = Counter()
    for item in corpus:
        if isinstance(item, str):
            tokens = tokenize(item).tokens
        elif hasattr(item, "sentence"):
            tokens = tokenize(item.sentence).tokens
        else:
            tokens = item
        counts.update(tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_frequency]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept, min_frequency)


def load_embeddings(path, vocab: Vocab, dim: int, rng: RngStream, dtype=np.float32) -> np.ndarray:
    """Build a |V| x dim table from a ``word v1 ... vdim`` text file.

    Rows for words absent from the file are drawn uniformly from
    [-0.25, 0.25]; the PAD row is zero. ``path=None`` yields a fully random
    table.
    """
    table = rng.uniform(-OOV_RANGE, OOV_RANGE, (len(vocab), dim)).astype(dtype)
    table[PAD] = 0.0
    if path is None:
        return table
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0].strip():
                continue
            word, values = parts[0], [v for v in parts[1:] if v]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{line_no}: expected {dim} values for {word!r}, got {len(values)}")
            idx = vocab.stoi.get(word)
            if idx is None or idx <= UNK:
                continue
            try:
                table[idx] = np.asarray(values, dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{line_no}: non-numeric value") from None
    return table


@dataclass
class EmbeddingPair:
    """Two static tables whose rows are concatenated on lookup."""

    table_g: np.ndarray
    table_c: np.ndarray
    trainable_g: bool = False
    trainable_c: bool = False

    def __post_init__(self):
        if len(self.table_g) != len(self.table_c):
            raise ValueError("embedding tables must cover the same vocabulary")

    @property
    def dim(self) -> int:
        return self.table_g.shape[1] + self.table_c.shape[1]

    def lookup(self, index: int) -> np.ndarray:
        return np.concatenate([self.table_g[index], self.table_c[index]])
