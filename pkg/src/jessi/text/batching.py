"""Index encoding and padded mini-batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import RngStream
from .corpus import DOMAINS, RawExample, tokenize
from .vocab import PAD, Vocab


@dataclass(frozen=True)
class EncodedExample:
    id: str
    token_ids: np.ndarray
    label: int | None
    domain: int

    @property
    def length(self) -> int:
        return len(self.token_ids)


@dataclass
class Batch:
    """Padded index matrix; ``mask[i, :lengths[i]]`` is one, the rest zero."""

    ids: list
    token_ids: np.ndarray
    mask: np.ndarray
    labels: np.ndarray | None
    domains: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def encode(examples, vocab: Vocab, max_len: int | None = None) -> list[EncodedExample]:
    """Tokenize and index examples, truncating to ``max_len`` tokens."""
    out = []
    for ex in examples:
        ids = vocab.encode(tokenize(ex.sentence).tokens)
        if max_len is not None:
            ids = ids[:max_len]
        out.append(EncodedExample(ex.id, ids, ex.label, DOMAINS.index(ex.domain)))
    return out


def collate(examples) -> Batch:
    lengths = np.array([ex.length for ex in examples], dtype=np.int64)
    T = int(lengths.max())
    token_ids = np.full((len(examples), T), PAD, dtype=np.int64)
    for i, ex in enumerate(examples):
        token_ids[i, :ex.length] = ex.token_ids
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float32)
    labels = None
    if all(ex.label is not None for ex in examples):
        labels = np.array([ex.label for ex in examples], dtype=np.int64)
    domains = np.array([ex.domain for ex in examples], dtype=np.int64)
    return Batch([ex.id for ex in examples], token_ids, mask, labels, domains, lengths)


def make_batches(examples, batch_size: int = 32, shuffle: bool = False,
                 rng: RngStream | None = None) -> list[Batch]:
    """Partition one epoch into batches; the last one may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = np.arange(len(examples))
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs an RngStream")
        order = rng.permutation(len(examples))
    return [collate([examples[i] for i in order[k:k + batch_size]])
            for k in range(0, len(examples), batch_size)]


def raw_to_batches(examples: list[RawExample], vocab: Vocab, batch_size: int = 32,
                   max_len: int | None = None) -> list[Batch]:
    return make_batches(encode(examples, vocab, max_len), batch_size)
