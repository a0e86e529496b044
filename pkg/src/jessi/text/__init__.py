"""Dataset ingestion, tokenization, vocabulary, embeddings and batching."""

from .batching import Batch, EncodedExample, collate, encode, make_batches
from .corpus import (
    DOMAIN_SOURCE,
    DOMAIN_TARGET,
    DOMAINS,
    DatasetParseError,
    EmptySentenceError,
    RawExample,
    TokenizedExample,
    format_dataset,
    load_dataset,
    parse_dataset,
    tokenize,
    write_dataset,
)
from .synth import ELECTRONICS, HOTELS, Lexicon, SynthCorpus, SynthSpec, synth_generate, template_oracle
from .vocab import PAD, UNK, EmbeddingFormatError, EmbeddingPair, Vocab, build_vocab, load_embeddings

__all__ = [
    "Batch", "DOMAINS", "DOMAIN_SOURCE", "DOMAIN_TARGET", "DatasetParseError", "ELECTRONICS",
    "EmbeddingFormatError", "EmbeddingPair", "EmptySentenceError", "EncodedExample", "HOTELS",
    "Lexicon", "PAD", "RawExample", "SynthCorpus", "SynthSpec", "TokenizedExample", "UNK",
    "Vocab", "build_vocab", "collate", "encode", "format_dataset", "load_dataset",
    "load_embeddings", "make_batches", "parse_dataset", "synth_generate", "template_oracle",
    "tokenize", "write_dataset",
]
