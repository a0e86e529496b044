"""Sentence encoders for the two branches and their joint concatenation.

Branch C: static word embeddings -> multi-width convolutions -> attention pooling.
Branch B: transformer word encodings -> CNN/max-pool or a 2-layer BiSRU.

All encoders take a padding mask of shape (B, T) and never let padded
positions influence the vectors computed for real tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import Linear, Module, glorot
from .tensor import EmptySequenceError, Parameter, RngStream, Tensor, ops

CNN_MAXPOOL = "cnn_maxpool"
BISRU = "bisru"


class LengthError(ValueError):
    pass


@dataclass(frozen=True)
class BranchConfig:
    bert_sentence_encoder: str = CNN_MAXPOOL
    include_cnn_branch: bool = True
    include_bert_branch: bool = True

    def validate(self):
        if self.bert_sentence_encoder not in (CNN_MAXPOOL, BISRU):
            raise ValueError(f"unknown sentence encoder {self.bert_sentence_encoder!r}")
        if not (self.include_cnn_branch or self.include_bert_branch):
            raise ValueError("at least one encoder branch must be enabled")
        return self


SUBTASK_A = BranchConfig(CNN_MAXPOOL, True, True)
SUBTASK_B = BranchConfig(BISRU, True, True)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults follow the published setup
    except for the transformer, which runs at desk scale."""

    vocab_size: int = 0
    dim_g: int = 50
    dim_c: int = 50
    filter_sizes: tuple = (3, 5, 7)
    filter_channels: int = 200
    attention_width: int = 600
    sru_hidden: int = 150
    sru_layers: int = 2
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    mlp_hidden: int = 300
    dropout: float = 0.5
    max_norm: float | None = 3.0
    trainable_embeddings: bool = False
    domain_adversarial: bool = False
    branches: BranchConfig = field(default_factory=BranchConfig)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["filter_sizes"] = list(self.filter_sizes)
        d["branches"] = dict(self.branches.__dict__)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["filter_sizes"] = tuple(d["filter_sizes"])
        d["branches"] = BranchConfig(**d["branches"])
        return cls(**d)

    @property
    def bank_width(self) -> int:
        return len(self.filter_sizes) * self.filter_channels

    @property
    def bert_sentence_width(self) -> int:
        if self.branches.bert_sentence_encoder == BISRU:
            return 4 * self.sru_hidden
        return self.bank_width

    @property
    def joint_width(self) -> int:
        width = 0
        if self.branches.include_bert_branch:
            width += self.bert_sentence_width
        if self.branches.include_cnn_branch:
            width += self.bank_width
        return width


def _mask3(mask) -> np.ndarray:
    return np.asarray(mask)[..., None]


class FilterBank(Module):
    """One length-preserving convolution per filter width, ReLU activated."""

    def __init__(self, d_in: int, sizes, channels: int, rng: RngStream, dtype, max_norm=None):
        self.sizes = tuple(sizes)
        self.kernels = []
        self.biases = []
        for h in self.sizes:
            fan_in = h * d_in
            self.kernels.append(Parameter(glorot(rng, (h, d_in, channels), fan_in, channels, dtype),
                                          max_norm=max_norm, out_axis=-1))
            self.biases.append(Parameter(np.zeros(channels, dtype=dtype)))

    def __call__(self, x: Tensor, mask) -> list[Tensor]:
        x = ops.masked(x, _mask3(mask))
        return [ops.relu(ops.conv1d_same(x, k, b)) for k, b in zip(self.kernels, self.biases)]


class CnnAttEncoder(Module):
    """Convolutional word encoder pooled by learned attention."""

    def __init__(self, d_in: int, sizes, channels: int, att_width: int, rng: RngStream, dtype,
                 max_norm=None):
        self.bank = FilterBank(d_in, sizes, channels, rng, dtype, max_norm)
        width = len(tuple(sizes)) * channels
        self.att = Linear(width, att_width, rng, dtype, max_norm=max_norm)
        self.v = Parameter(rng.uniform(-0.1, 0.1, att_width).astype(dtype))

    def word_encode(self, emb: Tensor, mask) -> Tensor:
        """Concatenated filter outputs per word, zero at padded steps."""
        return ops.masked(ops.concat(self.bank(emb, mask), axis=-1), _mask3(mask))

    def attention_pool(self, e_c: Tensor, mask) -> tuple[Tensor, Tensor]:
        scores = ops.linear(ops.tanh(self.att(e_c)), ops.reshape(self.v, (1, -1)))
        scores = ops.reshape(scores, scores.shape[:-1])
        a = ops.masked_softmax(scores, mask)
        s_c = ops.matmul(ops.reshape(a, a.shape[:-1] + (1, a.shape[-1])), e_c)
        return a, ops.reshape(s_c, s_c.shape[:-2] + (s_c.shape[-1],))

    def __call__(self, emb: Tensor, mask) -> Tensor:
        return self.attention_pool(self.word_encode(emb, mask), mask)[1]


class CnnMaxPoolEncoder(Module):
    """Convolutions over word encodings, each max-pooled over real time steps."""

    def __init__(self, d_in: int, sizes, channels: int, rng: RngStream, dtype, max_norm=None):
        self.bank = FilterBank(d_in, sizes, channels, rng, dtype, max_norm)

    def __call__(self, e_b: Tensor, mask) -> Tensor:
        return ops.concat([ops.max_pool_time(y, mask) for y in self.bank(e_b, mask)], axis=-1)


class SruLayer(Module):
    """One direction of a simple recurrent unit.

    ``weight`` stacks the maps [W; W_f; W_r] row-wise, one row per hidden
    unit; ``proj`` is the highway projection P, present only when the input
    width differs from the hidden width.
    """

    def __init__(self, d_in: int, d_h: int, rng: RngStream, dtype, max_norm=None):
        self.d_in, self.d_h = d_in, d_h
        self.weight = Parameter(glorot(rng, (3 * d_h, d_in), d_in, d_h, dtype), max_norm=max_norm)
        self.proj = (Parameter(glorot(rng, (d_h, d_in), d_in, d_h, dtype), max_norm=max_norm)
                     if d_in != d_h else None)
        self.v_f = Parameter(rng.uniform(-0.1, 0.1, d_h).astype(dtype))
        self.v_r = Parameter(rng.uniform(-0.1, 0.1, d_h).astype(dtype))
        self.b_f = Parameter(np.zeros(d_h, dtype=dtype))
        self.b_r = Parameter(np.zeros(d_h, dtype=dtype))

    def __call__(self, x: Tensor, mask, reverse: bool = False) -> Tensor:
        u = ops.linear(x, self.weight)
        hw = ops.linear(x, self.proj) if self.proj is not None else x
        return ops.sru_recurrence(u, hw, self.v_f, self.v_r, self.b_f, self.b_r, mask, reverse)


def sru_forward(x: Tensor, layer: SruLayer, direction: str = "forward", mask=None) -> Tensor:
    """Run ``layer`` over (T, d_in) or (B, T, d_in) input in the given direction."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    single = x.ndim == 2
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=np.float32)
    h = layer(x, mask, reverse=direction == "backward")
    return ops.reshape(h, h.shape[1:]) if single else h


class BiSruStack(Module):
    """Stacked bidirectional SRU; the sentence vector is
    [last forward state; first backward state; max-pooled outputs]."""

    def __init__(self, d_in: int, d_h: int, n_layers: int, rng: RngStream, dtype, max_norm=None):
        self.d_h = d_h
        self.forward_layers = []
        self.backward_layers = []
        width = d_in
        for _ in range(n_layers):
            self.forward_layers.append(SruLayer(width, d_h, rng, dtype, max_norm))
            self.backward_layers.append(SruLayer(width, d_h, rng, dtype, max_norm))
            width = 2 * d_h

    def run(self, x: Tensor, mask, dropout: float = 0.0, rng: RngStream | None = None):
        """Per-step outputs of the top layer, split by direction."""
        fwd = bwd = None
        for i, (lf, lb) in enumerate(zip(self.forward_layers, self.backward_layers)):
            if i > 0:
                x = ops.dropout(ops.concat([fwd, bwd], axis=-1), dropout, self.training and rng is not None, rng)
            fwd = lf(x, mask, reverse=False)
            bwd = lb(x, mask, reverse=True)
        return fwd, bwd

    def __call__(self, e_b: Tensor, mask, dropout: float = 0.0, rng: RngStream | None = None) -> Tensor:
        mask = np.asarray(mask)
        lengths = mask.sum(axis=1).astype(np.int64)
        if (lengths == 0).any():
            raise EmptySequenceError("BiSRU encoder received a fully masked row")
        fwd, bwd = self.run(e_b, mask, dropout, rng)
        last = ops.select_time(fwd, lengths - 1)
        first = ops.select_time(bwd, np.zeros_like(lengths))
        pooled = ops.max_pool_time(ops.concat([fwd, bwd], axis=-1), mask)
        return ops.concat([last, first, pooled], axis=-1)


class TransformerBlock(Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: RngStream, dtype, max_norm=None):
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, rng, dtype, max_norm=max_norm)
        # a key bias shifts every score of a query equally, so softmax ignores it
        self.k = Linear(d_model, d_model, rng, dtype, bias=False, max_norm=max_norm)
        self.v = Linear(d_model, d_model, rng, dtype, max_norm=max_norm)
        self.o = Linear(d_model, d_model, rng, dtype, max_norm=max_norm)
        self.ln1_g = Parameter(np.ones(d_model, dtype=dtype))
        self.ln1_b = Parameter(np.zeros(d_model, dtype=dtype))
        self.ff1 = Linear(d_model, d_ff, rng, dtype, max_norm=max_norm)
        self.ff2 = Linear(d_ff, d_model, rng, dtype, max_norm=max_norm)
        self.ln2_g = Parameter(np.ones(d_model, dtype=dtype))
        self.ln2_b = Parameter(np.zeros(d_model, dtype=dtype))

    def _heads(self, x: Tensor) -> Tensor:
        B, T, D = x.shape
        return ops.transpose(ops.reshape(x, (B, T, self.n_heads, D // self.n_heads)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, mask, record=None) -> Tensor:
        B, T, D = x.shape
        q, k, v = self._heads(self.q(x)), self._heads(self.k(x)), self._heads(self.v(x))
        scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(D // self.n_heads))
        attn = ops.masked_softmax(scores, np.asarray(mask)[:, None, None, :])
        if record is not None:
            record.append(attn.data)
        ctx = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (B, T, D))
        x = ops.layer_norm(x + self.o(ctx), self.ln1_g, self.ln1_b)
        ff = self.ff2(ops.relu(self.ff1(x)))
        return ops.layer_norm(x + ff, self.ln2_g, self.ln2_b)


class TransformerWordEncoder(Module):
    """Small post-LN transformer producing one vector per token.

    Stands in for a pretrained BERT; pretrained weights can be loaded with
    :meth:`load_weights` from a checkpoint using this module's names.
    """

    def __init__(self, vocab_size: int, d_model: int, n_layers: int, n_heads: int, d_ff: int,
                 max_len: int, rng: RngStream, dtype, max_norm=None):
        self.max_len = max_len
        self.tok = Parameter(rng.normal(0.0, 0.02, (vocab_size, d_model)).astype(dtype))
        self.pos = Parameter(rng.normal(0.0, 0.02, (max_len, d_model)).astype(dtype))
        self.ln_g = Parameter(np.ones(d_model, dtype=dtype))
        self.ln_b = Parameter(np.zeros(d_model, dtype=dtype))
        self.blocks = [TransformerBlock(d_model, n_heads, d_ff, rng, dtype, max_norm)
                       for _ in range(n_layers)]

    def __call__(self, token_ids, mask, attention: list | None = None) -> Tensor:
        token_ids = np.asarray(token_ids)
        T = token_ids.shape[-1]
        if T > self.max_len:
            raise LengthError(f"sequence length {T} exceeds the encoder maximum {self.max_len}")
        x = ops.embedding(self.tok, token_ids) + self.pos[:T]
        x = ops.layer_norm(x, self.ln_g, self.ln_b)
        for block in self.blocks:
            x = block(x, mask, attention)
        return x

    def load_weights(self, path, prefix: str = "bert."):
        from .tensor import load_checkpoint

        tensors, _ = load_checkpoint(path)
        state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        return self.load_state_dict(state)


@dataclass
class JointEncoding:
    s_b: Tensor | None
    s_c: Tensor | None
    joint: Tensor


class JointEncoder(Module):
    """Both sentence encoders plus the embeddings they read from."""

    def __init__(self, cfg: ModelConfig, rng: RngStream, table_g=None, table_c=None, dtype=np.float32):
        cfg.branches.validate()
        self.cfg = cfg
        mn = cfg.max_norm
        if cfg.branches.include_cnn_branch:
            if table_g is None:
                table_g = rng.child("g").uniform(-0.25, 0.25, (cfg.vocab_size, cfg.dim_g))
                table_g[0] = 0
            if table_c is None:
                table_c = rng.child("c").uniform(-0.25, 0.25, (cfg.vocab_size, cfg.dim_c))
                table_c[0] = 0
            self.emb_g = Parameter(np.asarray(table_g, dtype=dtype), trainable=cfg.trainable_embeddings)
            self.emb_c = Parameter(np.asarray(table_c, dtype=dtype), trainable=cfg.trainable_embeddings)
            self.cnn_att = CnnAttEncoder(cfg.dim_g + cfg.dim_c, cfg.filter_sizes, cfg.filter_channels,
                                         cfg.attention_width, rng.child("cnn_att"), dtype, mn)
        if cfg.branches.include_bert_branch:
            self.bert = TransformerWordEncoder(cfg.vocab_size, cfg.d_model, cfg.n_layers, cfg.n_heads,
                                               cfg.d_ff, cfg.max_len, rng.child("bert"), dtype, mn)
            if cfg.branches.bert_sentence_encoder == BISRU:
                self.bert_sent = BiSruStack(cfg.d_model, cfg.sru_hidden, cfg.sru_layers,
                                            rng.child("bisru"), dtype, mn)
            else:
                self.bert_sent = CnnMaxPoolEncoder(cfg.d_model, cfg.filter_sizes, cfg.filter_channels,
                                                   rng.child("bert_cnn"), dtype, mn)

    def embed(self, token_ids) -> Tensor:
        return ops.concat([ops.embedding(self.emb_g, token_ids), ops.embedding(self.emb_c, token_ids)],
                          axis=-1)

    def encode_cnn(self, token_ids, mask) -> Tensor:
        return self.cnn_att(self.embed(token_ids), mask)

    def encode_bert(self, token_ids, mask, rng: RngStream | None = None) -> Tensor:
        e_b = self.bert(token_ids, mask)
        if isinstance(self.bert_sent, BiSruStack):
            return self.bert_sent(e_b, mask, self.cfg.dropout, rng)
        return self.bert_sent(e_b, mask)

    def __call__(self, token_ids, mask, rng: RngStream | None = None) -> JointEncoding:
        s_b = s_c = None
        parts = []
        if self.cfg.branches.include_bert_branch:
            s_b = self.encode_bert(token_ids, mask, rng)
            parts.append(s_b)
        if self.cfg.branches.include_cnn_branch:
            s_c = self.encode_cnn(token_ids, mask)
            parts.append(s_c)
        return JointEncoding(s_b, s_c, ops.concat(parts, axis=-1))
