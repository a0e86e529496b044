"""Differentiable operations on :class:`~jessi.tensor.engine.Tensor`.

Every function builds its output with ``Tensor._from_op`` and a closure that
maps the upstream gradient onto the inputs. Masks and integer indices are
plain arrays and never receive gradients.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .engine import EmptySequenceError, ShapeError, Tensor, accumulate

LOG_CLAMP = 1e-12


class UnsupportedWidthError(ValueError):
    """Convolution width that cannot keep the sequence length."""


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    dtype = like.dtype if like is not None else None
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return Tensor(arr, dtype=dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _mask_array(mask, dtype=None) -> np.ndarray:
    if isinstance(mask, Tensor):
        mask = mask.data
    mask = np.asarray(mask)
    return mask if dtype is None else mask.astype(dtype, copy=False)


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _lift(b, a)
    out = a.data + b.data

    def back(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(g, b.shape))

    return Tensor._from_op(out, (a, b), back, "add")


def sub(a, b) -> Tensor:
    like = a if isinstance(a, Tensor) else b
    a, b = _lift(a, like), _lift(b, like)
    out = a.data - b.data

    def back(g):
        accumulate(a, _unbroadcast(g, a.shape))
        accumulate(b, _unbroadcast(-g, b.shape))

    return Tensor._from_op(out, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    if not isinstance(b, Tensor):
        s = b

        def back_scalar(g):
            accumulate(a, g * s)

        return Tensor._from_op(a.data * s, (a,), back_scalar, "mul")
    out = a.data * b.data

    def back(g):
        accumulate(a, _unbroadcast(g * b.data, a.shape))
        accumulate(b, _unbroadcast(g * a.data, b.shape))

    return Tensor._from_op(out, (a, b), back, "mul")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def back(g):
        accumulate(x, g * (1.0 - y * y))

    return Tensor._from_op(y, (x,), back, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def back(g):
        accumulate(x, g * y * (1.0 - y))

    return Tensor._from_op(y, (x,), back, "sigmoid")


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def back(g):
        accumulate(x, g * (x.data > 0))

    return Tensor._from_op(y, (x,), back, "relu")


def masked(x: Tensor, mask) -> Tensor:
    """Multiply by a constant 0/1 mask broadcast against ``x``."""
    m = _mask_array(mask, x.dtype)

    def back(g):
        accumulate(x, _unbroadcast(g * m, x.shape))

    return Tensor._from_op(x.data * m, (x,), back, "masked")


# ----------------------------------------------------------------- reductions and shape

def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate(x, np.broadcast_to(g, x.shape))

    return Tensor._from_op(out, (x,), back, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def back(g):
        accumulate(x, g.reshape(x.shape))

    return Tensor._from_op(out, (x,), back, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def back(g):
        accumulate(x, g.transpose(inv))

    return Tensor._from_op(out, (x,), back, "transpose")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            accumulate(t, g[tuple(sl)])

    return Tensor._from_op(out, tuple(tensors), back, "concat")


def index(x: Tensor, idx) -> Tensor:
    out = np.array(x.data[idx], copy=True)

    def back(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            accumulate(x, full)

    return Tensor._from_op(out, (x,), back, "index")


def select_time(x: Tensor, positions) -> Tensor:
    """Pick ``x[b, positions[b]]`` from a (B, T, D) tensor."""
    positions = np.asarray(positions, dtype=np.int64)
    rows = np.arange(x.shape[0])
    out = x.data[rows, positions]

    def back(g):
        full = np.zeros_like(x.data)
        full[rows, positions] = g
        accumulate(x, full)

    return Tensor._from_op(out, (x,), back, "select_time")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; the gradient is scatter-added into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def back(g):
        full = np.zeros_like(table.data)
        kernels.scatter_add_rows(full, ids, g)
        accumulate(table, full)

    return Tensor._from_op(out, (table,), back, "embedding")


# ----------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        if a.requires_grad:
            accumulate(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            accumulate(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return Tensor._from_op(out, (a, b), back, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` laid out as (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear input width {x.shape} does not match weight {weight.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out += bias.data
    out = out.reshape(x.shape[:-1] + (weight.shape[0],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(-1, weight.shape[0])
        if x.requires_grad:
            accumulate(x, (g2 @ weight.data).reshape(x.shape))
        if weight.requires_grad:
            accumulate(weight, g2.T @ x2)
        if bias is not None and bias.requires_grad:
            accumulate(bias, g2.sum(axis=0))

    return Tensor._from_op(out, parents, back, "linear")


def conv1d_same(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Length-preserving 1-D convolution over the time axis.

    ``x`` is (..., T, D_in), ``kernel`` is (h, D_in, D_out) with odd ``h``;
    the sequence is zero-padded by (h - 1) / 2 steps on each side.
    """
    h, d_in, d_out = kernel.shape
    if h % 2 == 0:
        raise UnsupportedWidthError(f"convolution width must be odd, got {h}")
    if x.shape[-1] != d_in:
        raise ShapeError(f"conv input width {x.shape} does not match kernel {kernel.shape}")
    pad = (h - 1) // 2
    T = x.shape[-2]
    lead = x.shape[:-2]
    widths = [(0, 0)] * len(lead) + [(pad, pad), (0, 0)]
    xp = np.pad(x.data, widths)
    win = np.lib.stride_tricks.sliding_window_view(xp, h, axis=-2)  # (..., T, D_in, h)
    cols = np.ascontiguousarray(np.swapaxes(win, -1, -2)).reshape(-1, h * d_in)
    k2 = kernel.data.reshape(h * d_in, d_out)
    out = (cols @ k2 + bias.data).reshape(lead + (T, d_out))

    def back(g):
        g2 = g.reshape(-1, d_out)
        if kernel.requires_grad:
            accumulate(kernel, (cols.T @ g2).reshape(h, d_in, d_out))
        if bias.requires_grad:
            accumulate(bias, g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ k2.T).reshape(lead + (T, h, d_in))
            gxp = np.zeros(xp.shape, dtype=x.dtype)
            for k in range(h):
                gxp[..., k:k + T, :] += gcols[..., k, :]
            accumulate(x, gxp[..., pad:pad + T, :])

    return Tensor._from_op(out, (x, kernel, bias), back, "conv1d_same")


# ----------------------------------------------------------------- pooling and normalization

def max_pool_time(x: Tensor, mask) -> Tensor:
    """Per-feature maximum over unmasked time steps of a (..., T, D) tensor."""
    m = _mask_array(mask).astype(bool)
    if m.shape != x.shape[:-1]:
        raise ShapeError(f"mask shape {m.shape} does not match time axes of {x.shape}")
    if not m.any(axis=-1).all():
        raise EmptySequenceError("max_pool_time over a fully masked sequence")
    filled = np.where(m[..., None], x.data, -np.inf)
    arg = filled.argmax(axis=-2)[..., None, :]
    out = np.take_along_axis(x.data, arg, axis=-2)[..., 0, :]

    def back(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg, g[..., None, :], axis=-2)
        accumulate(x, full)

    return Tensor._from_op(out, (x,), back, "max_pool_time")


def masked_softmax(logits: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` where masked entries get exactly zero weight."""
    z = logits.data
    if mask is not None:
        m = np.broadcast_to(_mask_array(mask).astype(bool), z.shape)
        if not m.any(axis=axis).all():
            raise EmptySequenceError("masked_softmax over a fully masked slice")
        z = np.where(m, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        accumulate(logits, p * (g - (g * p).sum(axis=axis, keepdims=True)))

    return Tensor._from_op(p, (logits,), back, "masked_softmax")


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    return masked_softmax(logits, None, axis)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        if gamma.requires_grad:
            accumulate(gamma, (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            accumulate(beta, g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            gx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            accumulate(x, gx)

    return Tensor._from_op(out, (x, gamma, beta), back, "layer_norm")


# ----------------------------------------------------------------- losses and regularizers

def cross_entropy(probs: Tensor, gold, reduction: str = "mean") -> Tensor:
    """Negative log-probability of the gold class, clamped at ``-log(1e-12)``.

    ``probs`` is a (C,) distribution or a (B, C) batch of them.
    """
    p = probs.data
    single = p.ndim == 1
    p2 = p[None, :] if single else p
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    n, n_classes = p2.shape
    if gold.shape != (n,):
        raise ShapeError(f"expected {n} gold labels, got shape {gold.shape}")
    if (gold < 0).any() or (gold >= n_classes).any():
        raise IndexError(f"gold class out of range [0, {n_classes})")
    if (p2 < 0).any() or np.abs(p2.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("cross_entropy expects rows that are probability distributions")
    rows = np.arange(n)
    picked = p2[rows, gold]
    safe = np.maximum(picked, LOG_CLAMP)
    losses = -np.log(safe)
    if reduction == "mean":
        out, scale = losses.mean(), 1.0 / n
    elif reduction == "sum":
        out, scale = losses.sum(), 1.0
    elif reduction == "none":
        out, scale = losses, None
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    out = np.asarray(out, dtype=p.dtype)

    def back(g):
        coef = np.where(picked > LOG_CLAMP, -1.0 / safe, 0.0)
        coef = coef * (g if scale is None else g * scale)
        full = np.zeros_like(p2)
        full[rows, gold] = coef
        accumulate(probs, full[0] if single else full)

    return Tensor._from_op(out, (probs,), back, "cross_entropy")


def dropout(x: Tensor, rate: float, training: bool, rng) -> Tensor:
    """Inverted dropout: survivors are scaled by 1 / (1 - rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return masked(x, keep)


def grad_reverse(x: Tensor) -> Tensor:
    """Identity on the way forward, negated gradient on the way back."""

    def back(g):
        accumulate(x, -g)

    return Tensor._from_op(x.data, (x,), back, "grad_reverse")


# ----------------------------------------------------------------- recurrence

def sru_recurrence(u: Tensor, highway: Tensor, v_f: Tensor, v_r: Tensor,
                   b_f: Tensor, b_r: Tensor, mask, reverse: bool = False) -> Tensor:
    """Elementwise SRU scan given the precomputed input projections.

    ``u`` is (B, T, 3d) holding [W x; W_f x; W_r x]; ``highway`` is (B, T, d).
    See :mod:`jessi.tensor.kernels` for the recurrence itself.
    """
    d = highway.shape[-1]
    if u.shape[-1] != 3 * d or u.shape[:-1] != highway.shape[:-1]:
        raise ShapeError(f"sru inputs disagree: u {u.shape}, highway {highway.shape}")
    m = np.ascontiguousarray(_mask_array(mask), dtype=np.uint8)
    if m.shape != u.shape[:2]:
        raise ShapeError(f"mask shape {m.shape} does not match {u.shape[:2]}")
    ud = np.ascontiguousarray(u.data)
    hd = np.ascontiguousarray(highway.data)
    h, c, f, r = kernels.sru_forward(ud, hd, v_f.data, v_r.data, b_f.data, b_r.data, m, bool(reverse))

    def back(g):
        gu, ghw, gvf, gvr, gbf, gbr = kernels.sru_backward(
            np.ascontiguousarray(g), ud, hd, v_f.data, v_r.data, c, f, r, m, bool(reverse))
        accumulate(u, gu)
        accumulate(highway, ghw)
        accumulate(v_f, gvf)
        accumulate(v_r, gvr)
        accumulate(b_f, gbf)
        accumulate(b_r, gbr)

    return Tensor._from_op(h, (u, highway, v_f, v_r, b_f, b_r), back, "sru")
