"""Hot inner loops: the SRU recurrence (forward and backward) and row scatter-add.

Each kernel exists twice, as a numba ``@njit`` loop nest and as a numpy
implementation vectorized over the batch. ``JESSI_KERNELS=numpy`` forces the
numpy path; otherwise numba is used when it imports.

Array conventions for the recurrence (``d`` = hidden width)::

    u     (B, T, 3d)   pre-activations [W x ; W_f x ; W_r x]
    hw    (B, T, d)    highway input (x itself, or P x)
    v_f, v_r, b_f, b_r (d,)
    mask  (B, T)       1 for real tokens, 0 for padding

Padded steps leave the cell state untouched and emit zeros, so a sequence
scanned right-to-left starts from c = 0 at its last real token.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_requested = os.environ.get("JESSI_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"JESSI_KERNELS must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


# --------------------------------------------------------------------------- numpy

def sru_forward_numpy(u, hw, v_f, v_r, b_f, b_r, mask, reverse):
    B, T, d3 = u.shape
    d = d3 // 3
    dt = u.dtype
    h = np.zeros((B, T, d), dtype=dt)
    c = np.zeros((B, T, d), dtype=dt)
    f = np.zeros((B, T, d), dtype=dt)
    r = np.zeros((B, T, d), dtype=dt)
    m = mask.astype(bool)
    c_prev = np.zeros((B, d), dtype=dt)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        ut = u[:, t]
        ft = _sigmoid(ut[:, d:2 * d] + v_f * c_prev + b_f)
        rt = _sigmoid(ut[:, 2 * d:] + v_r * c_prev + b_r)
        ct = ft * c_prev + (1.0 - ft) * ut[:, :d]
        ht = rt * ct + (1.0 - rt) * hw[:, t]
        mt = m[:, t, None]
        c_prev = np.where(mt, ct, c_prev)
        c[:, t] = c_prev
        h[:, t] = np.where(mt, ht, 0.0)
        f[:, t] = ft
        r[:, t] = rt
    return h, c, f, r


def sru_backward_numpy(gh, u, hw, v_f, v_r, c, f, r, mask, reverse):
    B, T, d3 = u.shape
    d = d3 // 3
    dt = u.dtype
    gu = np.zeros_like(u)
    ghw = np.zeros_like(hw)
    gvf = np.zeros(d, dtype=dt)
    gvr = np.zeros(d, dtype=dt)
    gbf = np.zeros(d, dtype=dt)
    gbr = np.zeros(d, dtype=dt)
    m = mask.astype(dt)
    carry = np.zeros((B, d), dtype=dt)
    order = list(range(T - 1, -1, -1)) if reverse else list(range(T))
    zeros = np.zeros((B, d), dtype=dt)
    for k in range(T - 1, -1, -1):
        t = order[k]
        cp = c[:, order[k - 1]] if k > 0 else zeros
        mt = m[:, t, None]
        ft, rt, ct = f[:, t], r[:, t], c[:, t]
        dh = gh[:, t] * mt
        dc = (carry + dh * rt) * mt
        dzr = dh * (ct - hw[:, t]) * rt * (1.0 - rt)
        dzf = dc * (cp - u[:, t, :d]) * ft * (1.0 - ft)
        gu[:, t, :d] = dc * (1.0 - ft)
        gu[:, t, d:2 * d] = dzf
        gu[:, t, 2 * d:] = dzr
        ghw[:, t] = dh * (1.0 - rt)
        gvf += (dzf * cp).sum(0)
        gvr += (dzr * cp).sum(0)
        gbf += dzf.sum(0)
        gbr += dzr.sum(0)
        dcp = dc * ft + dzf * v_f + dzr * v_r
        carry = mt * dcp + (1.0 - mt) * carry
    return gu, ghw, gvf, gvr, gbf, gbr


def scatter_add_rows_numpy(out, idx, rows):
    np.add.at(out, idx, rows)
    return out


# --------------------------------------------------------------------------- numba

if HAVE_NUMBA:

    @njit(cache=True)
    def sru_forward_numba(u, hw, v_f, v_r, b_f, b_r, mask, reverse):
        B, T, d3 = u.shape
        d = d3 // 3
        one = np.ones(1, dtype=u.dtype)[0]  # keeps float32 inputs in float32 arithmetic
        h = np.zeros((B, T, d), dtype=u.dtype)
        c = np.zeros((B, T, d), dtype=u.dtype)
        f = np.zeros((B, T, d), dtype=u.dtype)
        r = np.zeros((B, T, d), dtype=u.dtype)
        cp = np.zeros(d, dtype=u.dtype)
        for b in range(B):
            cp[:] = 0
            for k in range(T):
                t = T - 1 - k if reverse else k
                live = mask[b, t] != 0
                for j in range(d):
                    ft = one / (one + np.exp(-(u[b, t, d + j] + v_f[j] * cp[j] + b_f[j])))
                    rt = one / (one + np.exp(-(u[b, t, 2 * d + j] + v_r[j] * cp[j] + b_r[j])))
                    f[b, t, j] = ft
                    r[b, t, j] = rt
                    if live:
                        ct = ft * cp[j] + (one - ft) * u[b, t, j]
                        h[b, t, j] = rt * ct + (one - rt) * hw[b, t, j]
                        cp[j] = ct
                    c[b, t, j] = cp[j]
        return h, c, f, r

    @njit(cache=True)
    def sru_backward_numba(gh, u, hw, v_f, v_r, c, f, r, mask, reverse):
        B, T, d3 = u.shape
        d = d3 // 3
        gu = np.zeros_like(u)
        ghw = np.zeros_like(hw)
        gvf = np.zeros(d, dtype=np.float64)
        gvr = np.zeros(d, dtype=np.float64)
        gbf = np.zeros(d, dtype=np.float64)
        gbr = np.zeros(d, dtype=np.float64)
        carry = np.zeros(d, dtype=np.float64)
        for b in range(B):
            carry[:] = 0.0
            for k in range(T - 1, -1, -1):
                t = T - 1 - k if reverse else k
                if mask[b, t] == 0:
                    continue
                tp = (T - k if reverse else k - 1) if k > 0 else -1
                for j in range(d):
                    cp = c[b, tp, j] if tp >= 0 else 0.0
                    ft = f[b, t, j]
                    rt = r[b, t, j]
                    dh = gh[b, t, j]
                    dc = carry[j] + dh * rt
                    dzr = dh * (c[b, t, j] - hw[b, t, j]) * rt * (1.0 - rt)
                    dzf = dc * (cp - u[b, t, j]) * ft * (1.0 - ft)
                    gu[b, t, j] = dc * (1.0 - ft)
                    gu[b, t, d + j] = dzf
                    gu[b, t, 2 * d + j] = dzr
                    ghw[b, t, j] = dh * (1.0 - rt)
                    gvf[j] += dzf * cp
                    gvr[j] += dzr * cp
                    gbf[j] += dzf
                    gbr[j] += dzr
                    carry[j] = dc * ft + dzf * v_f[j] + dzr * v_r[j]
        dt = u.dtype
        return gu, ghw, gvf.astype(dt), gvr.astype(dt), gbf.astype(dt), gbr.astype(dt)

    @njit(cache=True)
    def scatter_add_rows_numba(out, idx, rows):
        n, width = rows.shape
        for i in range(n):
            k = idx[i]
            for j in range(width):
                out[k, j] += rows[i, j]
        return out

else:  # pragma: no cover
    sru_forward_numba = sru_forward_numpy
    sru_backward_numba = sru_backward_numpy
    scatter_add_rows_numba = scatter_add_rows_numpy


def _pick(numba_fn, numpy_fn):
    return numba_fn if BACKEND == "numba" else numpy_fn


sru_forward = _pick(sru_forward_numba, sru_forward_numpy)
sru_backward = _pick(sru_backward_numba, sru_backward_numpy)
_scatter_add_rows = _pick(scatter_add_rows_numba, scatter_add_rows_numpy)


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """``out[idx[i]] += rows[i]`` with repeated indices summed."""
    idx = np.ascontiguousarray(idx.reshape(-1), dtype=np.int64)
    rows = np.ascontiguousarray(rows.reshape(len(idx), -1), dtype=out.dtype)
    return _scatter_add_rows(out, idx, rows)
