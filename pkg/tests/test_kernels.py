"""Both kernel back-ends against each other and against a step-by-step oracle."""

import os
import subprocess
import sys

import numpy as np
import pytest

from jessi.tensor import RngStream, kernels


def sru_oracle(x_u, hw, v_f, v_r, b_f, b_r, length, reverse):
    """Plain per-step recurrence over one unpadded sequence."""
    d = hw.shape[-1]
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    T = x_u.shape[0]
    h = np.zeros((T, d))
    c = np.zeros(d)
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        wx, fx, rx = x_u[t, :d], x_u[t, d:2 * d], x_u[t, 2 * d:]
        f = sig(fx + v_f * c + b_f)
        r = sig(rx + v_r * c + b_r)
        c = f * c + (1 - f) * wx
        h[t] = r * c + (1 - r) * hw[t]
    return h


def random_case(rng, B=3, T=7, d=4):
    u = rng.normal(shape=(B, T, 3 * d))
    hw = rng.normal(shape=(B, T, d))
    vecs = [rng.normal(shape=d) for _ in range(4)]
    lengths = rng.integers(1, T + 1, shape=B)
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.uint8)
    return u, hw, vecs, mask, lengths


@pytest.mark.parametrize("reverse", [False, True])
def test_numba_and_numpy_forward_agree(reverse):
    u, hw, vecs, mask, _ = random_case(RngStream(1))
    a = kernels.sru_forward_numba(u, hw, *vecs, mask, reverse)
    b = kernels.sru_forward_numpy(u, hw, *vecs, mask, reverse)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


@pytest.mark.parametrize("reverse", [False, True])
def test_numba_and_numpy_backward_agree(reverse):
    rng = RngStream(2)
    u, hw, vecs, mask, _ = random_case(rng)
    h, c, f, r = kernels.sru_forward_numpy(u, hw, *vecs, mask, reverse)
    gh = rng.normal(shape=h.shape)
    a = kernels.sru_backward_numba(gh, u, hw, vecs[0], vecs[1], c, f, r, mask, reverse)
    b = kernels.sru_backward_numpy(gh, u, hw, vecs[0], vecs[1], c, f, r, mask, reverse)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-11)


@pytest.mark.parametrize("impl", ["numba", "numpy"])
def test_sru_matches_sequential_oracle(impl):
    fwd = getattr(kernels, f"sru_forward_{impl}")
    rng = RngStream(3)
    for _ in range(20):
        u, hw, vecs, mask, lengths = random_case(rng)
        for reverse in (False, True):
            h = fwd(u, hw, *vecs, mask, reverse)[0]
            for b in range(len(lengths)):
                ref = sru_oracle(u[b], hw[b], *vecs, int(lengths[b]), reverse)
                np.testing.assert_allclose(h[b], ref, rtol=0, atol=1e-10)


def test_float32_inputs_stay_float32():
    u, hw, vecs, mask, _ = random_case(RngStream(4))
    f32 = [a.astype(np.float32) for a in (u, hw, *vecs)]
    for impl in (kernels.sru_forward_numba, kernels.sru_forward_numpy):
        h = impl(f32[0], f32[1], *f32[2:], mask, False)[0]
        assert h.dtype == np.float32


@pytest.mark.parametrize("impl", ["numba", "numpy"])
def test_scatter_add_sums_repeats(impl):
    fn = getattr(kernels, f"scatter_add_rows_{impl}")
    rng = RngStream(5)
    idx = rng.integers(0, 5, shape=40).astype(np.int64)
    rows = rng.normal(shape=(40, 3))
    out = fn(np.zeros((5, 3)), idx, rows)
    ref = np.zeros((5, 3))
    np.add.at(ref, idx, rows)
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("flag", ["numpy", "numba"])
def test_env_flag_selects_backend(flag):
    env = dict(os.environ, JESSI_KERNELS=flag)
    out = subprocess.run([sys.executable, "-c", "from jessi.tensor import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == flag


def test_env_flag_rejects_unknown_value():
    env = dict(os.environ, JESSI_KERNELS="cuda")
    out = subprocess.run([sys.executable, "-c", "import jessi.tensor"], env=env, capture_output=True, text=True)
    assert out.returncode != 0
    assert "JESSI_KERNELS" in out.stderr
