"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 32] [--length 40] [--hidden 150]

Both implementations are imported directly, so the JESSI_KERNELS flag does not
matter here. The first numba call (compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from jessi.tensor import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sru_case(B, T, d, dtype, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(B, T, 3 * d)).astype(dtype)
    hw = rng.normal(size=(B, T, d)).astype(dtype)
    vecs = [rng.normal(size=d).astype(dtype) for _ in range(4)]
    lengths = rng.integers(T // 2, T + 1, size=B)
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(dtype)
    return u, hw, vecs, mask


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--length", type=int, default=40)
    ap.add_argument("--hidden", type=int, default=150)
    ap.add_argument("--vocab", type=int, default=5000)
    ap.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    dtype = np.dtype(args.dtype)
    u, hw, vecs, mask = sru_case(args.batch, args.length, args.hidden, dtype)

    def forward(impl):
        return lambda: impl(u, hw, *vecs, mask, False)

    _, c, f, r = kernels.sru_forward_numpy(u, hw, *vecs, mask, False)
    gh = np.ones_like(hw)

    def backward(impl):
        return lambda: impl(gh, u, hw, vecs[0], vecs[1], c, f, r, mask, False)

    rng = np.random.default_rng(1)
    n_tokens = args.batch * args.length
    idx = rng.integers(0, args.vocab, size=n_tokens).astype(np.int64)
    rows = rng.normal(size=(n_tokens, 64)).astype(dtype)

    def scatter(impl):
        return lambda: impl(np.zeros((args.vocab, 64), dtype=dtype), idx, rows)

    cases = [
        ("sru forward", forward(kernels.sru_forward_numba), forward(kernels.sru_forward_numpy)),
        ("sru backward", backward(kernels.sru_backward_numba), backward(kernels.sru_backward_numpy)),
        ("scatter-add rows", scatter(kernels.scatter_add_rows_numba), scatter(kernels.scatter_add_rows_numpy)),
    ]
    print(f"B={args.batch} T={args.length} d={args.hidden} dtype={dtype} best of {args.repeat}")
    print(f"{'kernel':<18} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, fast, slow in cases:
        fast()  # compile or load from cache
        t_nb, t_np = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<18} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
