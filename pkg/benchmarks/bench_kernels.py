"""Time the numba kernels against their numpy fallbacks on model-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from platerec.kernels import numba_impl, numpy_impl


def cases(rng):
    T, L, C = 50, 8, 38
    logp = np.log(rng.dirichlet(np.ones(C), size=T))
    label = rng.integers(0, C - 1, size=L)
    ext = np.full(2 * L + 1, C - 1, dtype=np.int64)
    ext[1::2] = label
    conv_in = rng.normal(size=(32, 50, 200, 1))
    conv_mid = rng.normal(size=(32, 25, 100, 32))
    cols = numpy_impl.im2col3x3(conv_mid)
    pool_out, arg = numpy_impl.maxpool2_forward(conv_mid)
    a = list(rng.integers(0, 37, size=8))
    b = list(rng.integers(0, 37, size=8))
    return {
        "ctc_alpha_beta (T=50, L=8)": lambda m: m.ctc_alpha_beta(logp, ext, C - 1),
        "im2col3x3 (32x50x200x1)": lambda m: m.im2col3x3(conv_in),
        "im2col3x3 (32x25x100x32)": lambda m: m.im2col3x3(conv_mid),
        "col2im3x3 (32x25x100x32)": lambda m: m.col2im3x3(cols, 32),
        "maxpool2_forward (32x25x100x32)": lambda m: m.maxpool2_forward(conv_mid),
        "maxpool2_backward (32x25x100x32)": lambda m: m.maxpool2_backward(pool_out, arg, conv_mid.shape),
        "levenshtein (8 vs 8)": lambda m: m.levenshtein(a, b),
    }


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if numba_impl is None:
        parser.exit(1, "numba is not installed; nothing to compare\n")
    rows = []
    for name, call in cases(np.random.default_rng(0)).items():
        t_np = best_of(lambda: call(numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(numba_impl), args.repeat)
        rows.append((name, t_np, t_nb))
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel'.ljust(width)}  {'numpy':>12}  {'numba':>12}  speedup")
    for name, t_np, t_nb in rows:
        print(f"{name.ljust(width)}  {t_np * 1e6:10.1f}us  {t_nb * 1e6:10.1f}us  {t_np / t_nb:6.2f}x")


if __name__ == "__main__":
    main()
