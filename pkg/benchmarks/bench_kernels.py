"""Compare the compiled and numpy convolution kernels layer by layer.

    python benchmarks/bench_kernels.py [--sizes 64,128,256] [--reps 5]

Times forward and input-gradient passes for each conv shape of the default
network and prints the numpy/compiled ratio. Also checks the two backends
agree to 1e-9 relative.
"""

import argparse
import time

import numpy as np

from mgst import _kernels_py, kernels
from mgst.network import DEFAULT_TOPOLOGY

try:
    from mgst import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="64,128,256")
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"backends available: {kernels.available_backends()}")
    print(f"{'layer':>10} {'size':>6} {'pass':>8} {'numpy ms':>10} {'cython ms':>10} {'ratio':>7}")
    scale = 1
    for entry in DEFAULT_TOPOLOGY:
        if entry[0] == "avgpool":
            scale *= 2
        if entry[0] != "conv":
            continue
        _, cin, cout = entry
        w = rng.normal(size=(cout, cin, 3, 3))
        b = rng.normal(size=cout)
        for size in sizes:
            side = size // scale
            x = rng.normal(size=(cin, side, side))
            g = rng.normal(size=(cout, side, side))
            ref = _kernels_py.conv3x3_forward(x, w, b)
            got = _ckernels.conv3x3_forward(x, w, b)
            assert np.max(np.abs(ref - got)) <= 1e-9 * np.max(np.abs(ref))
            ref = _kernels_py.conv3x3_backward(g, w)
            got = _ckernels.conv3x3_backward(g, w)
            assert np.max(np.abs(ref - got)) <= 1e-9 * np.max(np.abs(ref))
            for name, py_fn, c_fn in (
                ("forward", lambda: _kernels_py.conv3x3_forward(x, w, b), lambda: _ckernels.conv3x3_forward(x, w, b)),
                ("backward", lambda: _kernels_py.conv3x3_backward(g, w), lambda: _ckernels.conv3x3_backward(g, w)),
            ):
                t_py = best_of(py_fn, args.reps) * 1e3
                t_c = best_of(c_fn, args.reps) * 1e3
                print(f"{cin:>4}->{cout:<4} {side:>6} {name:>8} {t_py:>10.3f} {t_c:>10.3f} {t_py / t_c:>6.2f}x")


if __name__ == "__main__":
    main()
