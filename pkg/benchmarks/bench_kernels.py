"""Compare the compiled and numpy kernel backends on tuner-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1]
"""

import argparse
import timeit

import numpy as np

from paretune import kernels
from paretune.param_space import SystemDescription, build_search_space


def make_inputs(scale: int, seed: int = 0):
    space = build_search_space(SystemDescription(11.01, 11.01, 176.16, 4000))
    alphas = np.linspace(0.01, 1.0, 100 * scale)
    cutoffs = np.linspace(2.0, 6.0, 41 * scale)
    real = kernels.get_backend("python").real_error_table(alphas, cutoffs, 1000.0, 4000, space.system.volume)
    rng = np.random.default_rng(seed)
    hmax = rng.uniform(0.5, 2.0, len(space.grids) * len(space.orders) * scale)
    orders = np.resize(np.array(space.orders), hmax.size)
    recip = 0.01 * alphas[None, :] * (alphas[None, :] * hmax[:, None]) ** orders[:, None]
    n = 10_000 * scale
    keys = np.column_stack([rng.integers(0, 41, n), rng.integers(8, 50_000, n), rng.integers(2, 7, n)])
    keys = keys[np.lexsort(keys.T[::-1])]
    return dict(alphas=alphas, cutoffs=cutoffs, volume=space.system.volume, real=real, recip=recip, keys=keys)


def cases(backend, inp):
    return {
        "real_error_table": lambda: backend.real_error_table(inp["alphas"], inp["cutoffs"], 1000.0, 4000, inp["volume"]),
        "widest_feasible_runs": lambda: backend.widest_feasible_runs(inp["real"], inp["recip"], 5e-4),
        "pareto_mask": lambda: backend.pareto_mask(inp["keys"]),
    }


def check_agreement(inp):
    py, cy = (cases(kernels.get_backend(b), inp) for b in ("python", "cython"))
    for name in py:
        a, b = py[name](), cy[name]()
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        for x, y in zip(a, b):
            x, y = np.asarray(x), np.asarray(y)
            same = np.allclose(x, y, rtol=1e-14, atol=0) if x.dtype.kind == "f" else np.array_equal(x, y)
            if not same:
                raise SystemExit(f"{name}: backends disagree")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=int, default=1, help="multiply input sizes")
    args = ap.parse_args(argv)

    inp = make_inputs(args.scale)
    backends = kernels.available_backends()
    if "cython" in backends:
        check_agreement(inp)
    else:
        print("compiled kernels not built; timing the numpy backend only")

    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name in cases(kernels.get_backend("python"), inp):
        best = {}
        for b in backends:
            fn = cases(kernels.get_backend(b), inp)[name]
            best[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        row = f"{name:<22}" + "".join(f"{best[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{best['python'] / best['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
