"""Time the compiled kernels against their NumPy twins.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from bloch_hs import _pykernels, kernels


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases():
    rng = np.random.default_rng(0)
    cover = (0.0, 0.0, 1.0, 1.0, 0.1, 0.1 / 40, 0.05, 512)

    cx, cy, r = _pykernels.greedy_cover(*cover)
    size = 2 * float(np.max(r))
    nb = int(np.ceil(1.0 / size))
    buckets = [[] for _ in range(nb * nb)]
    for k in range(len(cx)):
        e = r[k]
        for i in range(max(0, int((cx[k] - e) // size)), min(nb - 1, int((cx[k] + e) // size)) + 1):
            for j in range(max(0, int((cy[k] - e) // size)), min(nb - 1, int((cy[k] + e) // size)) + 1):
                buckets[i * nb + j].append(k)
    start = np.concatenate([[0], np.cumsum([len(b) for b in buckets])]).astype(np.int64)
    items = np.array([k for b in buckets for k in b], dtype=np.int64)
    px, py = rng.uniform(0, 1, 400_000), rng.uniform(0, 1, 400_000)
    loc = (px, py, cx, cy, r, 0, 0.0, 0.0, size, nb, nb, start, items)

    q, g = 400, 9
    xi = rng.uniform(-4, 4, (60, 2))
    gw = rng.normal(size=(len(cx), q))
    yq = rng.uniform(-1, 1, (q, 2))
    grid = rng.normal(size=(g, g, q)) + 1j * rng.normal(size=(g, g, q))
    X = rng.normal(size=(q, 2))
    bs = (xi, cx, cy, r, gw, yq, 0, grid, 1.0, X, 0.5)
    return {"greedy_cover": cover, "locate": loc, "bloch_sum": bs}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    compiled = kernels.load(pure=False)
    if compiled is _pykernels:
        print("compiled extension not built; nothing to compare")
        return
    print(f"{'kernel':<14}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}  agree")
    for name, args_ in _cases().items():
        tc, oc = _best(lambda: getattr(compiled, name)(*args_), args.repeat)
        tp, op = _best(lambda: getattr(_pykernels, name)(*args_), args.repeat)
        if isinstance(oc, tuple):
            agree = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(oc, op))
        else:
            agree = bool(np.allclose(np.asarray(oc), np.asarray(op), rtol=1e-12, atol=1e-14))
        print(f"{name:<14}{tc:>14.4f}{tp:>14.4f}{tp / tc:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
