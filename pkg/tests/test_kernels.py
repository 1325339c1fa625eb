import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bloch_hs import _pykernels, kernels

compiled = pytest.importorskip("bloch_hs._ckernels")


@settings(max_examples=8)
@given(st.floats(0.1, 0.3), st.floats(0.05, 0.2), st.sampled_from([64, 128, 200]))
def test_greedy_backends_identical(eps_max, target, grid):
    args = (0.0, 0.0, 1.0, 1.0, eps_max, eps_max / 10, target, grid)
    a = compiled.greedy_cover(*args)
    b = _pykernels.greedy_cover(*args)
    for u, v in zip(a, b):
        assert np.array_equal(np.asarray(u), np.asarray(v))


def _index(cx, cy, eps, size, nb):
    buckets = [[] for _ in range(nb * nb)]
    for k in range(len(cx)):
        e = eps[k]
        for i in range(max(0, int((cx[k] - e) // size)), min(nb - 1, int((cx[k] + e) // size)) + 1):
            for j in range(max(0, int((cy[k] - e) // size)), min(nb - 1, int((cy[k] + e) // size)) + 1):
                buckets[i * nb + j].append(k)
    start = np.concatenate([[0], np.cumsum([len(b) for b in buckets])]).astype(np.int64)
    items = np.array([k for b in buckets for k in b], dtype=np.int64)
    return start, items


@pytest.mark.parametrize("box", [0, 1])
def test_locate_backends_identical(box, rng):
    g = np.linspace(0.05, 0.95, 10)
    cx, cy = (a.ravel().copy() for a in np.meshgrid(g, g))
    eps = np.full(cx.size, 0.04)
    start, items = _index(cx, cy, eps, 0.1, 10)
    px, py = rng.uniform(0, 1, 5000), rng.uniform(0, 1, 5000)
    args = (px, py, cx, cy, eps, box, 0.0, 0.0, 0.1, 10, 10, start, items)
    a = compiled.locate(*args)
    b = _pykernels.locate(*args)
    assert np.array_equal(np.asarray(a), b)
    assert np.any(b >= 0) and np.any(b < 0)


@pytest.mark.parametrize("mode", [0, 1])
def test_bloch_sum_backends_agree(mode, rng):
    n, q, m, g = 7, 12, 9, 5
    xi = rng.uniform(-3, 3, (m, 2))
    cx, cy = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    eps = rng.uniform(0.05, 0.15, n)
    gw = rng.normal(size=(n, q))
    yq = rng.uniform(-1, 1, (q, 2))
    grid = rng.normal(size=(g, g, q)) + 1j * rng.normal(size=(g, g, q))
    X = rng.normal(size=(q, 2))
    args = (xi, cx, cy, eps, gw, yq, mode, grid, 1.0, X, 0.5)
    a = np.asarray(compiled.bloch_sum(*args))
    b = _pykernels.bloch_sum(*args)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_bloch_sum_direct_formula(rng):
    # brute-force double sum with the linear model
    n, q = 3, 4
    xi = rng.uniform(-2, 2, (5, 2))
    cx, cy, eps = rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0.05, 0.2, n)
    gw, yq, X = rng.normal(size=(n, q)), rng.uniform(-1, 1, (q, 2)), rng.normal(size=(q, 2))
    out = _pykernels.bloch_sum(xi, cx, cy, eps, gw, yq, 1, np.zeros((2, 2, 1), complex), 1.0, X, 0.7)
    for a, k in enumerate(xi):
        s = 0j
        for p in range(n):
            for j in range(q):
                x = np.array([cx[p], cy[p]]) + eps[p] * yq[j]
                s += gw[p, j] * np.exp(-1j * x @ k) * (-1j * 0.7 * (eps[p] * k) @ X[j])
        assert out[a] == pytest.approx(s, rel=1e-12, abs=1e-14)


def test_load_respects_pure_flag():
    assert kernels.load(pure=True) is _pykernels
    assert kernels.load(pure=False) is compiled
    assert kernels.BACKEND == "compiled"


def test_env_var_selects_python_backend():
    env = dict(os.environ, BLOCH_HS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from bloch_hs import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
