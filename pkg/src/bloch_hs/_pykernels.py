"""NumPy reference implementations of the compiled kernels.

Each function mirrors the arithmetic of its twin in ``_ckernels.pyx`` so both
backends return the same numbers; see ``tests/test_kernels.py``.
"""

from __future__ import annotations

import math

import numpy as np


class _DiskIndex:
    """Bucket grid over placed disks for clearance queries capped at ``size / 2``."""

    def __init__(self, x0, y0, x1, y1, size):
        self.x0, self.y0, self.size = x0, y0, size
        self.nbx = max(1, int((x1 - x0) / size) + 1)
        self.nby = max(1, int((y1 - y0) / size) + 1)
        self.buckets = [[] for _ in range(self.nbx * self.nby)]
        self.cx, self.cy, self.r = [], [], []

    def add(self, x, y, r):
        bx = min(max(int((x - self.x0) / self.size), 0), self.nbx - 1)
        by = min(max(int((y - self.y0) / self.size), 0), self.nby - 1)
        self.buckets[bx * self.nby + by].append(len(self.cx))
        self.cx.append(x)
        self.cy.append(y)
        self.r.append(r)

    def clearance(self, x, y, x0, y0, x1, y1, cap):
        d = min(min(x - x0, x1 - x), min(y - y0, y1 - y))
        d = min(d, cap)
        bx = int((x - self.x0) / self.size)
        by = int((y - self.y0) / self.size)
        cx, cy, r = self.cx, self.cy, self.r
        for i in range(max(bx - 1, 0), min(bx + 2, self.nbx)):
            for j in range(max(by - 1, 0), min(by + 2, self.nby)):
                for k in self.buckets[i * self.nby + j]:
                    dx = x - cx[k]
                    dy = y - cy[k]
                    t = math.sqrt(dx * dx + dy * dy) - r[k]
                    if t < d:
                        d = t
        return d


def greedy_cover(x0, y0, x1, y1, eps_max, eps_min, target, n):
    """Greedy packing of disks with radii in ``[eps_min, eps_max]``.

    A pixel grid with ``n`` cells along the longer side stores the clearance
    ``min(distance to boundary and placed disks, eps_max)``. Each step takes the
    first pixel (row-major) of largest clearance, refines the center in the
    continuum, places the largest admissible disk there and updates the grid.

    Refinement: a disk of full radius ``eps_max`` is slid toward smaller ``x``,
    then smaller ``y``, while it keeps full clearance (bisection over one
    pixel); a smaller disk climbs the clearance by compass search.

    Returns
    -------
    cx, cy, r : ndarray
        Centers and radii in placement order.
    """
    W, H = x1 - x0, y1 - y0
    s = max(W, H) / n
    nx = max(1, int(W / s + 0.5))
    ny = max(1, int(H / s + 0.5))
    px = x0 + (np.arange(nx) + 0.5) * s
    py = y0 + (np.arange(ny) + 0.5) * s
    d = np.minimum(np.minimum(px - x0, x1 - px)[:, None], np.minimum(py - y0, y1 - py)[None, :])
    d = np.minimum(d, eps_max)
    rowmax = d.max(axis=1)
    index = _DiskIndex(x0, y0, x1, y1, 2.0 * eps_max)
    area, total, residual = 0.0, W * H, 1.0
    out_x, out_y, out_r = [], [], []
    while residual > target:
        ib = int(np.argmax(rowmax))
        best = rowmax[ib]
        if best < eps_min:
            break
        jb = int(np.argmax(d[ib] == best))
        cx = x0 + (ib + 0.5) * s
        cy = y0 + (jb + 0.5) * s
        c = index.clearance(cx, cy, x0, y0, x1, y1, eps_max)
        if c >= eps_max:
            for k in range(2):
                lo, hi = 0.0, s
                for _ in range(40):
                    mid = 0.5 * (lo + hi)
                    if k == 0:
                        cand = index.clearance(cx - mid, cy, x0, y0, x1, y1, eps_max)
                    else:
                        cand = index.clearance(cx, cy - mid, x0, y0, x1, y1, eps_max)
                    if cand >= eps_max:
                        lo = mid
                    else:
                        hi = mid
                if k == 0:
                    cx -= lo
                else:
                    cy -= lo
            c = eps_max
        else:
            step = 0.5 * s
            while step > 1e-3 * s:
                improved = False
                for dx, dy in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
                    cand = index.clearance(cx + dx, cy + dy, x0, y0, x1, y1, eps_max)
                    if cand > c:
                        c, cx, cy = cand, cx + dx, cy + dy
                        improved = True
                        break
                if not improved:
                    step *= 0.5
            c = min(c, eps_max)
        r = c * (1.0 - 1e-12)
        index.add(cx, cy, r)
        out_x.append(cx)
        out_y.append(cy)
        out_r.append(r)
        area += math.pi * r * r
        residual = 1.0 - area / total
        t = r + eps_max
        i0 = max(0, math.floor((cx - t - x0) / s - 0.5))
        i1 = min(nx - 1, math.floor((cx + t - x0) / s - 0.5) + 1)
        j0 = max(0, math.floor((cy - t - y0) / s - 0.5))
        j1 = min(ny - 1, math.floor((cy + t - y0) / s - 0.5) + 1)
        if i1 < i0 or j1 < j0:
            continue
        dx = (px[i0:i1 + 1] - cx)[:, None]
        dy = (py[j0:j1 + 1] - cy)[None, :]
        win = d[i0:i1 + 1, j0:j1 + 1]
        np.minimum(win, np.sqrt(dx * dx + dy * dy) - r, out=win)
        rowmax[i0:i1 + 1] = d[i0:i1 + 1].max(axis=1)
    return np.array(out_x), np.array(out_y), np.array(out_r)


def locate(px, py, cx, cy, eps, box, bx0, by0, bsize, nbx, nby, start, items):
    """Index of the cell containing each point, -1 outside all cells."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    out = np.full(len(px), -1, dtype=np.int64)
    ix = np.floor((px - bx0) / bsize).astype(np.int64)
    iy = np.floor((py - by0) / bsize).astype(np.int64)
    ok = (ix >= 0) & (iy >= 0) & (ix < nbx) & (iy < nby)
    pts = np.nonzero(ok)[0]
    b = ix[pts] * nby + iy[pts]
    lo, cnt = start[b], start[b + 1] - start[b]
    for k in range(int(cnt.max()) if len(cnt) else 0):
        live = (cnt > k) & (out[pts] < 0)
        p = pts[live]
        c = items[lo[live] + k]
        dx, dy = px[p] - cx[c], py[p] - cy[c]
        e = eps[c] * (1.0 + 1e-12)
        if box:
            hit = (-e <= dx) & (dx <= e) & (-e <= dy) & (dy <= e)
        else:
            hit = dx * dx + dy * dy <= e * e
        out[p[hit]] = c[hit]
    return out


def bloch_sum(xi, cx, cy, eps, gw, yq, mode, grid, eta_max, X, c):
    """``sum_p sum_q gw[p,q] exp(-i x_pq . xi) dphi_q(eps_p xi)`` for every ``xi``.

    ``mode`` 0 interpolates ``dphi`` bilinearly on the ``eta`` grid ``grid``
    (shape ``(n, n, nq)`` over ``[-eta_max, eta_max]^2``); ``mode`` 1 uses the
    linear model ``-i c (eta . X_q)``.
    """
    xi = np.asarray(xi, dtype=float)
    ng = grid.shape[0]
    h = 2.0 * eta_max / (ng - 1) if ng > 1 else 1.0
    out = np.zeros(len(xi), dtype=complex)
    for a, (x1, x2) in enumerate(xi):
        e1, e2 = eps * x1, eps * x2
        ph = -eps[:, None] * (yq[:, 0] * x1 + yq[:, 1] * x2)[None, :]
        if mode == 0:
            u, v = (e1 + eta_max) / h, (e2 + eta_max) / h
            i0 = np.clip(np.floor(u).astype(int), 0, ng - 2)
            j0 = np.clip(np.floor(v).astype(int), 0, ng - 2)
            fu, fv = (u - i0)[:, None], (v - j0)[:, None]
            dphi = ((1 - fu) * (1 - fv) * grid[i0, j0] + fu * (1 - fv) * grid[i0 + 1, j0]
                    + (1 - fu) * fv * grid[i0, j0 + 1] + fu * fv * grid[i0 + 1, j0 + 1])
        else:
            dphi = -1j * c * (e1[:, None] * X[None, :, 0] + e2[:, None] * X[None, :, 1])
        cell = np.sum(gw * (np.cos(ph) + 1j * np.sin(ph)) * dphi, axis=1)
        ph0 = -(cx * x1 + cy * x2)
        out[a] = np.sum((np.cos(ph0) + 1j * np.sin(ph0)) * cell)
    return out
