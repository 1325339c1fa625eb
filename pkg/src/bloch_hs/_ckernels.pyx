# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; :mod:`bloch_hs._pykernels` holds the reference twins."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, cos, sin, fmin, fmax, M_PI

cnp.import_array()


# ----------------------------------------------------------------------------
# greedy disk covering
# ----------------------------------------------------------------------------

cdef class _DiskIndex:
    cdef double x0, y0, size
    cdef int nbx, nby
    cdef list buckets
    cdef list cx, cy, r

    def __init__(self, double x0, double y0, double x1, double y1, double size):
        self.x0 = x0
        self.y0 = y0
        self.size = size
        self.nbx = max(1, <int>((x1 - x0) / size) + 1)
        self.nby = max(1, <int>((y1 - y0) / size) + 1)
        self.buckets = [[] for _ in range(self.nbx * self.nby)]
        self.cx = []
        self.cy = []
        self.r = []

    cdef void add(self, double x, double y, double r):
        cdef int k = len(self.cx)
        cdef int bx = <int>((x - self.x0) / self.size)
        cdef int by = <int>((y - self.y0) / self.size)
        bx = min(max(bx, 0), self.nbx - 1)
        by = min(max(by, 0), self.nby - 1)
        self.cx.append(x)
        self.cy.append(y)
        self.r.append(r)
        self.buckets[bx * self.nby + by].append(k)

    cdef double clearance(self, double x, double y, double x0, double y0, double x1, double y1, double cap):
        cdef double d = fmin(fmin(x - x0, x1 - x), fmin(y - y0, y1 - y))
        d = fmin(d, cap)
        cdef int bx = <int>((x - self.x0) / self.size)
        cdef int by = <int>((y - self.y0) / self.size)
        cdef int i, j, k
        cdef double dx, dy, t
        for i in range(max(bx - 1, 0), min(bx + 2, self.nbx)):
            for j in range(max(by - 1, 0), min(by + 2, self.nby)):
                for k in self.buckets[i * self.nby + j]:
                    dx = x - <double>self.cx[k]
                    dy = y - <double>self.cy[k]
                    t = sqrt(dx * dx + dy * dy) - <double>self.r[k]
                    if t < d:
                        d = t
        return d


def greedy_cover(double x0, double y0, double x1, double y1, double eps_max, double eps_min,
                 double target, int n):
    """Greedy capped-clearance packing; see ``_pykernels.greedy_cover``."""
    cdef double W = x1 - x0, H = y1 - y0
    cdef double s = fmax(W, H) / n
    cdef int nx = max(1, <int>(W / s + 0.5)), ny = max(1, <int>(H / s + 0.5))
    cdef double[:, ::1] d = np.empty((nx, ny))
    cdef double[::1] rowmax = np.empty(nx)
    cdef int i, j, i0, i1, j0, j1, ib, jb
    cdef double px, py, v, best, dx, dy, t, r, c, step, cx, cy, cand, area = 0.0
    cdef double total = W * H
    cdef double residual = 1.0
    cdef _DiskIndex index = _DiskIndex(x0, y0, x1, y1, 2.0 * eps_max)
    cdef int it, k, improved
    cdef double lo, hi, mid
    out_x = []
    out_y = []
    out_r = []
    for i in range(nx):
        px = x0 + (i + 0.5) * s
        best = -1e300
        for j in range(ny):
            py = y0 + (j + 0.5) * s
            v = fmin(fmin(px - x0, x1 - px), fmin(py - y0, y1 - py))
            v = fmin(v, eps_max)
            d[i, j] = v
            if v > best:
                best = v
        rowmax[i] = best
    while residual > target:
        ib = 0
        best = rowmax[0]
        for i in range(1, nx):
            if rowmax[i] > best:
                best = rowmax[i]
                ib = i
        if best < eps_min:
            break
        jb = 0
        for j in range(ny):
            if d[ib, j] == best:
                jb = j
                break
        cx = x0 + (ib + 0.5) * s
        cy = y0 + (jb + 0.5) * s
        c = index.clearance(cx, cy, x0, y0, x1, y1, eps_max)
        if c >= eps_max:
            # slide toward smaller x, then smaller y, keeping full clearance
            for k in range(2):
                lo = 0.0
                hi = s
                for it in range(40):
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
            # compass search for a local maximum of the clearance
            step = 0.5 * s
            while step > 1e-3 * s:
                improved = 0
                for k in range(4):
                    dx = step if k == 0 else (-step if k == 1 else 0.0)
                    dy = step if k == 2 else (-step if k == 3 else 0.0)
                    cand = index.clearance(cx + dx, cy + dy, x0, y0, x1, y1, eps_max)
                    if cand > c:
                        c = cand
                        cx += dx
                        cy += dy
                        improved = 1
                        break
                if not improved:
                    step *= 0.5
            c = fmin(c, eps_max)
        r = c * (1.0 - 1e-12)
        index.add(cx, cy, r)
        out_x.append(cx)
        out_y.append(cy)
        out_r.append(r)
        area += M_PI * r * r
        residual = 1.0 - area / total
        t = r + eps_max
        i0 = max(0, <int>floor((cx - t - x0) / s - 0.5))
        i1 = min(nx - 1, <int>floor((cx + t - x0) / s - 0.5) + 1)
        j0 = max(0, <int>floor((cy - t - y0) / s - 0.5))
        j1 = min(ny - 1, <int>floor((cy + t - y0) / s - 0.5) + 1)
        for i in range(i0, i1 + 1):
            px = x0 + (i + 0.5) * s
            dx = px - cx
            for j in range(j0, j1 + 1):
                py = y0 + (j + 0.5) * s
                dy = py - cy
                v = sqrt(dx * dx + dy * dy) - r
                if v < d[i, j]:
                    d[i, j] = v
            best = -1e300
            for j in range(ny):
                if d[i, j] > best:
                    best = d[i, j]
            rowmax[i] = best
    return np.array(out_x), np.array(out_y), np.array(out_r)


# ----------------------------------------------------------------------------
# point location
# ----------------------------------------------------------------------------

def locate(double[::1] px, double[::1] py, double[::1] cx, double[::1] cy, double[::1] eps,
           int box, double bx0, double by0, double bsize, int nbx, int nby,
           long[::1] start, long[::1] items):
    """Index of the cell containing each point, -1 outside all cells."""
    cdef Py_ssize_t n = px.shape[0], i, k
    cdef long[::1] out = np.full(n, -1, dtype=np.int64)
    cdef int ix, iy, b
    cdef long c
    cdef double dx, dy, e
    for i in range(n):
        ix = <int>floor((px[i] - bx0) / bsize)
        iy = <int>floor((py[i] - by0) / bsize)
        if ix < 0 or iy < 0 or ix >= nbx or iy >= nby:
            continue
        b = ix * nby + iy
        for k in range(start[b], start[b + 1]):
            c = items[k]
            dx = px[i] - cx[c]
            dy = py[i] - cy[c]
            e = eps[c] * (1.0 + 1e-12)
            if box:
                if -e <= dx <= e and -e <= dy <= e:
                    out[i] = c
                    break
            elif dx * dx + dy * dy <= e * e:
                out[i] = c
                break
    return np.asarray(out)


# ----------------------------------------------------------------------------
# first Bloch transform, per-cell contributions
# ----------------------------------------------------------------------------

def bloch_sum(double[:, ::1] xi, double[::1] cx, double[::1] cy, double[::1] eps,
              double[:, ::1] gw, double[:, ::1] yq, int mode,
              double complex[:, :, ::1] grid, double eta_max,
              double[:, ::1] X, double c):
    """``sum_p sum_q gw[p,q] exp(-i x_pq . xi) dphi_q(eps_p xi)`` for every ``xi``."""
    cdef Py_ssize_t nxi = xi.shape[0], nc = cx.shape[0], nq = yq.shape[0]
    cdef Py_ssize_t a, p, q
    cdef int ng = grid.shape[0], i0, j0
    cdef double h = 2.0 * eta_max / (ng - 1) if ng > 1 else 1.0
    cdef double e1, e2, u, v, fu, fv, w00, w10, w01, w11, ph, ph0, g
    cdef double complex acc, cell, dphi
    out = np.zeros(nxi, dtype=complex)
    cdef double complex[::1] res = out
    for a in range(nxi):
        acc = 0.0
        for p in range(nc):
            e1 = eps[p] * xi[a, 0]
            e2 = eps[p] * xi[a, 1]
            if mode == 0:
                u = (e1 + eta_max) / h
                v = (e2 + eta_max) / h
                i0 = <int>floor(u)
                j0 = <int>floor(v)
                i0 = min(max(i0, 0), ng - 2)
                j0 = min(max(j0, 0), ng - 2)
                fu = u - i0
                fv = v - j0
                w00 = (1 - fu) * (1 - fv)
                w10 = fu * (1 - fv)
                w01 = (1 - fu) * fv
                w11 = fu * fv
            cell = 0.0
            for q in range(nq):
                g = gw[p, q]
                if g == 0.0:
                    continue
                ph = -eps[p] * (yq[q, 0] * xi[a, 0] + yq[q, 1] * xi[a, 1])
                if mode == 0:
                    dphi = (w00 * grid[i0, j0, q] + w10 * grid[i0 + 1, j0, q]
                            + w01 * grid[i0, j0 + 1, q] + w11 * grid[i0 + 1, j0 + 1, q])
                else:
                    dphi = -1j * c * (e1 * X[q, 0] + e2 * X[q, 1])
                cell = cell + g * (cos(ph) + 1j * sin(ph)) * dphi
            ph0 = -(cx[p] * xi[a, 0] + cy[p] * xi[a, 1])
            acc = acc + (cos(ph0) + 1j * sin(ph0)) * cell
        res[a] = acc
    return out
