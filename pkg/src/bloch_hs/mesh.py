"""Interface-conforming triangulations of the reference cells.

Curved cells (disk, confocal ellipse, square with a disk inclusion) are built
from nested closed rings that are triangulated pairwise by a zipper sweep in
the first quadrant and then mirrored, so every mesh is symmetric under both
coordinate reflections. Square cells with slabs use tensor grids whose
diagonals are mirrored in the same way.

Boundary vertices carry bit markers: ``LEFT``, ``RIGHT``, ``BOTTOM``, ``TOP``
for square faces and ``OUTER`` for curved boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError
from .geometry import (CORE, COATING, ConfocalEllipse, DiskInclusion,
                       LaminateCell, PeriodicSquare)

LEFT, RIGHT, BOTTOM, TOP, OUTER = 1, 2, 4, 8, 16

# tangential spacing relative to h; keeps zipper triangles below 1.5 h
_TANGENTIAL = 0.85


@dataclass
class Mesh:
    """Triangulation with vertex markers and triangle region labels."""

    vertices: np.ndarray
    triangles: np.ndarray
    markers: np.ndarray
    regions: np.ndarray
    h: float
    conforming: bool = True

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @property
    def max_diameter(self) -> float:
        return float(self.diameters().max())

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def boundary(self) -> np.ndarray:
        """Indices of boundary vertices."""
        return np.flatnonzero(self.markers)

    def boundary_edges(self) -> np.ndarray:
        """Edges belonging to exactly one triangle, oriented counter-clockwise."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return e[cnt[inv.ravel()] == 1]


def _ring_mesh(rings: list, band_regions: list, h: float) -> Mesh:
    """Triangulate nested rings given by their first-quadrant points.

    ``rings[0]`` is the single center point; ``rings[k]`` is an array of
    ``m_k + 1`` points ordered from the positive first axis to the positive
    second axis. ``band_regions[k-1]`` labels the band between rings k-1 and k.
    """
    verts = [np.zeros((1, 2))]
    offsets = [0]
    ms = [0]
    start = 1
    for q in rings[1:]:
        m = len(q) - 1
        full = np.concatenate([
            q[:m],
            q[m:0:-1] * [-1, 1],
            q[:m] * [-1, -1],
            q[m:0:-1] * [1, -1],
        ])
        verts.append(full)
        offsets.append(start)
        ms.append(m)
        start += 4 * m
    vertices = np.concatenate(verts)

    def gidx(k, s, quad):
        if k == 0:
            return 0
        m = ms[k]
        j = (s, 2 * m - s, 2 * m + s, 4 * m - s)[quad] % (4 * m)
        return offsets[k] + j

    tris = []
    regs = []
    for k in range(1, len(rings)):
        mo = ms[k]
        local = []
        if k == 1:
            local = [((0, 0), (1, b), (1, b + 1)) for b in range(mo)]
        else:
            mi = ms[k - 1]
            qi, qo = rings[k - 1], rings[k]
            a = b = 0
            while a < mi or b < mo:
                # shortest-diagonal rule
                if a == mi or (b < mo and np.linalg.norm(qo[b + 1] - qi[a])
                                <= np.linalg.norm(qi[a + 1] - qo[b])):
                    local.append(((k - 1, a), (k, b), (k, b + 1)))
                    b += 1
                else:
                    local.append(((k - 1, a), (k, b), (k - 1, a + 1)))
                    a += 1
        for quad in range(4):
            for tri in local:
                tris.append([gidx(kk, s, quad) for kk, s in tri])
                regs.append(band_regions[k - 1])
    triangles = np.array(tris, dtype=np.int64)
    markers = np.zeros(len(vertices), dtype=np.int64)
    markers[offsets[-1]:] = OUTER
    mesh = Mesh(vertices, triangles, markers, np.array(regs, dtype=np.int64), h)
    _orient(mesh)
    return mesh


def _orient(mesh: Mesh) -> None:
    a = mesh.signed_areas()
    flip = a < 0
    mesh.triangles[flip] = mesh.triangles[flip][:, [0, 2, 1]]
    if np.any(np.abs(a) <= 1e-14 * mesh.h ** 2):
        raise GeometryError("degenerate triangle generated")


def _circle_quadrant(r: float, h: float) -> np.ndarray:
    m = max(1, math.ceil(0.5 * math.pi * r / (_TANGENTIAL * h)))
    t = np.linspace(0.0, 0.5 * math.pi, m + 1)
    return r * np.column_stack([np.cos(t), np.sin(t)])


def _ellipse_quadrant(a: float, b: float, h: float) -> np.ndarray:
    t = np.linspace(0.0, 0.5 * math.pi, 2001)
    p = np.column_stack([a * np.cos(t), b * np.sin(t)])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
    m = max(1, math.ceil(s[-1] / (_TANGENTIAL * h)))
    ts = np.interp(np.linspace(0.0, s[-1], m + 1), s, t)
    ts[0], ts[-1] = 0.0, 0.5 * math.pi
    q = np.column_stack([a * np.cos(ts), b * np.sin(ts)])
    q[0, 1] = 0.0
    q[-1, 0] = 0.0
    return q


def _disk_mesh(geom: DiskInclusion, h: float) -> Mesh:
    R = geom.R
    k1 = max(1, math.ceil(R / h))
    k2 = max(1, math.ceil((1.0 - R) / h))
    radii = [R * k / k1 for k in range(1, k1 + 1)] + [R + (1 - R) * k / k2 for k in range(1, k2 + 1)]
    rings = [np.zeros((1, 2))] + [_circle_quadrant(r, h) for r in radii]
    regions = [CORE] * k1 + [COATING] * k2
    return _ring_mesh(rings, regions, h)


def _ellipse_mesh(geom: ConfocalEllipse, h: float) -> Mesh:
    a1 = geom.semi_axes(geom.rho1)
    a2 = geom.semi_axes(geom.rho2)
    k1 = max(1, math.ceil(a1.max() / h))
    rings = [np.zeros((1, 2))]
    for k in range(1, k1 + 1):
        s = k / k1
        rings.append(_ellipse_quadrant(s * a1[0], s * a1[1], h))
    J = int(np.argmax(a2 - a1))
    m = np.asarray(geom.m)
    k2 = max(1, math.ceil((a2[J] - a1[J]) / h))
    for k in range(1, k2 + 1):
        aj = a1[J] + (a2[J] - a1[J]) * k / k2
        rho = aj ** 2 - m[J]
        ax = np.sqrt(rho + m)
        rings.append(_ellipse_quadrant(ax[0], ax[1], h))
    return _ring_mesh(rings, [CORE] * k1 + [COATING] * k2, h)


def _square_quadrant(half: float, m: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, m + 1)
    x = np.where(s <= 0.5, half, half * (2.0 - 2.0 * s))
    y = np.where(s <= 0.5, half * 2.0 * s, half)
    return np.column_stack([x, y])


def _periodic_disk_mesh(geom: PeriodicSquare, h: float) -> Mesh:
    R = geom.size
    k1 = max(1, math.ceil(R / h))
    rings = [np.zeros((1, 2))] + [_circle_quadrant(R * k / k1, h) for k in range(1, k1 + 1)]
    m_out = 2 * max(1, math.ceil(0.5 / (_TANGENTIAL * h)))
    k2 = max(1, math.ceil((0.5 * math.sqrt(2.0) - R) / h))
    circle = rings[-1]
    for k in range(1, k2 + 1):
        lam = k / k2
        length = (1 - lam) * 0.5 * math.pi * R + lam * 1.0
        m = m_out if k == k2 else max(len(circle) - 1, math.ceil(length / (_TANGENTIAL * h)))
        s = np.linspace(0.0, 1.0, m + 1)
        c = R * np.column_stack([np.cos(0.5 * math.pi * s), np.sin(0.5 * math.pi * s)])
        rings.append((1 - lam) * c + lam * _square_quadrant(0.5, m))
    mesh = _ring_mesh(rings, [CORE] * k1 + [COATING] * k2, h)
    mesh.vertices += 0.5
    _square_markers(mesh, 0.0, 1.0)
    return mesh


def _graded(breaks, h):
    pts = [np.array([breaks[0]])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pts.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pts)


def _tensor_mesh(xs, ys, center, core_fn, h) -> Mesh:
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v01 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    cx = 0.5 * (X[:-1, :-1] + X[1:, :-1]).ravel() - center
    cy = 0.5 * (Y[:-1, :-1] + Y[:-1, 1:]).ravel() - center
    main = cx * cy >= 0
    t1 = np.where(main[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    t2 = np.where(main[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.concatenate([t1, t2])
    mesh = Mesh(vertices, triangles, np.zeros(len(vertices), dtype=np.int64),
                np.zeros(len(triangles), dtype=np.int64), h)
    mesh.regions = np.where(core_fn(mesh.centroids()), CORE, COATING)
    _orient(mesh)
    return mesh


def _square_markers(mesh: Mesh, lo: float, hi: float) -> None:
    v = mesh.vertices
    tol = 1e-12
    v[np.abs(v - lo) < tol] = lo
    v[np.abs(v - hi) < tol] = hi
    mk = np.zeros(len(v), dtype=np.int64)
    mk |= np.where(v[:, 0] == lo, LEFT, 0)
    mk |= np.where(v[:, 0] == hi, RIGHT, 0)
    mk |= np.where(v[:, 1] == lo, BOTTOM, 0)
    mk |= np.where(v[:, 1] == hi, TOP, 0)
    mesh.markers = mk


def _laminate_mesh(geom: LaminateCell, h: float) -> Mesh:
    a = geom.a
    along = _graded([-1.0, -a, a, 1.0], h)
    n = 2 * max(1, math.ceil(1.0 / h))
    across = np.linspace(-1.0, 1.0, n + 1)
    xs, ys = (along, across) if geom.axis == 1 else (across, along)
    mesh = _tensor_mesh(xs, ys, 0.0, geom.core, h)
    _square_markers(mesh, -1.0, 1.0)
    return mesh


def _periodic_slab_mesh(geom: PeriodicSquare, h: float) -> Mesh:
    a = geom.size
    along = _graded([0.0, 0.5 - a, 0.5 + a, 1.0], h)
    n = 2 * max(1, math.ceil(0.5 / h))
    across = np.linspace(0.0, 1.0, n + 1)
    xs, ys = (along, across) if geom.axis == 1 else (across, along)
    mesh = _tensor_mesh(xs, ys, 0.5, geom.core, h)
    _square_markers(mesh, 0.0, 1.0)
    return mesh


def generate_cell_mesh(geometry, h: float) -> Mesh:
    """Interface-conforming mesh of a reference cell with target size ``h``.

    Raises
    ------
    GeometryError
        If ``h`` does not resolve the smallest feature of the cell.
    """
    if not h > 0:
        raise GeometryError("mesh size must be positive")
    if isinstance(geometry, DiskInclusion):
        feature = min(geometry.R, 1.0 - geometry.R)
        builder = _disk_mesh
    elif isinstance(geometry, LaminateCell):
        feature = min(geometry.a, 1.0 - geometry.a)
        builder = _laminate_mesh
    elif isinstance(geometry, ConfocalEllipse):
        a1 = geometry.semi_axes(geometry.rho1)
        a2 = geometry.semi_axes(geometry.rho2)
        feature = min(a1.min(), (a2 - a1).min())
        builder = _ellipse_mesh
    elif isinstance(geometry, PeriodicSquare):
        feature = min(geometry.size, 0.5 - geometry.size)
        builder = _periodic_disk_mesh if geometry.shape == "disk" else _periodic_slab_mesh
    else:
        raise GeometryError(f"unsupported geometry {geometry!r}")
    if h >= 0.5 * feature:
        raise GeometryError(f"h={h} does not resolve feature size {feature:.4g}")
    return builder(geometry, h)


def write_mesh(mesh: Mesh, path) -> None:
    """Write ``nv nt``, then ``x y marker`` and ``i j k region`` lines."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x!r} {y!r} {m}" for (x, y), m in zip(mesh.vertices.tolist(), mesh.markers.tolist())]
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`."""
    rows = Path(path).read_text(encoding="utf-8").split("\n")
    nv, nt = (int(v) for v in rows[0].split())
    vdata = np.array([r.split() for r in rows[1:1 + nv]], dtype=float).reshape(nv, 3)
    tdata = np.array([r.split() for r in rows[1 + nv:1 + nv + nt]], dtype=np.int64).reshape(nt, 4)
    mesh = Mesh(vdata[:, :2].copy(), tdata[:, :3].copy(), vdata[:, 2].astype(np.int64),
                tdata[:, 3].copy(), 0.0)
    mesh.h = mesh.max_diameter
    return mesh
