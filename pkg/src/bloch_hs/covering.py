"""Coverings of a rectangle by disjoint scaled cells and the resulting micro field.

A covering places copies ``y^p + eps_p omega`` of the reference cell inside the
domain. Any finite covering leaves an uncovered residual region; the micro
field assigns it a constant background tensor (normally the homogenized one),
so the residual behaves like material that is already homogenized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import ArgumentError
from .geometry import COATING, CORE, CoefficientField, DiskInclusion, LaminateCell
from .homog import HomogenizedTensor

DISK_PACK = "DiskPack"
LAMINATE_BANDS = "LaminateBands"

BACKGROUND = 0

_CELL_AREA = {DISK_PACK: math.pi, LAMINATE_BANDS: 4.0}


def _domain(domain) -> tuple:
    x0, y0, x1, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise ArgumentError(f"empty domain {domain}")
    return x0, y0, x1, y1


@dataclass
class VitaliCovering:
    """Disjoint scaled cells inside an axis-aligned rectangle.

    Attributes
    ----------
    domain : tuple
        ``(x0, y0, x1, y1)``.
    kind : str
        ``DiskPack`` (cells ``eps B(0,1)``) or ``LaminateBands`` (cells ``eps [-1,1]^2``).
    cx, cy, eps : ndarray
        Cell centers and scales in a stable order.
    residual_fraction : float
        Uncovered area over domain area.
    seed : int
        Recorded seed; placement itself is deterministic.
    target_missed : bool
        True when the requested residual was not reached.
    """

    domain: tuple
    kind: str
    cx: np.ndarray
    cy: np.ndarray
    eps: np.ndarray
    residual_fraction: float
    seed: int = 0
    axis: Optional[int] = None
    target_missed: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.domain = _domain(self.domain)
        self.cx = np.asarray(self.cx, dtype=float)
        self.cy = np.asarray(self.cy, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)

    @property
    def n_cells(self) -> int:
        return len(self.eps)

    @property
    def kappa(self) -> float:
        return float(self.eps.max()) if self.n_cells else 0.0

    @property
    def cell_area(self) -> float:
        return _CELL_AREA[self.kind]

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    @property
    def box(self) -> bool:
        return self.kind == LAMINATE_BANDS

    def bookkeeping_error(self) -> float:
        """``|sum eps_p^2 |omega| + residual |Omega| - |Omega||`` over ``|Omega|``."""
        covered = math.fsum(float(e) ** 2 * self.cell_area for e in self.eps)
        return abs(covered + self.residual_fraction * self.area - self.area) / self.area

    def overlapping_pairs(self) -> list:
        """Pairs of cells whose interiors intersect (empty for a valid covering)."""
        if self.n_cells < 2:
            return []
        pts = np.column_stack([self.cx, self.cy])
        tree = cKDTree(pts)
        bad = []
        if self.box:
            pairs = tree.query_pairs(2 * self.kappa, p=np.inf, output_type="ndarray")
            for i, j in pairs:
                s = (self.eps[i] + self.eps[j]) * (1 - 1e-12)  # shared faces are allowed
                if abs(self.cx[i] - self.cx[j]) < s and abs(self.cy[i] - self.cy[j]) < s:
                    bad.append((int(i), int(j)))
        else:
            pairs = tree.query_pairs(2 * self.kappa, output_type="ndarray")
            for i, j in pairs:
                if math.hypot(self.cx[i] - self.cx[j], self.cy[i] - self.cy[j]) <= self.eps[i] + self.eps[j]:
                    bad.append((int(i), int(j)))
        return bad

    def outside_cells(self) -> np.ndarray:
        """Indices of cells not contained in the domain."""
        x0, y0, x1, y1 = self.domain
        e = self.eps
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        out = (self.cx - e < x0 - tol) | (self.cx + e > x1 + tol) | (self.cy - e < y0 - tol) | (self.cy + e > y1 + tol)
        return np.nonzero(out)[0]

    def to_dict(self) -> dict:
        doc = {
            "domain": list(self.domain),
            "kind": self.kind,
            "cells": [{"cx": float(a), "cy": float(b), "eps": float(e)}
                      for a, b, e in zip(self.cx, self.cy, self.eps)],
            "residual_fraction": float(self.residual_fraction),
            "kappa": self.kappa,
            "seed": int(self.seed),
            "target_missed": bool(self.target_missed),
            "params": self.params,
        }
        if self.axis is not None:
            doc["axis"] = int(self.axis)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "VitaliCovering":
        cells = doc["cells"]
        return cls(tuple(doc["domain"]), doc["kind"],
                   [c["cx"] for c in cells], [c["cy"] for c in cells], [c["eps"] for c in cells],
                   float(doc["residual_fraction"]), int(doc.get("seed", 0)), doc.get("axis"),
                   bool(doc.get("target_missed", False)), dict(doc.get("params", {})))

    @classmethod
    def from_json(cls, text: str) -> "VitaliCovering":
        return cls.from_dict(json.loads(text))


def generate_disk_covering(domain, eps_max: float, eps_min: float, residual_target: float,
                           seed: int = 0, grid: int = 1024) -> VitaliCovering:
    """Greedy packing of disks ``eps_p B(0,1)`` with ``eps_min <= eps_p <= eps_max``.

    Each step places the largest admissible disk at the first grid point
    (lexicographic order) of largest capped clearance, refined off-grid, until
    the uncovered fraction is at most ``residual_target`` or no disk of radius
    ``eps_min`` fits. The construction is deterministic; ``seed`` is recorded.
    """
    x0, y0, x1, y1 = _domain(domain)
    if not 0.0 < eps_min < eps_max:
        raise ArgumentError(f"need 0 < eps_min < eps_max, got {eps_min}, {eps_max}")
    if not 0.0 < residual_target < 0.5:
        raise ArgumentError(f"residual target must lie in (0, 0.5), got {residual_target}")
    if grid < 8:
        raise ArgumentError("grid must have at least 8 pixels per side")
    cx, cy, r = kernels.greedy_cover(x0, y0, x1, y1, float(eps_max), float(eps_min),
                                     float(residual_target), int(grid))
    area = (x1 - x0) * (y1 - y0)
    residual = 1.0 - math.fsum(math.pi * float(e) ** 2 for e in r) / area
    params = {"eps_max": float(eps_max), "eps_min": float(eps_min),
              "residual_target": float(residual_target), "grid": int(grid)}
    return VitaliCovering((x0, y0, x1, y1), DISK_PACK, cx, cy, r, residual, seed,
                          target_missed=residual > residual_target, params=params)


def generate_laminate_covering(domain, axis: int, scales: Sequence[float], seed: int = 0) -> VitaliCovering:
    """Bands of half-widths ``scales`` tiling the domain across ``axis`` (1-based).

    Band ``p`` holds squares ``eps_p [-1,1]^2`` stacked with period ``2 eps_p``
    along the other axis from the domain edge; the part of the band left over
    at the far edge is residual (background).
    """
    x0, y0, x1, y1 = _domain(domain)
    if axis not in (1, 2):
        raise ArgumentError(f"axis must be 1 or 2, got {axis}")
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 1 or len(scales) == 0 or np.any(scales <= 0):
        raise ArgumentError("scales must be a non-empty list of positive half-widths")
    lo, hi, olo, ohi = (x0, x1, y0, y1) if axis == 1 else (y0, y1, x0, x1)
    width = hi - lo
    if abs(2 * math.fsum(scales) - width) > 1e-12 * width:
        raise ArgumentError(f"band widths sum to {2 * scales.sum()!r}, domain width is {width!r}")
    along, across, eps = [], [], []
    start = lo
    for e in scales:
        count = int(math.floor((ohi - olo) / (2 * e) * (1 + 1e-12)))
        centers = olo + e * (2 * np.arange(count) + 1)
        along.append(np.full(count, start + e))
        across.append(centers)
        eps.append(np.full(count, e))
        start += 2 * e
    a, b, e = (np.concatenate(v) for v in (along, across, eps))
    cx, cy = (a, b) if axis == 1 else (b, a)
    area = (x1 - x0) * (y1 - y0)
    residual = max(0.0, 1.0 - math.fsum(4.0 * float(v) ** 2 for v in e) / area)
    return VitaliCovering((x0, y0, x1, y1), LAMINATE_BANDS, cx, cy, e, residual, seed, axis,
                          params={"scales": [float(s) for s in scales]})


class _BucketIndex:
    """Immutable bucket grid: each cell is listed in every bucket its box meets."""

    def __init__(self, cov: VitaliCovering):
        x0, y0, x1, y1 = cov.domain
        size = max(2 * cov.kappa, 1e-300) if cov.n_cells else max(x1 - x0, y1 - y0)
        self.x0, self.y0, self.size = x0, y0, size
        self.nbx = max(1, int(math.ceil((x1 - x0) / size)))
        self.nby = max(1, int(math.ceil((y1 - y0) / size)))
        buckets: list = [[] for _ in range(self.nbx * self.nby)]
        for k in range(cov.n_cells):
            e = cov.eps[k] * (1 + 1e-9)
            i0 = max(0, int(math.floor((cov.cx[k] - e - x0) / size)))
            i1 = min(self.nbx - 1, int(math.floor((cov.cx[k] + e - x0) / size)))
            j0 = max(0, int(math.floor((cov.cy[k] - e - y0) / size)))
            j1 = min(self.nby - 1, int(math.floor((cov.cy[k] + e - y0) / size)))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    buckets[i * self.nby + j].append(k)
        counts = np.array([len(b) for b in buckets], dtype=np.int64)
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.items = np.array([k for b in buckets for k in b], dtype=np.int64)

    def locate(self, cov: VitaliCovering, px, py) -> np.ndarray:
        px = np.ascontiguousarray(px, dtype=float)
        py = np.ascontiguousarray(py, dtype=float)
        if cov.n_cells == 0:
            return np.full(len(px), -1, dtype=np.int64)
        return kernels.locate(px, py, cov.cx, cov.cy, cov.eps, int(cov.box), self.x0, self.y0,
                              self.size, self.nbx, self.nby, self.start, self.items)


class MicroField:
    """Coefficient ``A(x) = A_cell((x - y^p) / eps_p)`` in cell ``p``, background elsewhere.

    Parameters
    ----------
    covering : VitaliCovering
    cell : CoefficientField
        Reference cell field; its geometry must match the covering kind.
    background : HomogenizedTensor or array_like
        Tensor used in the residual region.
    """

    def __init__(self, covering: VitaliCovering, cell: CoefficientField, background):
        if covering.kind == DISK_PACK and not isinstance(cell.geometry, DiskInclusion):
            raise ArgumentError("a disk covering needs a DiskInclusion cell")
        if covering.kind == LAMINATE_BANDS:
            if not isinstance(cell.geometry, LaminateCell) or cell.geometry.axis != covering.axis:
                raise ArgumentError("a laminate covering needs a LaminateCell on the same axis")
        M = background.entries if isinstance(background, HomogenizedTensor) else np.asarray(background, float)
        if M.ndim == 0:
            M = float(M) * np.eye(2)
        self.covering = covering
        self.cell = cell
        self.background = np.array(M, dtype=float)
        self._index = _BucketIndex(covering)

    def locate(self, x) -> np.ndarray:
        """Cell index for each point of ``x`` (shape ``(n, 2)``), -1 in the residual region."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._index.locate(self.covering, x[:, 0], x[:, 1])

    def local(self, x, cells: np.ndarray) -> np.ndarray:
        """Reference coordinates ``(x - y^p) / eps_p`` for points inside cells."""
        cov = self.covering
        return np.column_stack([(x[:, 0] - cov.cx[cells]) / cov.eps[cells],
                                (x[:, 1] - cov.cy[cells]) / cov.eps[cells]])

    def phase_codes(self, x) -> np.ndarray:
        """``BACKGROUND``, ``CORE`` or ``COATING`` per point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cells = self.locate(x)
        code = np.zeros(len(x), dtype=np.int8)
        inside = cells >= 0
        if np.any(inside):
            y = self.local(x[inside], cells[inside])
            code[inside] = np.where(self.cell.geometry.core(y), CORE, COATING)
        return code

    def evaluate_many(self, x) -> np.ndarray:
        """Coefficient matrices with shape ``(n, 2, 2)``."""
        code = self.phase_codes(x)
        table = np.stack([self.background, self.cell.core, self.cell.coating])
        return table[code]


def evaluate_micro(field: MicroField, x) -> np.ndarray:
    """Coefficient matrix of the micro field at one point."""
    return field.evaluate_many(np.asarray(x, dtype=float).reshape(1, 2))[0]


def refinement_levels(kappas=(0.2, 0.1, 0.05), residual_target: float = 0.05, min_ratio: float = 40.0,
                      grid: int = 1024, domain=(0.0, 0.0, 1.0, 1.0), seed: int = 0) -> list:
    """Disk coverings at several largest scales with ``eps_min = kappa / min_ratio``."""
    return [generate_disk_covering(domain, k, k / min_ratio, residual_target, seed, grid) for k in kappas]
