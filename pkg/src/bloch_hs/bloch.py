"""First Bloch transform over a covering and its limit checks.

For a covering ``{y^p + eps_p omega}`` and a function ``g`` on the domain,

    B g(xi) = sum_p int_{cell p} g(x) exp(-i x . xi) conj(phi_1((x - y^p) / eps_p; eps_p xi)) dx
              + |omega|^{-1/2} int_{residual} g(x) exp(-i x . xi) dx,

where ``phi_1`` is the boundary-gauged ground state of the reference cell. The
residual region carries the constant mode ``|omega|^{-1/2}``, the ground state
of already homogenized material. Writing ``conj(phi_1) = c + dphi`` with
``c = |omega|^{-1/2}`` gives ``B g = F g + sum_p eps_p^2 sum_q w_q g exp dphi``,
where ``F g = c int g exp(-i x . xi)`` is the reference transform. Only the
cell correction is computed cell by cell (``kernels.bloch_sum``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from ._parallel import parallel_map
from .covering import MicroField, VitaliCovering
from .errors import ArgumentError
from .fem import GAUSS7_POINTS, GAUSS7_WEIGHTS, AssembledForms, assemble, default_space
from .geometry import CoefficientField
from .homog import solve_correctors
from .mesh import Mesh, generate_cell_mesh
from .spectra import solve_ground_state

EXACT = "exact"
TAYLOR1 = "taylor1"
MODES = (EXACT, TAYLOR1)

DEFAULT_ETA_MAX = 1.0
DEFAULT_N_ETA = 9
POINTS_PER_WAVELENGTH = 8


def _edge_midpoint_rule(mesh: Mesh):
    """Edge-midpoint rule (degree 2) with shared midpoints merged.

    Returns points, weights and the two endpoint indices of each edge.
    """
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    area = np.tile(np.abs(mesh.signed_areas()), 3) / 3.0
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=area, minlength=len(edges))
    pts = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    return pts, w, edges


class BlochCell:
    """Reference-cell data for the transform: quadrature, correctors, ``eta`` cache.

    Parameters
    ----------
    field : CoefficientField
        Cell with a constant-trace boundary (disk, ellipse or laminate).
    h : float
        Reference mesh size.
    eta_max : float
        Half-width of the cached momentum box.
    n_eta : int
        Cache points per axis.
    """

    def __init__(self, field: CoefficientField, h: float = 0.1, eta_max: float = DEFAULT_ETA_MAX,
                 n_eta: int = DEFAULT_N_ETA, tol: float = 1e-10):
        if n_eta < 2 or n_eta % 2 == 0:
            raise ArgumentError("n_eta must be odd and at least 3 so that eta = 0 is a node")
        self.field = field
        self.h = float(h)
        self.eta_max = float(eta_max)
        self.n_eta = int(n_eta)
        self.tol = tol
        self.mesh = generate_cell_mesh(field.geometry, h)
        self.forms: AssembledForms = assemble(field, self.mesh, default_space(field.geometry, self.mesh))
        if self.forms.space.master is None:
            raise ArgumentError("the transform needs a cell with a constant-trace boundary")
        self.c = self.forms.area ** -0.5
        self.points, self.weights, self._edges = _edge_midpoint_rule(self.mesh)
        corr = solve_correctors(self.forms, np.eye(2))
        self.X = np.column_stack([self._at_points(k.fluctuation) for k in corr])
        self._grid: Optional[np.ndarray] = None

    def _at_points(self, v: np.ndarray) -> np.ndarray:
        return 0.5 * (v[self._edges[:, 0]] + v[self._edges[:, 1]])

    @property
    def eta_nodes(self) -> np.ndarray:
        return np.linspace(-self.eta_max, self.eta_max, self.n_eta)

    def dphi(self, eta) -> np.ndarray:
        """``conj(phi_1(y_q; eta)) - c`` at the quadrature points."""
        gs = solve_ground_state(self.forms, eta, self.tol)
        phi = self.forms.space.prolong(gs.phi)
        return np.conj(self._at_points(phi)) - self.c

    @property
    def grid(self) -> np.ndarray:
        """Cached ``dphi`` on the ``eta`` grid, shape ``(n_eta, n_eta, n_points)``."""
        if self._grid is None:
            nodes = self.eta_nodes
            etas = [(a, b) for a in nodes for b in nodes]
            vals = parallel_map(self.dphi, etas)
            self._grid = np.ascontiguousarray(np.array(vals).reshape(self.n_eta, self.n_eta, -1))
        return self._grid


@dataclass
class BlochTransformResult:
    """Transform values on a frequency grid."""

    xi: np.ndarray
    values: np.ndarray
    reference: np.ndarray
    mode: str
    kappa: float
    n_cells: int
    details: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.values - self.reference)

    def to_csv(self, header: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi_1", "xi_2", "re_B", "im_B", "re_F", "im_F", "abs_error"])
        for x, b, f, e in zip(self.xi, self.values, self.reference, self.errors):
            w.writerow([repr(float(x[0])), repr(float(x[1])), repr(float(b.real)), repr(float(b.imag)),
                        repr(float(f.real)), repr(float(f.imag)), repr(float(e))])
        return buf.getvalue()


def _gauss_box(domain, n: int):
    x0, y0, x1, y1 = domain
    t, w = np.polynomial.legendre.leggauss(n)
    xs = 0.5 * (x1 - x0) * (t + 1) + x0
    ys = 0.5 * (y1 - y0) * (t + 1) + y0
    W = np.outer(w, w) * 0.25 * (x1 - x0) * (y1 - y0)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def _quad_nodes(domain, xi: np.ndarray, n_quad: Optional[int]) -> int:
    if n_quad is not None:
        return int(n_quad)
    x0, y0, x1, y1 = domain
    L = max(x1 - x0, y1 - y0)
    kmax = float(np.max(np.abs(xi))) if len(xi) else 0.0
    return max(48, int(math.ceil(0.5 * kmax * L)) + 48)


def reference_transform(g: Callable, xi, domain=(0.0, 0.0, 1.0, 1.0), cell_area: float = math.pi,
                        n_quad: Optional[int] = None) -> np.ndarray:
    """``|omega|^{-1/2} int_Omega g(x) exp(-i x . xi) dx`` by tensor Gauss-Legendre quadrature."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    pts, w = _gauss_box(domain, _quad_nodes(domain, xi, n_quad))
    gw = w * np.asarray(g(pts), dtype=float)
    out = np.empty(len(xi), dtype=complex)
    for a, (k1, k2) in enumerate(xi):
        out[a] = np.sum(gw * np.exp(-1j * (pts[:, 0] * k1 + pts[:, 1] * k2)))
    return cell_area ** -0.5 * out


def l2_norm(g: Callable, domain=(0.0, 0.0, 1.0, 1.0), n_quad: int = 96) -> float:
    pts, w = _gauss_box(domain, n_quad)
    return float(np.sqrt(np.sum(w * np.asarray(g(pts), dtype=float) ** 2)))


def _check_xi(xi: np.ndarray, cov: VitaliCovering, cell: BlochCell):
    if cov.n_cells == 0 or len(xi) == 0:
        return
    kap = cov.kappa
    if np.max(np.abs(xi)) * kap > cell.eta_max * (1 + 1e-12):
        raise ArgumentError(f"frequencies exceed the admissible box |xi_k| <= {cell.eta_max / kap:.6g}")
    kmax = float(np.max(np.linalg.norm(xi, axis=1))) * kap
    if kmax > 0 and 2 * math.pi / (kmax * cell.h) < POINTS_PER_WAVELENGTH:
        raise ArgumentError("reference mesh too coarse for the requested frequencies")


def cell_correction(g: Callable, field: MicroField, cell: BlochCell, xi, mode: str = EXACT) -> np.ndarray:
    """``sum_p eps_p^2 sum_q w_q g(x_pq) exp(-i x_pq . xi) dphi_q(eps_p xi)``."""
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}")
    xi = np.ascontiguousarray(np.atleast_2d(np.asarray(xi, dtype=float)))
    cov = field.covering
    _check_xi(xi, cov, cell)
    if cov.n_cells == 0:
        return np.zeros(len(xi), dtype=complex)
    yq = np.ascontiguousarray(cell.points)
    x = np.stack([cov.cx[:, None] + cov.eps[:, None] * yq[None, :, 0],
                  cov.cy[:, None] + cov.eps[:, None] * yq[None, :, 1]], axis=-1)
    gv = np.asarray(g(x.reshape(-1, 2)), dtype=float).reshape(cov.n_cells, -1)
    gw = np.ascontiguousarray(cov.eps[:, None] ** 2 * cell.weights[None, :] * gv)
    if mode == EXACT:
        grid = cell.grid
        m = 0
    else:
        grid = np.zeros((2, 2, 1), dtype=complex)
        m = 1
    return kernels.bloch_sum(xi, cov.cx, cov.cy, cov.eps, gw, yq, m, grid, cell.eta_max,
                             np.ascontiguousarray(cell.X), cell.c)


def bloch_transform_first(g: Callable, field: MicroField, cell: BlochCell, xi, mode: str = EXACT,
                          n_quad: Optional[int] = None) -> BlochTransformResult:
    """First Bloch transform of ``g`` over the covering of ``field``.

    Parameters
    ----------
    g : callable
        Vectorized ``g(x)`` for points of shape ``(n, 2)``, supported in the domain.
    field : MicroField
        Covering and cell field; the cell must match ``cell.field``.
    cell : BlochCell
    xi : array_like
        Frequencies, shape ``(m, 2)``.
    mode : {"exact", "taylor1"}
        ``exact`` interpolates cached ground states; ``taylor1`` uses
        ``phi_1 ~ c (1 + i eta_k (w_k - y_k))``, accurate to ``O(|eta|^2)``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    F = reference_transform(g, xi, field.covering.domain, cell.forms.area, n_quad)
    corr = cell_correction(g, field, cell, xi, mode)
    cov = field.covering
    return BlochTransformResult(xi, F + corr, F, mode, cov.kappa, cov.n_cells)


def xi_grid(radius: float = 4.0, n: int = 9) -> np.ndarray:
    """Square grid on ``[-radius, radius]^2`` restricted to ``|xi| <= radius``."""
    t = np.linspace(-radius, radius, n)
    X, Y = np.meshgrid(t, t, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]


def bessel_check(g: Callable, field: MicroField, cell: BlochCell, n_xi: Optional[int] = None,
                 support_radius: Optional[float] = None, center=None) -> dict:
    """``int |B g|^2 dxi / ||g||^2`` over the box ``|xi_k| <= eta_max / kappa``.

    The integral uses tensor Gauss-Legendre nodes; ``|B g|^2`` is insensitive to
    translating ``x``, so the node count follows the diameter of the support of
    ``g`` (``support_radius`` about ``center``, the domain by default).
    """
    cov = field.covering
    x0, y0, x1, y1 = cov.domain
    if center is None:
        center = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    if support_radius is None:
        support_radius = 0.5 * math.hypot(x1 - x0, y1 - y0)
    L = cell.eta_max / cov.kappa
    if n_xi is None:
        n_xi = int(math.ceil(1.2 * L * (support_radius + cov.kappa))) + 16
    cx, cy = float(center[0]), float(center[1])

    def shifted(x):
        return g(x + np.array([cx, cy]))

    shifted_field = MicroField(
        VitaliCovering((x0 - cx, y0 - cy, x1 - cx, y1 - cy), cov.kind, cov.cx - cx, cov.cy - cy, cov.eps,
                       cov.residual_fraction, cov.seed, cov.axis),
        field.cell, field.background)
    xi, w = _gauss_box((-L, -L, L, L), n_xi)
    res = bloch_transform_first(shifted, shifted_field, cell, xi, EXACT)
    norm2 = l2_norm(g, cov.domain) ** 2
    if norm2 == 0.0:
        return {"constant": 0.0, "integral": 0.0, "norm2": 0.0, "n_xi": n_xi, "box": L,
                "fourier_integral": 0.0}
    integral = float(np.sum(w * np.abs(res.values) ** 2))
    return {"constant": integral / norm2, "integral": integral, "norm2": norm2, "n_xi": n_xi, "box": L,
            "fourier_integral": float(np.sum(w * np.abs(res.reference) ** 2))}


def fourier_limit_check(g: Callable, fields: Sequence[MicroField], cell: BlochCell, xi,
                        mode: str = EXACT) -> list:
    """Per level: ``max |B g - F g|``, its bound ratio and the zero-frequency error."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    rows = []
    for f in fields:
        res = bloch_transform_first(g, f, cell, xi, mode)
        gn = l2_norm(g, f.covering.domain)
        err = res.errors
        kx = float(np.max(np.linalg.norm(xi, axis=1)))
        zero = np.linalg.norm(xi, axis=1) == 0
        rows.append({
            "kappa": f.covering.kappa,
            "residual": f.covering.residual_fraction,
            "n_cells": f.covering.n_cells,
            "max_error": float(err.max()),
            "max_reference": float(np.max(np.abs(res.reference))),
            "bound_ratio": float(err.max() / (f.covering.kappa * kx * gn)) if kx * gn > 0 else 0.0,
            "zero_error": float(err[zero].max()) if np.any(zero) else float("nan"),
        })
    return rows


def taylor_gap(g: Callable, field: MicroField, cell: BlochCell, xi) -> dict:
    """Gap between the exact and first-order transforms, scaled by ``(kappa max|xi|)^2``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    a = cell_correction(g, field, cell, xi, EXACT)
    b = cell_correction(g, field, cell, xi, TAYLOR1)
    gap = float(np.max(np.abs(a - b)))
    s = (field.covering.kappa * float(np.max(np.linalg.norm(xi, axis=1)))) ** 2
    return {"gap": gap, "scale": s, "constant": gap / s if s > 0 else 0.0}


def bump(center=(0.5, 0.5), radius: float = 0.4) -> Callable:
    """``(1 - r^2 / radius^2)^3`` inside the disk, zero outside (twice differentiable)."""
    c = np.asarray(center, dtype=float)

    def g(x):
        s = np.sum((np.asarray(x, dtype=float) - c) ** 2, axis=-1) / radius ** 2
        return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** 3, 0.0)

    return g


# ----------------------------------------------------------------------------
# weak limit of rescaled cell functions
# ----------------------------------------------------------------------------

def _cell_rule(mesh: Mesh):
    t = mesh.triangles
    area = np.abs(mesh.signed_areas())
    pts = np.einsum("qa,mad->mqd", GAUSS7_POINTS, mesh.vertices[t]).reshape(-1, 2)
    w = (area[:, None] * GAUSS7_WEIGHTS[None, :]).ravel()
    tri = np.repeat(np.arange(len(t)), len(GAUSS7_WEIGHTS))
    return pts, w, tri


def weak_average_check(f: Callable, mesh: Mesh, coverings: Sequence[VitaliCovering],
                       tests: Sequence, cell_area: Optional[float] = None) -> list:
    """Errors ``|int f_n phi - M(f) int phi|`` for rescaled copies of a cell function.

    ``f`` is evaluated at triangle centroids of the reference mesh, so it is
    piecewise constant on it (exact for phase indicators on conforming
    meshes). The residual region carries ``M(f)``, so only cells contribute:
    the error is ``|sum_p eps_p^2 (|omega| / |omega_h|) int (f - M(f)) phi(y^p + eps_p y) dy|``.

    Parameters
    ----------
    tests : sequence of ``(phi, lip)``
        Vectorized test functions with their Lipschitz constants.

    Returns
    -------
    list of dict
        One row per covering and test function, with the measured error,
        ``bound_stated = (|Omega| / |omega|) M(|f|) Lip kappa`` and
        ``bound_cellwise = |Omega| M(|f - M(f)|) Lip kappa``.
    """
    pts, w, tri = _cell_rule(mesh)
    fv = np.asarray(f(mesh.centroids()), dtype=float)[tri]
    area_h = float(np.sum(w))
    area = cell_area if cell_area is not None else area_h
    mean = float(np.sum(w * fv) / area_h)
    mean_abs = float(np.sum(w * np.abs(fv)) / area_h)
    dev_abs = float(np.sum(w * np.abs(fv - mean)) / area_h)
    wf = w * (fv - mean) * (area / area_h)
    rows = []
    for level, cov in enumerate(coverings):
        for j, (phi, lip) in enumerate(tests):
            total = 0.0
            for lo in range(0, cov.n_cells, 256):
                sl = slice(lo, lo + 256)
                e = cov.eps[sl]
                x = np.stack([cov.cx[sl, None] + e[:, None] * pts[None, :, 0],
                              cov.cy[sl, None] + e[:, None] * pts[None, :, 1]], axis=-1)
                vals = np.asarray(phi(x.reshape(-1, 2)), dtype=float).reshape(len(e), -1)
                total += float(np.sum(e ** 2 * (vals @ wf)))
            rows.append({
                "level": level, "test": j, "kappa": cov.kappa, "residual": cov.residual_fraction,
                "error": abs(total), "mean": mean,
                "bound_stated": cov.area / area * mean_abs * lip * cov.kappa,
                "bound_cellwise": cov.area * dev_abs * lip * cov.kappa,
            })
    return rows
