"""Macroscopic solves on a micro-structured domain and the homogenization study.

The domain is the unit square (or any rectangle with square pixels) split into
``n x n`` squares, each cut along its rising diagonal into a lower triangle
``(i,j), (i+1,j), (i+1,j+1)`` and an upper triangle ``(i,j), (i+1,j+1), (i,j+1)``.
P1 elements with zero Dirichlet data are used. The coefficient is sampled at the
three edge midpoints of each triangle and averaged (edge-midpoint rule), so one
tensor per triangle enters the stiffness. The operator is applied matrix-free
and inverted by conjugate gradients preconditioned with a fast sine-transform
Poisson solve scaled by the mean coefficient.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from .covering import MicroField, VitaliCovering
from .errors import ArgumentError, NumericError, ResolutionError
from .geometry import CoefficientField
from .homog import HomogenizedTensor

_ROWS = 128  # rows per chunk when sampling the micro field


@dataclass
class GridMesh:
    """Uniform triangulation of a square with ``n`` intervals per side."""

    n: int
    domain: tuple = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        x0, y0, x1, y1 = (float(v) for v in self.domain)
        if self.n < 2:
            raise ArgumentError("need at least 2 intervals per side")
        if not math.isclose(x1 - x0, y1 - y0, rel_tol=1e-12):
            raise ArgumentError("grid meshes need a square domain")
        self.domain = (x0, y0, x1, y1)

    @property
    def h(self) -> float:
        return (self.domain[2] - self.domain[0]) / self.n

    @property
    def n_dofs(self) -> int:
        return (self.n - 1) ** 2

    def nodes(self, i, j):
        return self.domain[0] + i * self.h, self.domain[1] + j * self.h


@dataclass
class TriangleCoefficients:
    """Tensor entries ``(a11, a12, a22)`` on lower and upper triangles, each ``(n, n)``."""

    lower: tuple
    upper: tuple

    def mean_trace(self) -> float:
        s = sum(float(np.mean(t[0] + t[2])) for t in (self.lower, self.upper))
        return 0.25 * s


def _constant_coefficients(n: int, M: np.ndarray) -> TriangleCoefficients:
    ent = tuple(np.full((n, n), v) for v in (M[0, 0], M[0, 1], M[1, 1]))
    return TriangleCoefficients(ent, ent)


def _codes(field: MicroField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    out = np.empty((len(xs), len(ys)), dtype=np.int8)
    for lo in range(0, len(xs), _ROWS):
        X, Y = np.meshgrid(xs[lo:lo + _ROWS], ys, indexing="ij")
        out[lo:lo + _ROWS] = field.phase_codes(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    return out


def sample_coefficients(field: MicroField, mesh: GridMesh) -> TriangleCoefficients:
    """Edge-midpoint averages of the micro field on every triangle."""
    cell = field.cell
    table = np.stack([field.background, cell.core, cell.coating])
    entries = [table[:, 0, 0], table[:, 0, 1], table[:, 1, 1]]
    x0, y0 = mesh.domain[:2]
    h, n = mesh.h, mesh.n
    mid = x0 + (np.arange(n) + 0.5) * h, y0 + (np.arange(n) + 0.5) * h
    node = x0 + np.arange(n + 1) * h, y0 + np.arange(n + 1) * h
    H = _codes(field, mid[0], node[1])   # (n, n+1)
    V = _codes(field, node[0], mid[1])   # (n+1, n)
    D = _codes(field, mid[0], mid[1])    # (n, n)
    lower, upper = [], []
    for t in entries:
        lower.append((t[H[:, :-1]] + t[V[1:, :]] + t[D]) / 3.0)
        upper.append((t[H[:, 1:]] + t[V[:-1, :]] + t[D]) / 3.0)
    return TriangleCoefficients(tuple(lower), tuple(upper))


def _gradients(u: np.ndarray):
    """Scaled gradients ``h grad u`` on lower and upper triangles."""
    gl = (u[1:, :-1] - u[:-1, :-1], u[1:, 1:] - u[1:, :-1])
    gu = (u[1:, 1:] - u[:-1, 1:], u[:-1, 1:] - u[:-1, :-1])
    return gl, gu


def _apply(coef: TriangleCoefficients, u: np.ndarray) -> np.ndarray:
    """Stiffness times a nodal field with zero boundary values; returns nodal values."""
    (d1, d2), (e1, e2) = _gradients(u)
    a, b, c = coef.lower
    s1 = 0.5 * (a * d1 + b * d2)
    s2 = 0.5 * (b * d1 + c * d2)
    r = np.zeros_like(u)
    r[:-1, :-1] -= s1
    r[1:, :-1] += s1 - s2
    r[1:, 1:] += s2
    a, b, c = coef.upper
    t1 = 0.5 * (a * e1 + b * e2)
    t2 = 0.5 * (b * e1 + c * e2)
    r[:-1, :-1] -= t2
    r[1:, 1:] += t1
    r[:-1, 1:] += t2 - t1
    return r


class _Operator:
    def __init__(self, coef: TriangleCoefficients, n: int):
        self.coef = coef
        self.n = n
        self._u = np.zeros((n + 1, n + 1))
        k = np.arange(1, n)
        lam = 2.0 - 2.0 * np.cos(np.pi * k / n)
        self._lam = (lam[:, None] + lam[None, :]) * coef.mean_trace()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        u = self._u
        u[1:-1, 1:-1] = x.reshape(self.n - 1, self.n - 1)
        return _apply(self.coef, u)[1:-1, 1:-1].ravel()

    def precondition(self, r: np.ndarray) -> np.ndarray:
        R = r.reshape(self.n - 1, self.n - 1)
        Z = sfft.idstn(sfft.dstn(R, type=1, norm="ortho") / self._lam, type=1, norm="ortho")
        return Z.ravel()

    def linear_operators(self):
        N = (self.n - 1) ** 2
        A = spla.LinearOperator((N, N), matvec=self.matvec, dtype=float)
        P = spla.LinearOperator((N, N), matvec=self.precondition, dtype=float)
        return A, P


@dataclass
class MacroSolve:
    """Nodal solution on a grid mesh with its coefficient samples.

    Attributes
    ----------
    u : ndarray
        Nodal values, shape ``(n + 1, n + 1)``, zero on the boundary.
    rhs : ndarray
        Lumped load vector on the same grid.
    """

    mesh: GridMesh
    u: np.ndarray
    coef: TriangleCoefficients = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    f_label: str
    residual: float
    iterations: int
    seconds: float

    def gradients(self):
        """``grad u`` on lower and upper triangles."""
        (d1, d2), (e1, e2) = _gradients(self.u)
        h = self.mesh.h
        return (d1 / h, d2 / h), (e1 / h, e2 / h)

    def fluxes(self):
        """``A grad u`` on lower and upper triangles."""
        out = []
        for (g1, g2), (a, b, c) in zip(self.gradients(), (self.coef.lower, self.coef.upper)):
            out.append((a * g1 + b * g2, b * g1 + c * g2))
        return tuple(out)

    def energy(self) -> float:
        return float(np.sum(self.u * _apply(self.coef, self.u)))

    def load(self) -> float:
        return float(np.sum(self.u * self.rhs))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.u ** 2)) * self.mesh.h)

    def h1_seminorm(self) -> float:
        h2 = 0.5 * self.mesh.h ** 2
        return float(np.sqrt(sum(h2 * np.sum(g1 ** 2 + g2 ** 2) for g1, g2 in self.gradients())))


def _load(f, mesh: GridMesh):
    n = mesh.n
    if f is None:
        f = 1.0
    if callable(f):
        x0, y0 = mesh.domain[:2]
        t = np.arange(n + 1) * mesh.h
        X, Y = np.meshgrid(x0 + t, y0 + t, indexing="ij")
        vals = np.asarray(f(np.column_stack([X.ravel(), Y.ravel()])), dtype=float).reshape(n + 1, n + 1)
        label = getattr(f, "__name__", "callable")
    else:
        vals = np.full((n + 1, n + 1), float(f))
        label = repr(float(f))
    b = vals * mesh.h ** 2
    b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = 0.0
    return b, label


def _solve(coef: TriangleCoefficients, f, mesh: GridMesh, tol: float, maxiter: int) -> MacroSolve:
    t0 = time.perf_counter()
    b, label = _load(f, mesh)
    op = _Operator(coef, mesh.n)
    A, P = op.linear_operators()
    rhs = b[1:-1, 1:-1].ravel()
    count = [0]

    def cb(_):
        count[0] += 1

    bn = np.linalg.norm(rhs)
    u = np.zeros((mesh.n + 1, mesh.n + 1))
    if bn == 0.0:
        return MacroSolve(mesh, u, coef, b, label, 0.0, 0, time.perf_counter() - t0)
    x, info = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter, M=P, callback=cb)
    res = float(np.linalg.norm(A @ x - rhs) / bn)
    if info != 0 or not np.isfinite(res):
        raise NumericError(f"conjugate gradients did not converge (info={info})", res)
    u[1:-1, 1:-1] = x.reshape(mesh.n - 1, mesh.n - 1)
    return MacroSolve(mesh, u, coef, b, label, res, count[0], time.perf_counter() - t0)


def required_intervals(covering: VitaliCovering, per_eps: float = 8.0) -> int:
    """Smallest ``n`` with ``h <= min eps / per_eps``."""
    x0, _, x1, _ = covering.domain
    if covering.n_cells == 0:
        return 64
    return int(math.ceil(per_eps * (x1 - x0) / float(covering.eps.min())))


def solve_heterogeneous(field: MicroField, f=None, mesh: Optional[GridMesh] = None,
                        tol: float = 1e-10, maxiter: int = 2000) -> MacroSolve:
    """P1 solution of ``-div(A_n grad u) = f`` with zero boundary values.

    Raises ``ResolutionError`` when ``h`` exceeds a quarter of the smallest cell scale.
    """
    cov = field.covering
    if mesh is None:
        mesh = GridMesh(required_intervals(cov), cov.domain)
    if cov.n_cells and mesh.h > float(cov.eps.min()) / 4.0:
        raise ResolutionError(f"h = {mesh.h:.4g} does not resolve the smallest cell scale {cov.eps.min():.4g}")
    return _solve(sample_coefficients(field, mesh), f, mesh, tol, maxiter)


def solve_homogenized(M, f=None, mesh: Optional[GridMesh] = None, tol: float = 1e-10,
                      maxiter: int = 2000) -> MacroSolve:
    """P1 solution of ``-div(M grad u) = f`` for a constant tensor ``M``."""
    Mx = M.entries if isinstance(M, HomogenizedTensor) else np.asarray(M, dtype=float)
    if Mx.ndim == 0:
        Mx = float(Mx) * np.eye(2)
    if not np.allclose(Mx, Mx.T) or np.linalg.eigvalsh(Mx)[0] <= 0:
        raise ArgumentError("M must be symmetric positive definite")
    if mesh is None:
        mesh = GridMesh(64)
    return _solve(_constant_coefficients(mesh.n, Mx), f, mesh, tol, maxiter)


# ----------------------------------------------------------------------------
# convergence study
# ----------------------------------------------------------------------------

def _test_fields():
    pi = np.pi
    return [
        lambda x, y: (np.ones_like(x), np.zeros_like(x)),
        lambda x, y: (np.zeros_like(x), np.ones_like(x)),
        lambda x, y: (np.cos(pi * x), np.zeros_like(x)),
        lambda x, y: (np.zeros_like(x), np.cos(pi * y)),
        lambda x, y: (np.sin(pi * y), np.sin(pi * x)),
        lambda x, y: (x - y, x + y),
    ]


TEST_FIELDS = _test_fields()


def _triangle_means(psi, mesh: GridMesh):
    """Edge-midpoint means of a vector field on lower and upper triangles."""
    x0, y0 = mesh.domain[:2]
    h, n = mesh.h, mesh.n
    mid_x, mid_y = x0 + (np.arange(n) + 0.5) * h, y0 + (np.arange(n) + 0.5) * h
    nod_x, nod_y = x0 + np.arange(n + 1) * h, y0 + np.arange(n + 1) * h
    H = psi(*np.meshgrid(mid_x, nod_y, indexing="ij"))
    V = psi(*np.meshgrid(nod_x, mid_y, indexing="ij"))
    D = psi(*np.meshgrid(mid_x, mid_y, indexing="ij"))
    lower = tuple((H[k][:, :-1] + V[k][1:, :] + D[k]) / 3.0 for k in range(2))
    upper = tuple((H[k][:, 1:] + V[k][:-1, :] + D[k]) / 3.0 for k in range(2))
    return lower, upper


def flux_errors(het: MacroSolve, hom: MacroSolve, M: np.ndarray, tests=TEST_FIELDS) -> dict:
    """Weak and strong distances between ``A_n grad u_n`` and ``M grad u``."""
    mesh = het.mesh
    area = 0.5 * mesh.h ** 2
    sig = het.fluxes()
    ref = []
    for g1, g2 in hom.gradients():
        ref.append((M[0, 0] * g1 + M[0, 1] * g2, M[1, 0] * g1 + M[1, 1] * g2))
    weak = []
    for psi in tests:
        means = _triangle_means(psi, mesh)
        num = sum(area * np.sum((s[0] - r[0]) * p[0] + (s[1] - r[1]) * p[1])
                  for s, r, p in zip(sig, ref, means))
        nrm = math.sqrt(sum(area * np.sum(p[0] ** 2 + p[1] ** 2) for p in means))
        weak.append(abs(float(num)) / nrm)
    diff = math.sqrt(sum(area * np.sum((s[0] - r[0]) ** 2 + (s[1] - r[1]) ** 2) for s, r in zip(sig, ref)))
    base = math.sqrt(sum(area * np.sum(r[0] ** 2 + r[1] ** 2) for r in ref))
    gap = max(float(np.max(np.hypot(s[0] - r[0], s[1] - r[1]))) for s, r in zip(sig, ref))
    top = max(float(np.max(np.hypot(r[0], r[1]))) for r in ref)
    return {"weak": weak, "weak_max": max(weak), "strong_relative": diff / base,
            "max_pointwise_gap": gap, "max_reference_flux": top}


@dataclass
class StudyRow:
    kappa: float
    residual: float
    n_cells: int
    l2_err: float
    flux_err: float
    strong_flux_err: float
    max_pointwise_gap: float
    h1_seminorm: float
    dofs: int
    iterations: int
    seconds: float


@dataclass
class ConvergenceStudy:
    rows: list
    M: np.ndarray
    f_label: str

    def to_csv(self, header: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kappa", "residual", "l2_err", "flux_err", "dofs", "seconds"])
        for r in self.rows:
            w.writerow([repr(r.kappa), repr(r.residual), repr(r.l2_err), repr(r.flux_err), r.dofs,
                        f"{r.seconds:.3f}"])
        return buf.getvalue()


def convergence_study(cell: CoefficientField, coverings: Sequence[VitaliCovering], M, f=None,
                      per_eps: float = 8.0, tol: float = 1e-10, max_intervals: Optional[int] = None) -> ConvergenceStudy:
    """Heterogeneous versus homogenized solves for each covering level.

    Each level uses its own grid with ``h <= min eps / per_eps``; the
    homogenized solve is repeated on that grid so discretization errors cancel.
    """
    Mx = M.entries if isinstance(M, HomogenizedTensor) else np.asarray(M, dtype=float)
    if Mx.ndim == 0:
        Mx = float(Mx) * np.eye(2)
    rows = []
    label = "1"
    for cov in coverings:
        n = required_intervals(cov, per_eps)
        if max_intervals is not None:
            n = min(n, max_intervals)
        mesh = GridMesh(n, cov.domain)
        field = MicroField(cov, cell, Mx)
        t0 = time.perf_counter()
        het = solve_heterogeneous(field, f, mesh, tol)
        hom = solve_homogenized(Mx, f, mesh, tol)
        du = het.u - hom.u
        l2 = float(np.sqrt(np.sum(du ** 2)) / np.sqrt(np.sum(hom.u ** 2)))
        fl = flux_errors(het, hom, Mx)
        label = het.f_label
        rows.append(StudyRow(cov.kappa, cov.residual_fraction, cov.n_cells, l2, fl["weak_max"],
                             fl["strong_relative"], fl["max_pointwise_gap"], het.h1_seminorm(),
                             mesh.n_dofs, het.iterations, time.perf_counter() - t0))
        del het, hom, du
    return ConvergenceStudy(rows, Mx, label)
