"""Correctors and homogenized tensors.

A corrector for direction ``lam`` is written ``w = lam . y + v`` where ``v``
lies in the fluctuation space of the cell: zero on the constant-trace boundary
(Dirichlet data ``lam . y``), or periodic with zero mean. The tensor is then
available by three routes:

* ``homogenized_cell_integral``: ``m_kl = |omega|^{-1} int A grad w_k . e_l``;
* ``homogenized_from_hessian``: half the Hessian of ``lambda_1`` at ``eta = 0``;
* closed forms in :mod:`bloch_hs.geometry`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, ConsistencyError, NumericError
from .fem import (CONSTANT_TRACE, PERIODIC, AssembledForms, assemble, barycentric_gradients,
                  default_space, make_space)
from .geometry import CoefficientField, PeriodicSquare
from .mesh import Mesh
from .spectra import fd_derivatives_lambda1, solve_ground_state

CELL_INTEGRAL = "CellIntegral"
EIG_HESSIAN = "EigHessian"
ANALYTIC = "Analytic"
PERIODIC_CELL = "PeriodicCell"

DEFAULT_HESSIAN_STEPS = (0.05, 0.1, 0.15, 0.2)


@dataclass
class HomogenizedTensor:
    """Symmetric effective matrix with its provenance."""

    entries: np.ndarray
    provenance: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T))

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "N": self.N,
                "entries": [float(x) for x in self.entries.ravel()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "HomogenizedTensor":
        n = int(doc["N"])
        return cls(np.asarray(doc["entries"], dtype=float).reshape(n, n), doc["provenance"])

    @classmethod
    def isotropic(cls, value: float, provenance: str = ANALYTIC) -> "HomogenizedTensor":
        return cls(value * np.eye(2), provenance)


@dataclass
class CorrectorField:
    """Corrector ``w = lam . y + v`` on the vertices of the cell mesh.

    Attributes
    ----------
    direction : ndarray
        The vector ``lam``.
    w : ndarray
        Vertex values of the corrector.
    fluctuation : ndarray
        Vertex values of ``v = w - lam . y`` (``chi`` on periodic cells).
    regime : str
        Constraint regime of the fluctuation space.
    """

    direction: np.ndarray
    w: np.ndarray
    fluctuation: np.ndarray
    regime: str
    forms: AssembledForms = field(repr=False)


def _free_solver(forms: AssembledForms):
    space = forms.space
    free = space.free
    if space.master is None:
        free = free[1:]  # pin one dof, the mean is fixed afterwards
    Kf = forms.K[free][:, free].tocsc()
    try:
        lu = spla.splu(Kf)
    except RuntimeError as exc:
        raise NumericError(f"corrector system is singular: {exc}") from exc
    return free, lu


def solve_correctors(forms: AssembledForms, directions: Sequence) -> list:
    """Correctors for several directions sharing one factorization."""
    space = forms.space
    free, lu = _free_solver(forms)
    P = space.P
    out = []
    for lam in directions:
        lam = np.asarray(lam, dtype=float)
        ylin = forms.mesh.vertices @ lam
        rhs = -(P.T @ (forms.K_full @ ylin))
        v = np.zeros(space.n_dofs)
        v[free] = lu.solve(rhs[free])
        if space.master is None:
            v -= np.sum(forms.Mass @ v) / forms.area
        vf = space.prolong(v)
        out.append(CorrectorField(lam, ylin + vf, vf, space.regime, forms))
    return out


def solve_corrector_hs(field: CoefficientField, mesh: Mesh, direction, forms: Optional[AssembledForms] = None) -> CorrectorField:
    """Corrector with Dirichlet data ``lam . y`` in the natural regime of the cell."""
    if forms is None:
        forms = assemble(field, mesh, default_space(field.geometry, mesh))
    return solve_correctors(forms, [direction])[0]


def interior_residual(corrector: CorrectorField) -> float:
    """Largest residual of the discrete equation over fluctuation test functions."""
    forms = corrector.forms
    r = forms.space.P.T @ (forms.K_full @ corrector.w)
    scale = abs(forms.K_full).sum(axis=1).max() * np.max(np.abs(corrector.w))
    return float(np.max(np.abs(r[forms.space.free])) / scale)


def homogenized_cell_integral(correctors: Sequence[CorrectorField], tol: float = 1e-8,
                              provenance: str = CELL_INTEGRAL) -> HomogenizedTensor:
    """Both integral forms of the effective tensor from correctors ``w_{e_1}, w_{e_2}``.

    ``flux`` uses ``int A grad w_k . e_l`` and ``energy`` uses
    ``int A grad w_k . grad w_l``; they coincide by discrete Galerkin
    orthogonality. The symmetrized flux form is returned.
    """
    forms = correctors[0].forms
    for k, c in enumerate(correctors):
        if c.forms is not forms:
            raise ArgumentError("correctors must share one assembly")
        if not np.allclose(c.direction, np.eye(2)[k]):
            raise ArgumentError("correctors must be ordered e_1, e_2")
    G, area = barycentric_gradients(forms.mesh)
    t = forms.mesh.triangles
    grads = [np.einsum("mad,ma->md", G, c.w[t]) for c in correctors]
    flux = np.array([[np.sum(area * np.einsum("mkl,ml->mk", forms.A_tri, grads[k])[:, l]) for l in range(2)]
                     for k in range(2)]) / forms.area
    energy = np.array([[correctors[k].w @ (forms.K_full @ correctors[l].w) for l in range(2)]
                       for k in range(2)]) / forms.area
    gap = float(np.max(np.abs(flux - energy)) / np.max(np.abs(flux)))
    if gap > 10 * tol:
        raise ConsistencyError(f"flux and energy forms disagree by {gap:.3e}", gap)
    M = 0.5 * (flux + flux.T)
    return HomogenizedTensor(M, provenance, {"flux": flux.tolist(), "energy": energy.tolist(), "gap": gap})


def homogenized_from_hessian(forms: AssembledForms, steps: Sequence[float] = DEFAULT_HESSIAN_STEPS,
                             tol: float = 1e-12) -> HomogenizedTensor:
    """Half the Hessian of ``lambda_1`` at zero; off-diagonals by polarization."""
    e1, e2 = np.eye(2)
    u = (e1 + e2) / np.sqrt(2.0)
    fits = [fd_derivatives_lambda1(forms, d, steps, tol) for d in (e1, e2, u)]
    m11, m22, muu = (f.q2 for f in fits)
    m12 = muu - 0.5 * (m11 + m22)
    M = np.array([[m11, m12], [m12, m22]])
    return HomogenizedTensor(M, EIG_HESSIAN, {"q4": [f.q4 for f in fits],
                                              "first_order": [f.first_order for f in fits]})


def periodic_homogenized(field: CoefficientField, mesh: Mesh) -> HomogenizedTensor:
    """Effective tensor of a periodic cell from the periodic cell problems."""
    if not isinstance(field.geometry, PeriodicSquare):
        raise ArgumentError("periodic route needs a PeriodicSquare cell")
    forms = assemble(field, mesh, make_space(mesh, PERIODIC))
    return homogenized_cell_integral(solve_correctors(forms, np.eye(2)), provenance=PERIODIC_CELL)


def _boundary_mass(mesh: Mesh, edges: np.ndarray, bnodes: np.ndarray):
    loc = np.full(mesh.n_vertices, -1)
    loc[bnodes] = np.arange(len(bnodes))
    i, j = loc[edges[:, 0]], loc[edges[:, 1]]
    L = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    n = len(bnodes)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), i, j, L


def equivalence_check(corrector: CorrectorField, M_candidate) -> dict:
    """Compare the discrete conormal flux of ``w`` with ``M lam . nu`` on the cell boundary.

    The flux is recovered from the Galerkin residual at boundary vertices by
    solving the boundary mass system. Returns L2 and pointwise errors and the
    L2 norm of the target flux.
    """
    forms = corrector.forms
    if corrector.regime != CONSTANT_TRACE:
        raise ArgumentError("flux test needs a constant-trace cell")
    M = M_candidate.entries if isinstance(M_candidate, HomogenizedTensor) else np.asarray(M_candidate, float)
    if not np.allclose(M, M.T) or np.linalg.eigvalsh(M)[0] <= 0:
        raise ArgumentError("candidate tensor must be symmetric positive definite")
    mesh = forms.mesh
    edges = mesh.boundary_edges()
    bnodes = np.unique(edges)
    Mb, i, j, L = _boundary_mass(mesh, edges, bnodes)
    R = (forms.K_full @ corrector.w)[bnodes]
    q = spla.spsolve(Mb.tocsc(), R)
    d = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    nu = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
    target = nu @ (M @ corrector.direction)
    a, b = q[i] - target, q[j] - target
    err2 = float(np.sum(L / 3 * (a * a + a * b + b * b)))
    norm2 = float(np.sum(L * target ** 2))
    return {
        "flux_l2_error": err2 ** 0.5,
        "target_l2_norm": norm2 ** 0.5,
        "relative_l2_error": (err2 / norm2) ** 0.5,
        "max_pointwise_error": float(np.max(np.abs(np.concatenate([a, b])))),
        "total_flux": float(np.sum(R)),
    }


def eigvec_first_derivative_check(forms: AssembledForms, correctors: Sequence[CorrectorField], k: int = 0,
                                  eta_max: float = 0.5, factors=(0.02, 0.04, 0.08), tol: float = 1e-13) -> dict:
    """Central differences of the boundary-gauged ground state against ``i c (w_k - y_k)``.

    Returns L2 errors per step, successive error ratios under step halving,
    the Richardson-extrapolated error and the L2 norm of the real part.
    """
    e = np.eye(2)[k]
    c = forms.area ** -0.5
    P = forms.space.P
    target = 1j * c * correctors[k].fluctuation
    Mf = forms.Mass_full

    def l2(u):
        return float(np.sqrt(np.real(u.conj() @ (Mf @ u))))

    steps = np.asarray(factors, dtype=float) * eta_max
    D = []
    for t in steps:
        pp = P @ solve_ground_state(forms, t * e, tol).phi
        pm = P @ solve_ground_state(forms, -t * e, tol).phi
        D.append((pp - pm) / (2 * t))
    errors = np.array([l2(d - target) for d in D])
    ratios = errors[1:] / errors[:-1]
    rich = (4 * D[0] - D[1]) / 3
    return {
        "steps": steps.tolist(),
        "errors": errors.tolist(),
        "ratios": ratios.tolist(),
        "richardson_error": l2(rich - target),
        "real_part_norm": max(l2(d.real.astype(complex)) for d in D),
        "target_norm": l2(target),
    }
