"""Fourth-order (Burnett) coefficient of the first eigenvalue at zero momentum.

For a direction ``eta`` let ``X1 = eta_k (w_k - y_k)`` and let ``X2`` vanish on
the constant-trace boundary and solve, in weak form,

    a0(X2, psi) = int (A~ - M~) psi - int A eta . (X1 grad psi - psi grad X1),

with ``A~ = eta_k eta_l a_kl`` and ``M~ = eta_k eta_l m_kl``. The quartic
coefficient is ``d(eta) = -|omega|^{-1} E[X2 - X1^2 / 2]`` where ``E`` is the
Dirichlet energy ``int A grad v . grad v``. ``X1^2`` is formed at the vertices
(a P1 interpolant), which is exact only up to an O(h^2) quadrature error.

The same solves also give the value that is exact for the discrete pencil,
``|omega|^{-1} (int (A~ - M~) X1^2 - E[X2])``, reported as ``d_discrete``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ArgumentError, NumericError
from .fem import AssembledForms, coupling, weighted_mass
from .homog import HomogenizedTensor, homogenized_cell_integral, solve_correctors


@dataclass
class DispersionState:
    """Auxiliary fields for one direction (vertex values)."""

    direction: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    Atilde: np.ndarray
    Mtilde: float
    d: float
    d_discrete: float
    flux_residual: float
    solve_residual: float = field(default=0.0)


class BurnettSolver:
    """Reusable factorization and correctors for a fan of directions.

    Parameters
    ----------
    forms : AssembledForms
        Forms in a regime with a boundary master dof.
    M : HomogenizedTensor, optional
        Effective tensor; the cell-integral tensor of the same mesh by default.
    """

    def __init__(self, forms: AssembledForms, M: Optional[HomogenizedTensor] = None):
        if forms.space.master is None:
            raise ArgumentError("the quartic coefficient needs a constant-trace boundary")
        self.forms = forms
        self.correctors = solve_correctors(forms, np.eye(2))
        self.M = M if M is not None else homogenized_cell_integral(self.correctors)
        free = forms.space.free
        self._free = free
        self._lu = spla.splu(forms.K[free][:, free].tocsc())

    def X1(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return eta[0] * self.correctors[0].fluctuation + eta[1] * self.correctors[1].fluctuation

    def solve_X2(self, eta, X1: np.ndarray) -> tuple[np.ndarray, float]:
        """Vertex values of ``X2`` and the relative residual of the solve."""
        f = self.forms
        eta = np.asarray(eta, dtype=float)
        mt = float(eta @ self.M.entries @ eta)
        ones = np.ones(f.mesh.n_vertices)
        r = weighted_mass(f, eta, full=True) @ ones - mt * (f.Mass_full @ ones) - coupling(f, eta, full=True) @ X1
        rhs = f.space.P.T @ r
        x = np.zeros(f.n_dofs)
        x[self._free] = self._lu.solve(rhs[self._free])
        res = f.K[self._free] @ x - rhs[self._free]
        scale = max(np.linalg.norm(rhs[self._free]), 1e-300)
        return f.space.prolong(x), float(np.linalg.norm(res) / scale)

    def state(self, eta) -> DispersionState:
        f = self.forms
        eta = np.asarray(eta, dtype=float)
        X1 = self.X1(eta)
        X2, res = self.solve_X2(eta, X1)
        mt = float(eta @ self.M.entries @ eta)
        at = np.einsum("k,mkl,l->m", eta, f.A_tri, eta)
        K = f.K_full
        v = X2 - 0.5 * X1 ** 2
        d = -float(v @ (K @ v)) / f.area
        Wt = weighted_mass(f, eta, full=True)
        d_disc = (float(X1 @ (Wt @ X1)) - mt * float(X1 @ (f.Mass_full @ X1)) - float(X2 @ (K @ X2))) / f.area
        flux = float(np.sum((K @ X2)[f.space.dof == f.space.master]))
        return DispersionState(eta, X1, X2, at, mt, d, d_disc, flux, res)


def solve_X2(forms: AssembledForms, direction, X1: np.ndarray, M: HomogenizedTensor) -> np.ndarray:
    """Vertex values of ``X2`` for one direction."""
    X2, res = BurnettSolver(forms, M).solve_X2(direction, X1)
    if not np.isfinite(res):
        raise NumericError("X2 solve failed", res)
    return X2


def burnett_quartic(forms: AssembledForms, direction, M: Optional[HomogenizedTensor] = None) -> float:
    """Quartic coefficient ``d(eta)`` of ``lambda_1`` along ``direction``."""
    return BurnettSolver(forms, M).state(direction).d


def fan_directions(n: int = 16) -> np.ndarray:
    """Unit vectors at angles ``2 pi j / n``."""
    ang = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.sin(ang)])


def dispersion_csv(angles, d, q4, header: Optional[str] = None) -> str:
    """CSV with columns angle, d, q4, gap."""
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle", "d", "q4", "gap"])
    for a, x, q in zip(angles, d, q4):
        gap = abs(x - q) / abs(q) if q else float("nan")
        w.writerow([repr(float(a)), repr(float(x)), repr(float(q)), repr(float(gap))])
    return buf.getvalue()
