"""Ground states of the shifted cell operator and derivatives of the first eigenvalue.

The pencil ``(K(eta), Mass)`` is solved by shift-and-invert subspace iteration
with Rayleigh-Ritz projection. The shift ``sigma = -1e-3 trace(K)/n`` makes the
factored matrix definite even at ``eta = 0`` where constants are in the kernel.
When the estimated factorization size exceeds ``memory_cap`` the solver
switches to LOBPCG with an incomplete-LU preconditioner.

Ground states carry the boundary gauge: the eigenvector is divided by its
master (boundary) value and scaled to ``|omega|^{-1/2}``. On periodic cells the
mean value plays the role of the boundary value.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from ._parallel import parallel_map
from .errors import ArgumentError, NormalizationError, NumericError
from .fem import AssembledForms, shifted_matrix

log = logging.getLogger(__name__)

DEFAULT_MEMORY_CAP = 2 * 1024 ** 3
_FILL_ESTIMATE = 40


@dataclass
class GroundState:
    """First eigenpair at one momentum.

    Attributes
    ----------
    eta : ndarray
        Momentum.
    lambda1 : float
        First eigenvalue.
    phi : ndarray
        Complex eigenvector in the reduced basis, in the gauge named by ``normalization``.
    residual : float
        ``||K(eta) phi - lambda1 Mass phi|| / (||K(eta)||_1 ||phi||)``.
    iterations : int
        Outer iterations used by the eigensolver.
    normalization : str
        ``"boundary"`` (constant-trace regimes) or ``"mean"`` (periodic).
    """

    eta: np.ndarray
    lambda1: float
    phi: np.ndarray
    residual: float
    iterations: int
    normalization: str


def _relative_residuals(Ke, M, X, lam):
    R = Ke @ X - (M @ X) * lam[None, :]
    knorm = spla.norm(Ke, 1)
    return np.linalg.norm(R, axis=0) / (knorm * np.linalg.norm(X, axis=0))


def _start_block(n: int, p: int, dtype=complex) -> np.ndarray:
    rng = np.random.default_rng(20240611)
    X = np.empty((n, p), dtype=dtype)
    X[:, 0] = 1.0
    if p > 1:
        X[:, 1:] = rng.standard_normal((n, p - 1))
    return X


def _shift(forms: AssembledForms) -> float:
    return -1e-3 * float(forms.K.diagonal().sum()) / forms.n_dofs


def _subspace_iteration(Ke, M, m, tol, maxiter, sigma):
    n = Ke.shape[0]
    p = min(n, m + 3)
    lu = spla.splu((Ke - sigma * M).tocsc())
    X = _start_block(n, p)
    lam = np.zeros(p)
    res = np.full(p, np.inf)
    for it in range(1, maxiter + 1):
        Y = lu.solve(np.asarray(M @ X))
        Y /= np.linalg.norm(Y, axis=0)
        Kr = Y.conj().T @ (Ke @ Y)
        Mr = Y.conj().T @ (M @ Y)
        Kr = 0.5 * (Kr + Kr.conj().T)
        Mr = 0.5 * (Mr + Mr.conj().T)
        lam, V = la.eigh(Kr, Mr)
        X = Y @ V
        res = _relative_residuals(Ke, M, X[:, :m], lam[:m])
        if np.all(res <= tol):
            return lam[:m], X[:, :m], res, it
    raise NumericError(f"shift-invert iteration did not converge in {maxiter} steps", float(res.max()))


def _lobpcg(Ke, M, m, tol, maxiter, sigma):
    n = Ke.shape[0]
    p = min(n, m + 3)
    P = spla.spilu((Ke.real - sigma * M).tocsc(), drop_tol=1e-5, fill_factor=20)
    prec = spla.LinearOperator(Ke.shape, matvec=lambda x: P.solve(x.real) + 1j * P.solve(x.imag) if np.iscomplexobj(x) else P.solve(x), dtype=complex)
    X = _start_block(n, p)
    knorm = spla.norm(Ke, 1)
    lam, X = spla.lobpcg(Ke, X, B=M, M=prec, largest=False, tol=tol * knorm, maxiter=maxiter)
    order = np.argsort(lam)
    lam, X = lam[order][:m], X[:, order][:, :m]
    res = _relative_residuals(Ke, M, X, lam)
    if np.any(res > 10 * tol):
        raise NumericError("LOBPCG did not reach the requested tolerance", float(res.max()))
    return lam, X, res, maxiter


def _eigs(forms: AssembledForms, eta, m: int, tol: float, maxiter: int, memory_cap: float):
    if m < 1:
        raise ArgumentError("need at least one eigenpair")
    Ke = shifted_matrix(forms, np.asarray(eta, dtype=float))
    M = forms.Mass
    sigma = _shift(forms)
    if _FILL_ESTIMATE * Ke.nnz * 16 > memory_cap:
        log.info("factorization estimate above memory cap, using LOBPCG")
        lam, X, res, it = _lobpcg(Ke, M, m, tol, max(maxiter, 500), sigma)
    else:
        lam, X, res, it = _subspace_iteration(Ke, M, m, tol, maxiter, sigma)
    # Ritz vectors are Mass-orthogonal; fix their lengths
    X = X / np.sqrt(np.real(np.einsum("ij,ij->j", X.conj(), M @ X)))
    lam_rq = np.real(np.einsum("ij,ij->j", X.conj(), Ke @ X))
    return lam_rq, X, res, it


def solve_lowest_band(forms: AssembledForms, eta, m: int = 1, tol: float = 1e-10, maxiter: int = 200,
                      memory_cap: float = DEFAULT_MEMORY_CAP) -> list:
    """The ``m`` smallest eigenpairs ``(lambda_j, phi_j)``, Mass-orthonormal and sorted."""
    lam, X, _, _ = _eigs(forms, eta, m, tol, maxiter, memory_cap)
    order = np.argsort(lam, kind="stable")
    return [(float(lam[j]), X[:, j]) for j in order]


def normalize_ground_state(forms: AssembledForms, x: np.ndarray) -> tuple[np.ndarray, str]:
    """Apply the boundary gauge (or the mean gauge on periodic cells)."""
    c = forms.area ** -0.5
    space = forms.space
    if space.master is not None:
        ref = x[space.master]
        tag = "boundary"
    else:
        ref = np.sum(forms.Mass @ x) / forms.area
        tag = "mean"
    if abs(ref) <= 1e-8 * np.max(np.abs(x)):
        raise NormalizationError("boundary value of the ground state vanishes", float(abs(ref)))
    return x * (c / ref), tag


def solve_ground_state(forms: AssembledForms, eta, tol: float = 1e-10, maxiter: int = 200,
                       memory_cap: float = DEFAULT_MEMORY_CAP) -> GroundState:
    """First eigenpair of ``(K(eta), Mass)`` in the boundary gauge."""
    if not tol > 0:
        raise ArgumentError("tolerance must be positive")
    eta = np.asarray(eta, dtype=float)
    lam, X, res, it = _eigs(forms, eta, 1, tol, maxiter, memory_cap)
    phi, tag = normalize_ground_state(forms, X[:, 0])
    return GroundState(eta, float(lam[0]), phi, float(res[0]), int(it), tag)


def rayleigh_quotient(forms: AssembledForms, eta, phi: np.ndarray) -> float:
    Ke = shifted_matrix(forms, eta)
    return float(np.real(phi.conj() @ (Ke @ phi)) / np.real(phi.conj() @ (forms.Mass @ phi)))


@dataclass
class SweepTable:
    """Ground energies on a momentum grid."""

    etas: np.ndarray
    lambdas: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray

    def lipschitz_quotients(self) -> np.ndarray:
        """Pairwise ``|lambda(eta) - lambda(eta')| / |eta - eta'|`` for distinct points."""
        d = np.linalg.norm(self.etas[:, None] - self.etas[None], axis=2)
        dl = np.abs(self.lambdas[:, None] - self.lambdas[None])
        mask = d > 0
        return dl[mask] / d[mask]

    def to_csv(self, header: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"eta_{k + 1}" for k in range(self.etas.shape[1])] + ["lambda1", "residual", "iterations"])
        for e, lam, r, it in zip(self.etas, self.lambdas, self.residuals, self.iterations):
            w.writerow([repr(float(x)) for x in e] + [repr(float(lam)), repr(float(r)), int(it)])
        return buf.getvalue()


def sweep_lambda1(forms: AssembledForms, etas: Sequence, tol: float = 1e-10, eta_max: Optional[float] = None) -> SweepTable:
    """``lambda_1`` on a list of momenta (solved independently)."""
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    if eta_max is not None and np.any(np.linalg.norm(etas, axis=1) > eta_max + 1e-12):
        raise ArgumentError("momentum grid leaves the configured radius")
    states = parallel_map(lambda e: solve_ground_state(forms, e, tol), etas)
    return SweepTable(etas, np.array([s.lambda1 for s in states]), np.array([s.residual for s in states]),
                      np.array([s.iterations for s in states]))


@dataclass
class FDResult:
    """Finite-difference expansion ``lambda_1(t e) = q2 t^2 + q4 t^4 + ...``."""

    first_order: float
    q2: float
    q4: float
    coefficients: np.ndarray
    condition: float
    steps: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    lambda_zero: float
    fit_residual: float = field(default=0.0)


def fd_derivatives_lambda1(forms: AssembledForms, direction, steps: Sequence[float], tol: float = 1e-12,
                           n_terms: Optional[int] = None, odd_tol: Optional[float] = None,
                           max_condition: float = 1e10) -> FDResult:
    """Even least-squares fit of ``lambda_1`` along ``direction``.

    The constant and odd parts are measured and must vanish within ``odd_tol``
    before they are dropped from the model.

    Parameters
    ----------
    steps : sequence of float
        At least four distinct positive step sizes.
    n_terms : int, optional
        Number of even powers ``t^2, t^4, ...`` in the model; default
        ``min(len(steps) - 1, 4)``.
    """
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    t = np.unique(np.asarray(steps, dtype=float))
    if len(t) < 4 or np.any(t <= 0):
        raise ArgumentError("need at least four distinct positive steps")
    n_terms = n_terms or min(len(t) - 1, 4)
    points = [t_ * e for t_ in t] + [-t_ * e for t_ in t] + [np.zeros(2)]
    lams = np.array([s.lambda1 for s in parallel_map(lambda p: solve_ground_state(forms, p, tol), points)])
    lp, lm, l0 = lams[:len(t)], lams[len(t):2 * len(t)], lams[-1]
    scale = max(1.0, float(np.max(np.abs(lams))))
    odd_tol = odd_tol if odd_tol is not None else 1e-8 * scale
    odd = 0.5 * (lp - lm)
    kscale = float(forms.K.diagonal().sum()) / forms.n_dofs
    if np.max(np.abs(odd)) > odd_tol or abs(l0) > 1e-8 * kscale:
        raise NumericError("odd or constant part of lambda_1 does not vanish", float(max(np.abs(odd).max(), abs(l0))))
    even = 0.5 * (lp + lm)
    V = np.column_stack([t ** (2 * (j + 1)) for j in range(n_terms)])
    colscale = np.linalg.norm(V, axis=0)
    Vs = V / colscale
    cond = float(np.linalg.cond(Vs))
    if cond > max_condition:
        raise NumericError(f"ill-conditioned fit (condition {cond:.3e})", cond)
    c, *_ = np.linalg.lstsq(Vs, even, rcond=None)
    c = c / colscale
    fit_res = float(np.linalg.norm(V @ c - even))
    q4 = float(c[1]) if n_terms > 1 else 0.0
    return FDResult(float(odd[0] / t[0]), float(c[0]), q4, c, cond, t, lp, lm, float(l0), fit_res)
