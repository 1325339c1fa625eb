"""Constrained P1 spaces and assembly of the shifted cell forms.

For momentum ``eta`` the sesquilinear form
``a(eta)(u, v) = int A (grad + i eta) u . conj((grad + i eta) v)`` is stored as
real blocks so that one assembly serves a whole momentum sweep::

    K(eta) = K + i eta_k (C_k - C_k^T) + eta_k eta_l W_kl

with ``K_ij = int A grad phi_j . grad phi_i``,
``C_k[i, j] = int (A grad phi_i)_k phi_j`` and ``W_kl[i, j] = int a_kl phi_i phi_j``.
Row ``i`` holds the test function, column ``j`` the trial function.

Three constraint regimes are supported:

``constant-trace``
    every boundary vertex is condensed to one master dof (dof 0);
``periodic``
    opposite faces of the square are identified;
``periodic-constant-trace``
    faces normal to ``axis`` share one master dof, the other faces are periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, AssemblyError
from .geometry import CoefficientField, ConfocalEllipse, DiskInclusion, LaminateCell, PeriodicSquare
from .mesh import BOTTOM, LEFT, RIGHT, TOP, Mesh

CONSTANT_TRACE = "constant-trace"
PERIODIC = "periodic"
PERIODIC_CONSTANT_TRACE = "periodic-constant-trace"
REGIMES = (CONSTANT_TRACE, PERIODIC, PERIODIC_CONSTANT_TRACE)

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A = (6.0 - np.sqrt(15.0)) / 21.0
_B = (6.0 + np.sqrt(15.0)) / 21.0
GAUSS7_POINTS = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [1 - 2 * _A, _A, _A], [_A, 1 - 2 * _A, _A], [_A, _A, 1 - 2 * _A],
    [1 - 2 * _B, _B, _B], [_B, 1 - 2 * _B, _B], [_B, _B, 1 - 2 * _B],
])
GAUSS7_WEIGHTS = np.array([9 / 40] + [(155 - np.sqrt(15)) / 1200] * 3 + [(155 + np.sqrt(15)) / 1200] * 3)


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def _union(parent, i, j):
    ri, rj = _find(parent, i), _find(parent, j)
    if ri != rj:
        lo, hi = min(ri, rj), max(ri, rj)
        parent[hi] = lo


def _match_faces(v: np.ndarray, src: np.ndarray, dst: np.ndarray, coord: int) -> list:
    """Pair vertices of two opposite faces by their tangential coordinate."""
    if len(src) != len(dst):
        raise AssemblyError("opposite faces carry different vertex counts")
    s = src[np.argsort(v[src, coord], kind="stable")]
    d = dst[np.argsort(v[dst, coord], kind="stable")]
    if not np.allclose(v[s, coord], v[d, coord], rtol=0, atol=1e-10):
        raise AssemblyError("opposite face vertices are not periodic images")
    return list(zip(s.tolist(), d.tolist()))


@dataclass(frozen=True)
class CellSpace:
    """Constraint map from mesh vertices to reduced dofs.

    Attributes
    ----------
    regime : str
        One of ``REGIMES``.
    axis : int or None
        Constant-trace direction (1-based) of the mixed regime.
    dof : ndarray
        Reduced dof index of every vertex.
    representative : ndarray
        Master vertex of every vertex (identity for free vertices).
    master : int or None
        Reduced index of the shared boundary dof, ``None`` for periodic spaces.
    """

    regime: str
    axis: Optional[int]
    dof: np.ndarray
    representative: np.ndarray
    n_dofs: int
    master: Optional[int]
    P: sp.csr_matrix = field(repr=False)

    @property
    def free(self) -> np.ndarray:
        """Reduced dofs of the fluctuation space (master removed)."""
        idx = np.arange(self.n_dofs)
        return idx if self.master is None else idx[idx != self.master]

    def prolong(self, x: np.ndarray) -> np.ndarray:
        """Vertex values of a reduced vector."""
        return np.asarray(x)[self.dof]

    def project(self, u: np.ndarray) -> np.ndarray:
        """Replace every vertex value by the value at its master vertex."""
        return np.asarray(u)[self.representative]


def make_space(mesh: Mesh, regime: str, axis: Optional[int] = None) -> CellSpace:
    """Build the constraint map of a regime on ``mesh``."""
    if regime not in REGIMES:
        raise ArgumentError(f"unknown regime {regime!r}")
    n = mesh.n_vertices
    v = mesh.vertices
    mk = mesh.markers
    parent = list(range(n))
    master_vertices = np.zeros(0, dtype=np.int64)
    if regime == CONSTANT_TRACE:
        master_vertices = np.flatnonzero(mk)
    else:
        faces = {LEFT: np.flatnonzero(mk & LEFT), RIGHT: np.flatnonzero(mk & RIGHT),
                 BOTTOM: np.flatnonzero(mk & BOTTOM), TOP: np.flatnonzero(mk & TOP)}
        if any(len(f) == 0 for f in faces.values()):
            raise AssemblyError("square face markers missing for a periodic regime")
        pairs = []
        if regime == PERIODIC_CONSTANT_TRACE:
            if axis not in (1, 2):
                raise ArgumentError("mixed regime needs axis 1 or 2")
            lo, hi = (LEFT, RIGHT) if axis == 1 else (BOTTOM, TOP)
            master_vertices = np.union1d(faces[lo], faces[hi])
            plo, phi, coord = (BOTTOM, TOP, 0) if axis == 1 else (LEFT, RIGHT, 1)
            pairs = _match_faces(v, faces[plo], faces[phi], coord)
        else:
            pairs = _match_faces(v, faces[LEFT], faces[RIGHT], 1) + _match_faces(v, faces[BOTTOM], faces[TOP], 0)
        for i, j in pairs:
            _union(parent, i, j)
    for i in master_vertices[1:]:
        _union(parent, int(master_vertices[0]), int(i))
    rep = np.array([_find(parent, i) for i in range(n)], dtype=np.int64)
    roots = np.unique(rep)
    master = None
    if len(master_vertices):
        mroot = rep[master_vertices[0]]
        roots = np.concatenate([[mroot], roots[roots != mroot]])
        master = 0
    index = np.full(n, -1, dtype=np.int64)
    index[roots] = np.arange(len(roots))
    dof = index[rep]
    P = sp.csr_matrix((np.ones(n), (np.arange(n), dof)), shape=(n, len(roots)))
    return CellSpace(regime, axis if regime == PERIODIC_CONSTANT_TRACE else None,
                     dof, rep, len(roots), master, P)


def default_space(geometry, mesh: Mesh) -> CellSpace:
    """Natural regime of a cell: constant trace, mixed for laminates, periodic for squares."""
    if isinstance(geometry, (DiskInclusion, ConfocalEllipse)):
        return make_space(mesh, CONSTANT_TRACE)
    if isinstance(geometry, LaminateCell):
        return make_space(mesh, PERIODIC_CONSTANT_TRACE, geometry.axis)
    if isinstance(geometry, PeriodicSquare):
        return make_space(mesh, PERIODIC)
    raise ArgumentError(f"no default regime for {geometry!r}")


@dataclass
class AssembledForms:
    """Real blocks of the shifted form, on vertices (``*_full``) and reduced dofs.

    Attributes
    ----------
    K, Mass : csr_matrix
        Reduced stiffness and mass matrices.
    C : list of csr_matrix
        Reduced first-order coupling blocks ``C_k``.
    W : list of list of csr_matrix
        Reduced phase-weighted mass blocks ``W_kl``.
    area : float
        Mesh area ``|omega_h|``, used for every normalization.
    A_tri : ndarray
        Coefficient matrix of every triangle, shape ``(m, 2, 2)``.
    """

    field: CoefficientField
    mesh: Mesh
    space: CellSpace
    K: sp.csr_matrix
    C: list
    W: list
    Mass: sp.csr_matrix
    K_full: sp.csr_matrix
    C_full: list
    W_full: list
    Mass_full: sp.csr_matrix
    area: float
    A_tri: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.space.n_dofs

    def reduce(self, M: sp.spmatrix) -> sp.csr_matrix:
        P = self.space.P
        return (P.T @ M @ P).tocsr()

    def with_shift(self, sigma: float) -> "AssembledForms":
        """Copy whose stiffness is ``K + sigma Mass``."""
        other = AssembledForms(**self.__dict__)
        other.K = (self.K + sigma * self.Mass).tocsr()
        other.K_full = (self.K_full + sigma * self.Mass_full).tocsr()
        return other


def barycentric_gradients(mesh: Mesh):
    """Gradients of the barycentric coordinates, shape ``(m, 3, 2)``, and areas."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1), 0.5 * det


def _probe_points(mesh: Mesh) -> np.ndarray:
    """Centroid and the three points halfway to the vertices, shape ``(m, 4, 2)``."""
    p = mesh.vertices[mesh.triangles]
    c = p.mean(axis=1, keepdims=True)
    return np.concatenate([c, 0.5 * (c + p)], axis=1)


def triangle_coefficients(field: CoefficientField, mesh: Mesh) -> np.ndarray:
    """Per-triangle coefficient, checking that no triangle straddles an interface."""
    if not mesh.conforming:
        raise AssemblyError("mesh is flagged as non-conforming")
    probes = _probe_points(mesh)
    m = mesh.n_triangles
    reg = field.region(probes.reshape(-1, 2)).reshape(m, 4)
    if np.any(reg != reg[:, :1]):
        bad = int(np.count_nonzero(np.any(reg != reg[:, :1], axis=1)))
        raise AssemblyError(f"{bad} triangles straddle a phase interface")
    return field.evaluate_many(probes[:, 0])


def _coo(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble(field: CoefficientField, mesh: Mesh, space: CellSpace, quadrature: str = "exact") -> AssembledForms:
    """Assemble ``K``, ``C_k``, ``W_kl`` and ``Mass`` for a piecewise-constant field.

    Parameters
    ----------
    quadrature : {"exact", "gauss7"}
        ``exact`` uses closed-form P1 element integrals with the per-triangle
        phase; ``gauss7`` samples the coefficient at seven points per triangle.
    """
    G, area = barycentric_gradients(mesh)
    A_tri = triangle_coefficients(field, mesh)
    m = mesh.n_triangles
    if quadrature == "exact":
        Aq = np.repeat(A_tri[:, None], len(GAUSS7_WEIGHTS), axis=1)
    elif quadrature == "gauss7":
        pts = np.einsum("qa,mad->mqd", GAUSS7_POINTS, mesh.vertices[mesh.triangles])
        Aq = field.evaluate_many(pts.reshape(-1, 2)).reshape(m, len(GAUSS7_WEIGHTS), 2, 2)
    else:
        raise ArgumentError(f"unknown quadrature {quadrature!r}")
    w = GAUSS7_WEIGHTS[None, :] * area[:, None]
    Abar = np.einsum("mq,mqkl->mkl", w, Aq)
    # K[a, b] = int A grad phi_b . grad phi_a
    Kl = np.einsum("mak,mkl,mbl->mab", G, Abar, G)
    # C_k[a, b] = int (A grad phi_a)_k phi_b
    AqPhi = np.einsum("mq,mqkl,qb->mklb", w, Aq, GAUSS7_POINTS)
    Cl = [np.einsum("mal,mlb->mab", G, AqPhi[:, k]) for k in range(2)]
    # W_kl[a, b] = int a_kl phi_a phi_b
    phiphi = np.einsum("qa,qb->qab", GAUSS7_POINTS, GAUSS7_POINTS)
    Wl = [[np.einsum("mq,mq,qab->mab", w, Aq[:, :, k, l], phiphi) for l in range(2)] for k in range(2)]
    Ml = np.einsum("mq,qab->mab", w, phiphi)

    K_full = _coo(mesh, Kl)
    C_full = [_coo(mesh, c) for c in Cl]
    W_full = [[_coo(mesh, Wl[k][l]) for l in range(2)] for k in range(2)]
    M_full = _coo(mesh, Ml)
    P = space.P
    red = lambda M: (P.T @ M @ P).tocsr()  # noqa: E731
    return AssembledForms(
        field=field, mesh=mesh, space=space,
        K=red(K_full), C=[red(c) for c in C_full], W=[[red(x) for x in row] for row in W_full],
        Mass=red(M_full), K_full=K_full, C_full=C_full, W_full=W_full, Mass_full=M_full,
        area=float(area.sum()), A_tri=A_tri,
    )


def coupling(forms: AssembledForms, eta, full: bool = False) -> sp.csr_matrix:
    """Real antisymmetric block ``sum_k eta_k (C_k - C_k^T)``."""
    C = forms.C_full if full else forms.C
    B = eta[0] * (C[0] - C[0].T) + eta[1] * (C[1] - C[1].T)
    return B.tocsr()


def weighted_mass(forms: AssembledForms, eta, full: bool = False) -> sp.csr_matrix:
    """``sum_kl eta_k eta_l W_kl``."""
    W = forms.W_full if full else forms.W
    return (eta[0] * eta[0] * W[0][0] + eta[0] * eta[1] * (W[0][1] + W[1][0]) + eta[1] * eta[1] * W[1][1]).tocsr()


def shifted_matrix(forms: AssembledForms, eta) -> sp.csr_matrix:
    """Hermitian matrix ``K(eta)`` in the reduced basis."""
    eta = np.asarray(eta, dtype=float)
    if not np.any(eta):
        return forms.K.astype(complex)
    return (forms.K + 1j * coupling(forms, eta) + weighted_mass(forms, eta)).tocsr()
