import numpy as np
import pytest
from hypothesis import given, strategies as st

from bloch_hs.errors import ArgumentError
from bloch_hs.fem import (CONSTANT_TRACE, PERIODIC, assemble, coupling, default_space, make_space, shifted_matrix,
                          weighted_mass)
from bloch_hs.geometry import CoefficientField, DiskInclusion, PeriodicSquare
from bloch_hs.mesh import generate_cell_mesh

eta_st = st.tuples(st.floats(-1, 1), st.floats(-1, 1))


def test_stiffness_annihilates_constants(disk_forms):
    ones = np.ones(disk_forms.mesh.n_vertices)
    assert np.max(np.abs(disk_forms.K_full @ ones)) < 1e-12


def test_stiffness_symmetric_and_semidefinite(disk_forms):
    K = disk_forms.K.toarray()
    assert np.allclose(K, K.T, atol=1e-13)
    assert np.linalg.eigvalsh(K)[0] > -1e-10


def test_mass_integrates_constants_and_linears(disk_forms):
    f = disk_forms
    ones = np.ones(f.mesh.n_vertices)
    assert ones @ (f.Mass_full @ ones) == pytest.approx(f.area, rel=1e-13)
    x = f.mesh.vertices[:, 0]
    # odd symmetry of the disk mesh
    assert abs(ones @ (f.Mass_full @ x)) < 1e-12


def test_stiffness_energy_of_linear_function(disk_forms):
    # int A e1 . e1 over the mesh equals the alpha/beta weighted area
    f = disk_forms
    x = f.mesh.vertices[:, 0]
    areas = f.mesh.signed_areas()
    expected = np.sum(areas * f.A_tri[:, 0, 0])
    assert x @ (f.K_full @ x) == pytest.approx(expected, rel=1e-12)


def test_weighted_mass_blocks_for_constant_coefficient(homogeneous_disk_forms):
    f = homogeneous_disk_forms
    assert abs(f.W[0][0] - 2.0 * f.Mass).max() < 1e-14
    assert abs(f.W[0][1]).max() < 1e-14


@given(eta_st)
def test_shifted_matrix_is_hermitian(disk_forms, eta):
    H = shifted_matrix(disk_forms, np.array(eta))
    assert abs(H - H.conj().T).max() < 1e-13


@given(eta_st)
def test_coupling_is_antisymmetric_and_linear(laminate_forms, eta):
    eta = np.array(eta)
    B = coupling(laminate_forms, eta)
    assert abs(B + B.T).max() < 1e-14
    parts = eta[0] * coupling(laminate_forms, [1.0, 0.0]) + eta[1] * coupling(laminate_forms, [0.0, 1.0])
    assert abs(B - parts).max() < 1e-13
    W = weighted_mass(laminate_forms, eta)
    assert abs(weighted_mass(laminate_forms, -eta) - W).max() < 1e-14


def test_constant_trace_space_ties_boundary():
    mesh = generate_cell_mesh(DiskInclusion(0.5), 0.1)
    space = make_space(mesh, CONSTANT_TRACE)
    assert np.all(space.dof[mesh.boundary] == space.master)
    assert space.n_dofs == mesh.n_vertices - len(mesh.boundary) + 1
    x = np.arange(space.n_dofs, dtype=float)
    u = space.prolong(x)
    assert np.array_equal(space.project(u), u)
    assert np.array_equal(space.P @ x, u)


def test_periodic_space_identifies_faces():
    mesh = generate_cell_mesh(PeriodicSquare("disk", 0.3), 0.05)
    space = make_space(mesh, PERIODIC)
    v = mesh.vertices
    left = np.flatnonzero(np.isclose(v[:, 0], 0.0))
    for i in left:
        j = np.flatnonzero(np.isclose(v[:, 0], 1.0) & np.isclose(v[:, 1], v[i, 1]))
        assert space.dof[i] == space.dof[j[0]]
    assert space.master is None


def test_quadrature_rules_agree_on_conforming_mesh():
    field = CoefficientField.two_phase(DiskInclusion(0.6), 1.0, 4.0)
    mesh = generate_cell_mesh(field.geometry, 0.1)
    space = default_space(field.geometry, mesh)
    a = assemble(field, mesh, space)
    b = assemble(field, mesh, space, quadrature="gauss7")
    assert abs(a.K - b.K).max() < 1e-12
    assert abs(a.W[1][1] - b.W[1][1]).max() < 1e-12


def test_unknown_quadrature_rejected(disk_forms):
    with pytest.raises(ArgumentError):
        assemble(disk_forms.field, disk_forms.mesh, disk_forms.space, quadrature="midpoint")
