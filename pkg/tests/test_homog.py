import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bloch_hs.errors import ArgumentError
from bloch_hs.fem import assemble, default_space
from bloch_hs.geometry import (CoefficientField, ConfocalEllipse, DiskInclusion, LaminateCell, PeriodicSquare,
                               hs_elliptical_residual, hs_elliptical_rhs, hs_spherical_gamma, laminate_means)
from bloch_hs.homog import (HomogenizedTensor, eigvec_first_derivative_check, equivalence_check,
                            homogenized_cell_integral, homogenized_from_hessian, interior_residual,
                            periodic_homogenized, solve_corrector_hs, solve_correctors)
from bloch_hs.mesh import generate_cell_mesh


def _tensor(forms):
    return homogenized_cell_integral(solve_correctors(forms, np.eye(2)))


def test_homogeneous_cell_returns_its_coefficient(homogeneous_disk_forms):
    M = _tensor(homogeneous_disk_forms)
    assert np.allclose(M.entries, 2.0 * np.eye(2), atol=1e-12)
    c = solve_correctors(homogeneous_disk_forms, [[1.0, 0.0]])[0]
    assert np.max(np.abs(c.fluctuation)) < 1e-12


def test_laminate_is_exact_in_p1(laminate_forms):
    # the corrector is piecewise linear and the mesh conforms to the slab
    M = _tensor(laminate_forms)
    assert np.allclose(M.entries, np.diag([4.0 / 3.0, 1.5]), atol=1e-12)


@settings(max_examples=8)
@given(st.floats(0.5, 5.0), st.floats(0.5, 5.0), st.sampled_from([0.25, 0.4, 0.5, 0.75]), st.sampled_from([1, 2]))
def test_laminate_means_property(a, b, theta, axis):
    field = CoefficientField.two_phase(LaminateCell(theta, axis), a, b)
    mesh = generate_cell_mesh(field.geometry, 0.1)
    M = _tensor(assemble(field, mesh, default_space(field.geometry, mesh))).entries
    harm, arith = laminate_means(a, b, theta)
    expected = np.diag([harm, arith] if axis == 1 else [arith, harm])
    assert np.allclose(M, expected, rtol=1e-10, atol=1e-12)


def test_periodic_slab_matches_laminate_means():
    field = CoefficientField.two_phase(PeriodicSquare("slab", 0.25, 2), 1.0, 3.0)
    M = periodic_homogenized(field, generate_cell_mesh(field.geometry, 0.05)).entries
    harm, arith = laminate_means(1.0, 3.0, 0.5)
    assert np.allclose(M, np.diag([arith, harm]), atol=1e-11)


def test_disk_cell_near_spherical_value(disk_forms):
    M = _tensor(disk_forms)
    gamma = hs_spherical_gamma(1.0, 2.0, 0.5)
    assert np.allclose(M.entries, gamma * np.eye(2), rtol=5e-3, atol=1e-12 + 5e-3 * gamma)
    assert M.details["gap"] < 1e-8


def test_cell_integral_and_hessian_agree(disk_forms):
    a = _tensor(disk_forms).entries
    b = homogenized_from_hessian(disk_forms).entries
    assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))


def test_hessian_detects_off_diagonal():
    A = np.array([[2.0, 0.6], [0.6, 1.0]])
    field = CoefficientField(DiskInclusion(0.5), A, A)
    mesh = generate_cell_mesh(field.geometry, 0.1)
    forms = assemble(field, mesh, default_space(field.geometry, mesh))
    M = homogenized_from_hessian(forms).entries
    assert np.allclose(M, A, rtol=1e-6, atol=1e-7)


def test_ellipse_sum_relation():
    g = ConfocalEllipse(0.3, 1.0, (0.0, 0.4))
    field = CoefficientField.two_phase(g, 1.0, 2.0)
    mesh = generate_cell_mesh(g, 0.04)
    M = _tensor(assemble(field, mesh, default_space(g, mesh))).entries
    assert abs(M[0, 1]) < 1e-10
    rel = abs(hs_elliptical_residual(np.diag(M), 1.0, 2.0, g.theta)) / hs_elliptical_rhs(1.0, 2.0, g.theta)
    assert rel < 0.02
    assert M[0, 0] < M[1, 1]


def test_corrector_solves_the_cell_problem(disk_forms):
    c = solve_corrector_hs(disk_forms.field, disk_forms.mesh, [0.6, 0.8], forms=disk_forms)
    assert interior_residual(c) < 1e-12
    b = disk_forms.mesh.boundary
    assert np.allclose(c.w[b], disk_forms.mesh.vertices[b] @ [0.6, 0.8] + c.fluctuation[b])
    assert np.max(np.abs(c.fluctuation[b])) == 0.0


def test_equivalence_flux_and_negative_control(disk_forms):
    c = solve_correctors(disk_forms, np.eye(2))[0]
    gamma = hs_spherical_gamma(1.0, 2.0, 0.5)
    good = equivalence_check(c, gamma * np.eye(2))
    bad = equivalence_check(c, 2.0 * np.eye(2))
    assert good["relative_l2_error"] < 0.05
    assert bad["relative_l2_error"] > 10 * good["relative_l2_error"]
    assert abs(good["total_flux"]) < 1e-10


def test_equivalence_rejects_indefinite(disk_forms):
    c = solve_correctors(disk_forms, np.eye(2))[0]
    with pytest.raises(ArgumentError):
        equivalence_check(c, np.diag([1.0, -1.0]))


def test_first_derivative_identity(disk_forms):
    corr = solve_correctors(disk_forms, np.eye(2))
    out = eigvec_first_derivative_check(disk_forms, corr, k=0)
    r = np.asarray(out["ratios"])
    assert np.all((r > 3) & (r < 5))
    assert out["real_part_norm"] < 1e-6


def test_tensor_json_round_trip():
    M = HomogenizedTensor(np.array([[1.0, 0.1], [0.1, 2.0]]), "CellIntegral")
    back = HomogenizedTensor.from_dict(json.loads(M.to_json()))
    assert np.array_equal(back.entries, M.entries) and back.provenance == M.provenance
    assert HomogenizedTensor.isotropic(math.e).entries[1, 1] == math.e
