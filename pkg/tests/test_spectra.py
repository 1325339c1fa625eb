import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bloch_hs.errors import ArgumentError
from bloch_hs.fem import shifted_matrix
from bloch_hs.spectra import (fd_derivatives_lambda1, rayleigh_quotient, solve_ground_state, solve_lowest_band,
                              sweep_lambda1)

eta_st = st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))


def _mean_tensor(forms):
    areas = forms.mesh.signed_areas()
    return np.einsum("m,mkl->kl", areas, forms.A_tri) / forms.area


def test_ground_energy_vanishes_at_zero(disk_forms):
    gs = solve_ground_state(disk_forms, [0.0, 0.0])
    scale = disk_forms.K.diagonal().sum() / disk_forms.n_dofs
    assert abs(gs.lambda1) <= 1e-10 * scale
    assert gs.normalization == "boundary"
    # the zero-momentum ground state is the constant |omega_h|^{-1/2}
    assert np.allclose(gs.phi, disk_forms.area ** -0.5, atol=1e-8)


@settings(max_examples=10)
@given(eta_st)
def test_periodic_plane_wave_is_exact(homogeneous_periodic_forms, eta):
    # constant coefficient 1.5 on a periodic cell: lambda_1 = 1.5 |eta|^2 with a constant mode
    eta = np.array(eta)
    gs = solve_ground_state(homogeneous_periodic_forms, eta)
    assert gs.lambda1 == pytest.approx(1.5 * eta @ eta, abs=1e-10)
    assert gs.normalization == "mean"
    assert np.allclose(gs.phi, 1.0, atol=1e-7)


@settings(max_examples=10)
@given(eta_st)
def test_ground_energy_bracketed(disk_forms, eta):
    eta = np.array(eta)
    gs = solve_ground_state(disk_forms, eta)
    upper = float(eta @ _mean_tensor(disk_forms) @ eta)
    assert -1e-12 <= gs.lambda1 <= upper + 1e-12
    assert gs.residual < 1e-9


@settings(max_examples=10)
@given(eta_st)
def test_ground_energy_is_even(disk_forms, eta):
    eta = np.array(eta)
    a = solve_ground_state(disk_forms, eta).lambda1
    b = solve_ground_state(disk_forms, -eta).lambda1
    assert abs(a - b) <= 1e-9 * max(1.0, a)


def test_rayleigh_quotient_matches_eigenvalue(disk_forms):
    eta = np.array([0.3, -0.2])
    gs = solve_ground_state(disk_forms, eta)
    assert rayleigh_quotient(disk_forms, eta, gs.phi) == pytest.approx(gs.lambda1, rel=1e-10)


def test_ground_state_is_the_dense_minimum(laminate_forms):
    eta = np.array([0.25, 0.1])
    import scipy.linalg as la
    H = shifted_matrix(laminate_forms, eta).toarray()
    lam = la.eigh(H, laminate_forms.Mass.toarray(), eigvals_only=True)
    bands = solve_lowest_band(laminate_forms, eta, m=3)
    assert [b[0] for b in bands] == pytest.approx(lam[:3], rel=1e-9, abs=1e-12)
    X = np.column_stack([b[1] for b in bands])
    G = X.conj().T @ (laminate_forms.Mass @ X)
    assert np.allclose(G, np.eye(3), atol=1e-8)


def test_sweep_table_and_lipschitz(laminate_forms):
    etas = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.2], [-0.2, 0.1]])
    table = sweep_lambda1(laminate_forms, etas, eta_max=0.5)
    assert table.lambdas[0] == pytest.approx(0.0, abs=1e-10)
    q = table.lipschitz_quotients()
    assert len(q) == 12 and np.all(q < 2 * 2.0 * 0.5)
    text = table.to_csv("tag")
    assert text.splitlines()[0] == "# tag"
    assert text.splitlines()[1] == "eta_1,eta_2,lambda1,residual,iterations"
    with pytest.raises(ArgumentError):
        sweep_lambda1(laminate_forms, [[1.0, 0.0]], eta_max=0.5)


def test_fd_fit_recovers_quadratic_coefficient(homogeneous_periodic_forms):
    fit = fd_derivatives_lambda1(homogeneous_periodic_forms, [1.0, 1.0], (0.05, 0.1, 0.15, 0.2))
    assert fit.q2 == pytest.approx(1.5, rel=1e-9)
    assert abs(fit.q4) < 1e-6
    assert abs(fit.first_order) < 1e-8


def test_fd_fit_needs_four_steps(disk_forms):
    with pytest.raises(ArgumentError):
        fd_derivatives_lambda1(disk_forms, [1.0, 0.0], (0.1, 0.2, 0.3))


def test_bad_tolerance_rejected(disk_forms):
    with pytest.raises(ArgumentError):
        solve_ground_state(disk_forms, [0.1, 0.0], tol=0.0)
