"""The twelve acceptance criteria as callable checks.

Each ``criterion_k(settings)`` returns a :class:`CriterionResult`. ``Settings.full()``
uses the stated resolutions; ``Settings.fast()`` coarsens meshes and grids while
keeping every threshold. Both ``verify-all`` and the test-suite call these.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .bloch import BlochCell, bessel_check, bump, fourier_limit_check, taylor_gap, weak_average_check, xi_grid
from .covering import MicroField, generate_laminate_covering, refinement_levels
from .dispersion import BurnettSolver, fan_directions
from .dns import convergence_study
from .fem import assemble, default_space
from .geometry import (CoefficientField, ConfocalEllipse, DiskInclusion, LaminateCell, hs_elliptical_residual,
                       hs_elliptical_rhs, hs_spherical_gamma, laminate_means)
from .homog import (equivalence_check, eigvec_first_derivative_check, homogenized_cell_integral,
                    homogenized_from_hessian, solve_correctors)
from .mesh import generate_cell_mesh
from .spectra import fd_derivatives_lambda1, solve_ground_state

ALPHA, BETA = 1.0, 2.0
R_HALF = math.sqrt(0.5)
KAPPAS = (0.2, 0.1, 0.05)


@dataclass
class Settings:
    """Resolutions used by the checks."""

    name: str = "full"
    h_disk: float = 0.02
    h_laminate: float = 0.05
    h_ground: float = 0.04
    h_eigvec: float = 0.04
    h_burnett: float = 0.02
    h_equivalence: tuple = (0.04, 0.02, 0.01)
    h_ellipse: float = 0.02
    h_bloch: float = 0.1
    xi_points: int = 9
    h_weak: float = 0.05
    dns_per_eps: float = 8.0
    covering_grid: int = 1024
    kappas: tuple = KAPPAS
    eps_ratio: float = 40.0
    residual_target: float = 0.05
    fourth_steps: tuple = (0.05, 0.1, 0.15, 0.2)

    @classmethod
    def full(cls) -> "Settings":
        return cls()

    @classmethod
    def fast(cls) -> "Settings":
        return cls(name="fast", h_disk=0.04, h_laminate=0.1, h_burnett=0.04, h_equivalence=(0.04, 0.02),
                   h_ellipse=0.04, h_bloch=0.14, xi_points=5, h_weak=0.1, dns_per_eps=4.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict
    seconds: float
    limit: Optional[float] = None
    checks: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lim = f" / limit {self.limit:.0f} s" if self.limit else ""
        failed = [k for k, v in self.checks.items() if not v]
        why = f"  failed: {', '.join(failed)}" if failed else ""
        return f"criterion {self.number:2d} {status}  {self.title}  ({self.seconds:.1f} s{lim}){why}"

    def to_dict(self) -> dict:
        return asdict(self)


def _result(number, title, checks: dict, metrics: dict, t0: float, limit=None) -> CriterionResult:
    sec = time.perf_counter() - t0
    if limit is not None:
        checks = dict(checks, runtime=sec < limit)
    passed = all(bool(v) for v in checks.values())
    return CriterionResult(number, title, passed, metrics, sec, limit, {k: bool(v) for k, v in checks.items()})


def _disk_field():
    return CoefficientField.two_phase(DiskInclusion(R_HALF), ALPHA, BETA)


def _forms(field, h):
    mesh = generate_cell_mesh(field.geometry, h)
    return assemble(field, mesh, default_space(field.geometry, mesh))


def _rel(M, ref) -> float:
    return float(np.max(np.abs(np.asarray(M) - ref)) / np.max(np.abs(ref)))


def criterion_1(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    field = _disk_field()
    gamma = hs_spherical_gamma(ALPHA, BETA, 0.5)
    forms = _forms(field, s.h_disk)
    M_int = homogenized_cell_integral(solve_correctors(forms, np.eye(2))).entries
    M_hes = homogenized_from_hessian(forms).entries
    ref = gamma * np.eye(2)
    e_int, e_hes = _rel(M_int, ref), _rel(M_hes, ref)
    agree = _rel(M_hes, M_int)
    return _result(1, "spherical inclusion, cell integral and half Hessian",
                   {"cell_integral_1pct": e_int <= 0.01, "hessian_1pct": e_hes <= 0.01, "routes_0.5pct": agree <= 0.005},
                   {"gamma": gamma, "cell_integral": M_int.tolist(), "hessian": M_hes.tolist(),
                    "cell_integral_error": e_int, "hessian_error": e_hes, "route_gap": agree}, t0, 60.0)


def criterion_2(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    field = CoefficientField.two_phase(LaminateCell(0.5, 1), ALPHA, BETA)
    harm, arith = laminate_means(ALPHA, BETA, 0.5)
    ref = np.diag([harm, arith])
    forms = _forms(field, s.h_laminate)
    M = homogenized_cell_integral(solve_correctors(forms, np.eye(2))).entries
    H = homogenized_from_hessian(forms).entries
    off = abs(M[0, 1]) / np.linalg.norm(M)
    diag_err = float(np.max(np.abs(np.diag(M) - np.diag(ref)) / np.diag(ref)))
    hes_err = float(np.max(np.abs(np.diag(H) - np.diag(ref)) / np.diag(ref)))
    return _result(2, "laminate, harmonic and arithmetic means",
                   {"diagonal_1pct": diag_err <= 0.01, "off_diagonal": off <= 1e-6, "hessian_1pct": hes_err <= 0.01},
                   {"reference": ref.tolist(), "cell_integral": M.tolist(), "hessian": H.tolist(),
                    "diagonal_error": diag_err, "off_diagonal_ratio": off, "hessian_error": hes_err}, t0, 30.0)


def criterion_3(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    forms = _forms(_disk_field(), s.h_ground)
    tol = 1e-12
    scale = float(forms.K.diagonal().sum() / forms.n_dofs)
    lam0 = solve_ground_state(forms, (0.0, 0.0), tol).lambda1
    t = 0.01
    grad = [(solve_ground_state(forms, t * e, tol).lambda1 - solve_ground_state(forms, -t * e, tol).lambda1) / (2 * t)
            for e in np.eye(2)]
    fan = 0.3 * fan_directions(16)
    lam = np.array([solve_ground_state(forms, eta, tol).lambda1 for eta in fan])
    even = np.abs(lam - np.roll(lam, 8)) / np.maximum(1.0, lam)
    return _result(3, "ground state at zero momentum and evenness",
                   {"lambda_zero": abs(lam0) <= 1e-10 * scale, "gradient": max(map(abs, grad)) <= 1e-6,
                    "evenness": float(even.max()) <= 1e-9},
                   {"lambda1_zero": lam0, "scale": scale, "gradient": grad, "evenness_max": float(even.max()),
                    "fan_lambda1": lam.tolist()}, t0)


def criterion_4(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    forms = _forms(_disk_field(), s.h_eigvec)
    corr = solve_correctors(forms, np.eye(2))
    out = [eigvec_first_derivative_check(forms, corr, k) for k in (0, 1)]
    ratios = [r for o in out for r in o["ratios"]]
    real = max(o["real_part_norm"] for o in out)
    return _result(4, "first eigenvector derivative equals i c (w - y)",
                   {"ratio_in_3_5": all(3.0 <= r <= 5.0 for r in ratios), "real_part": real <= 1e-6},
                   {"errors": [o["errors"] for o in out], "ratios": ratios, "real_part_norm": real,
                    "richardson_error": [o["richardson_error"] for o in out],
                    "target_norm": [o["target_norm"] for o in out]}, t0)


def criterion_5(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    forms = _forms(_disk_field(), s.h_burnett)
    solver = BurnettSolver(forms)
    dirs = fan_directions(16)
    states = [solver.state(e) for e in dirs]
    d = np.array([st.d for st in states])
    scale = float(np.max(np.abs(d)))
    fd = [fd_derivatives_lambda1(forms, e, s.fourth_steps) for e in np.eye(2)]
    gaps = [abs(states[k].d - f.q4) / abs(f.q4) for k, f in zip((0, 4), fd)]
    iso = abs(states[0].d - states[4].d) / abs(states[0].d)
    return _result(5, "fourth-order coefficient: sign, oracle and isotropy",
                   {"nonpositive": float(d.max()) <= 1e-10 * scale, "oracle_2pct": max(gaps) <= 0.02, "isotropy_1pct": iso <= 0.01},
                   {"d": d.tolist(), "d_discrete": [st.d_discrete for st in states], "q4": [f.q4 for f in fd],
                    "relative_gap": gaps, "isotropy": iso}, t0, 120.0)


def criterion_6(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    field = _disk_field()
    gamma = hs_spherical_gamma(ALPHA, BETA, 0.5)
    errs, ctrl = [], []
    for h in s.h_equivalence:
        forms = _forms(field, h)
        w = solve_correctors(forms, [np.array([1.0, 0.0])])[0]
        errs.append(equivalence_check(w, gamma * np.eye(2))["relative_l2_error"])
        ctrl.append(equivalence_check(w, BETA * np.eye(2))["relative_l2_error"])
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    return _result(6, "equivalence: boundary flux of the corrector",
                   {"decreasing": dec, "finest_2pct": errs[-1] <= 0.02,
                    "control_10x": all(c >= 10 * e for c, e in zip(ctrl, errs))},
                   {"h": list(s.h_equivalence), "relative_error": errs, "control_error": ctrl}, t0)


def criterion_7(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    geom = ConfocalEllipse(0.3, 1.0, (0.0, 0.4))
    field = CoefficientField.two_phase(geom, ALPHA, BETA)
    M = homogenized_cell_integral(solve_correctors(_forms(field, s.h_ellipse), np.eye(2))).entries
    rhs = hs_elliptical_rhs(ALPHA, BETA, geom.theta)
    res = hs_elliptical_residual(np.diag(M), ALPHA, BETA, geom.theta)
    return _result(7, "confocal elliptical cell, sum relation",
                   {"relation_2pct": abs(res) <= 0.02 * abs(rhs)},
                   {"tensor": M.tolist(), "theta": geom.theta, "rhs": rhs, "residual": res,
                    "relative_residual": abs(res) / abs(rhs)}, t0)


def _bloch_setup(s: Settings):
    field = _disk_field()
    cell = BlochCell(field, h=s.h_bloch)
    gamma = hs_spherical_gamma(ALPHA, BETA, 0.5)
    covs = refinement_levels(s.kappas, s.residual_target, s.eps_ratio, s.covering_grid)
    return cell, [MicroField(c, field, gamma) for c in covs]


def criterion_8(s: Settings, setup=None) -> CriterionResult:
    t0 = time.perf_counter()
    cell, fields = setup if setup is not None else _bloch_setup(s)
    g = bump()
    xi = xi_grid(4.0, s.xi_points)
    rows = fourier_limit_check(g, fields, cell, xi)
    e = [r["max_error"] for r in rows]
    ratio = [r["bound_ratio"] for r in rows]
    top = rows[-1]["max_reference"]
    gap = taylor_gap(g, fields[-1], cell, xi)
    return _result(8, "first Bloch transform tends to the Fourier transform",
                   {"decreasing_10pct": all(b <= 1.1 * a for a, b in zip(e, e[1:])),
                    "final_5pct": e[-1] <= 0.05 * top, "bound_ratio": max(ratio) <= 1.0},
                   {"kappa": [r["kappa"] for r in rows], "max_error": e, "bound_ratio": ratio,
                    "max_reference": top, "zero_error": [r["zero_error"] for r in rows],
                    "taylor_gap_constant": gap["constant"]}, t0, 120.0)


def sine_product(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def criterion_9(s: Settings, setup=None) -> CriterionResult:
    t0 = time.perf_counter()
    cell, fields = setup if setup is not None else _bloch_setup(s)
    out = [bessel_check(sine_product, f, cell) for f in fields]
    c = [o["constant"] for o in out]
    return _result(9, "Bessel constant stable across levels",
                   {"factor_2": max(c) <= 2 * min(c)},
                   {"constant": c, "box": [o["box"] for o in out], "n_xi": [o["n_xi"] for o in out],
                    "plancherel_limit": (2 * math.pi) ** 2 / cell.forms.area}, t0)


def half_core(y):
    """Indicator of the right half of the core, ``|y| <= R`` and ``y_1 >= 0``."""
    return ((np.hypot(y[:, 0], y[:, 1]) <= R_HALF + 1e-12) & (y[:, 0] >= 0)).astype(float)


def criterion_10(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    mesh = generate_cell_mesh(DiskInclusion(R_HALF), s.h_weak)
    covs = refinement_levels(s.kappas, s.residual_target, s.eps_ratio, s.covering_grid)
    tests = [(lambda x: x[:, 0], 1.0), (lambda x: x[:, 0] + 2 * x[:, 1], math.sqrt(5.0))]
    rows = weak_average_check(half_core, mesh, covs, tests, cell_area=math.pi)
    within = all(r["error"] <= r["bound_stated"] for r in rows)
    dec = True
    for j in range(len(tests)):
        e = [r["error"] for r in rows if r["test"] == j]
        dec &= all(b < a for a, b in zip(e, e[1:]))
    return _result(10, "weak limit of rescaled cell functions",
                   {"within_bound": within, "decreasing": dec},
                   {"rows": rows}, t0)


def criterion_11(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    field = _disk_field()
    M = homogenized_cell_integral(solve_correctors(_forms(field, s.h_disk), np.eye(2)))
    covs = refinement_levels(s.kappas, s.residual_target, s.eps_ratio, s.covering_grid)
    study = convergence_study(field, covs, M, 1.0, s.dns_per_eps)
    l2 = [r.l2_err for r in study.rows]
    fl = [r.flux_err for r in study.rows]
    strictly = lambda v: all(b < a for a, b in zip(v, v[1:]))  # noqa: E731
    return _result(11, "heterogeneous solutions approach the homogenized one",
                   {"l2_decreasing": strictly(l2), "finest_10pct": l2[-1] <= 0.10, "flux_decreasing": strictly(fl),
                    "finest_residual": study.rows[-1].residual <= 0.05},
                   {"kappa": [r.kappa for r in study.rows], "residual": [r.residual for r in study.rows],
                    "l2_err": l2, "flux_err": fl, "strong_flux_err": [r.strong_flux_err for r in study.rows],
                    "dofs": [r.dofs for r in study.rows], "M": M.entries.tolist()}, t0, 300.0)


def criterion_12(s: Settings) -> CriterionResult:
    t0 = time.perf_counter()
    covs = refinement_levels(s.kappas, s.residual_target, s.eps_ratio, s.covering_grid, seed=7)
    covs.append(generate_laminate_covering((0, 0, 1, 1), 1, [0.25, 0.15, 0.1], seed=7))
    overlaps = sum(len(c.overlapping_pairs()) for c in covs)
    outside = sum(len(c.outside_cells()) for c in covs)
    book = max(c.bookkeeping_error() for c in covs)
    again = refinement_levels(s.kappas, s.residual_target, s.eps_ratio, s.covering_grid, seed=7)
    same = all(a.to_json() == b.to_json() for a, b in zip(covs, again))
    kap = [c.kappa for c in covs[:len(s.kappas)]]
    return _result(12, "covering invariants",
                   {"disjoint": overlaps == 0, "inside": outside == 0, "bookkeeping": book <= 1e-9,
                    "deterministic": same, "kappa_decreasing": all(b < a for a, b in zip(kap, kap[1:]))},
                   {"n_cells": [c.n_cells for c in covs], "residual": [c.residual_fraction for c in covs],
                    "bookkeeping_error": book, "kappa": kap}, t0)


CRITERIA: dict = {k: globals()[f"criterion_{k}"] for k in range(1, 13)}


def run_all(settings: Settings, only=None, report: Optional[Callable] = None) -> list:
    """Run the criteria in order; ``report`` receives each result as it finishes."""
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        res = fn(settings)
        out.append(res)
        if report is not None:
            report(res)
    return out
