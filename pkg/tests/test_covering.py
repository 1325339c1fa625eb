import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bloch_hs.covering import (BACKGROUND, DISK_PACK, LAMINATE_BANDS, MicroField, VitaliCovering, evaluate_micro,
                               generate_disk_covering, generate_laminate_covering, refinement_levels)
from bloch_hs.errors import ArgumentError
from bloch_hs.geometry import COATING, CORE, CoefficientField, DiskInclusion, LaminateCell


@pytest.fixture(scope="module")
def small_cover():
    return generate_disk_covering((0, 0, 1, 1), 0.25, 0.02, 0.1, seed=3, grid=256)


def _brute_locate(cov, pts):
    out = np.full(len(pts), -1)
    for k in range(cov.n_cells):
        d = pts - [cov.cx[k], cov.cy[k]]
        if cov.box:
            hit = np.max(np.abs(d), axis=1) <= cov.eps[k] * (1 + 1e-12)
        else:
            hit = np.hypot(d[:, 0], d[:, 1]) <= cov.eps[k] * (1 + 1e-12)
        out[hit & (out < 0)] = k
    return out


def test_frozen_small_covering(small_cover):
    # regression values of the deterministic greedy placement
    assert small_cover.n_cells == 30
    assert small_cover.residual_fraction == pytest.approx(0.09901, abs=5e-6)
    assert small_cover.kind == DISK_PACK and not small_cover.target_missed


def test_covering_invariants(small_cover):
    assert small_cover.overlapping_pairs() == []
    assert len(small_cover.outside_cells()) == 0
    assert small_cover.bookkeeping_error() <= 1e-9
    assert np.all((small_cover.eps >= 0.02 * (1 - 1e-9)) & (small_cover.eps <= 0.25))
    assert small_cover.kappa == pytest.approx(small_cover.eps.max())


@settings(max_examples=12)
@given(st.floats(0.08, 0.3), st.floats(0.06, 0.2), st.sampled_from([128, 192, 256]),
       st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.5, 2.0)))
def test_disk_covering_properties(eps_max, target, grid, box):
    x0, y0, side = box
    cov = generate_disk_covering((x0, y0, x0 + side, y0 + side), eps_max * side, eps_max * side / 8, target, 0, grid)
    assert cov.overlapping_pairs() == []
    assert len(cov.outside_cells()) == 0
    assert cov.bookkeeping_error() <= 1e-9
    assert cov.target_missed == (cov.residual_fraction > target)


def test_covering_is_deterministic():
    a = generate_disk_covering((0, 0, 1, 1), 0.2, 0.01, 0.08, seed=7, grid=256)
    b = generate_disk_covering((0, 0, 1, 1), 0.2, 0.01, 0.08, seed=7, grid=256)
    assert a.to_json() == b.to_json()
    c = generate_disk_covering((0, 0, 1, 1), 0.2, 0.01, 0.08, seed=8, grid=256)
    # the seed is recorded, placement does not depend on it
    assert np.array_equal(a.cx, c.cx) and c.seed == 8


def test_json_round_trip(small_cover):
    back = VitaliCovering.from_json(small_cover.to_json())
    assert back.to_json() == small_cover.to_json()


def test_refinement_levels_reach_target():
    levels = refinement_levels((0.2, 0.1), grid=512)
    for lv, k in zip(levels, (0.2, 0.1)):
        assert lv.kappa == pytest.approx(k, rel=1e-9)
        assert lv.residual_fraction <= 0.05
        assert lv.overlapping_pairs() == []


def test_laminate_covering_tiles_bands():
    cov = generate_laminate_covering((0, 0, 1, 1), 1, [0.25, 0.15, 0.1])
    assert cov.kind == LAMINATE_BANDS and cov.box
    # 2 + 3 + 5 squares of sides 0.5, 0.3, 0.2
    assert cov.n_cells == 10
    assert cov.residual_fraction == pytest.approx(0.03, abs=1e-12)
    assert cov.overlapping_pairs() == []
    assert cov.bookkeeping_error() <= 1e-12
    transposed = generate_laminate_covering((0, 0, 1, 1), 2, [0.25, 0.15, 0.1])
    assert np.allclose(np.sort(transposed.cx), np.sort(cov.cy))


def test_laminate_widths_must_fill_domain():
    with pytest.raises(ArgumentError):
        generate_laminate_covering((0, 0, 1, 1), 1, [0.25, 0.2])


def test_bad_disk_parameters():
    with pytest.raises(ArgumentError):
        generate_disk_covering((0, 0, 1, 1), 0.1, 0.2, 0.1)
    with pytest.raises(ArgumentError):
        generate_disk_covering((0, 0, 1, 1), 0.2, 0.01, 0.7)


@settings(max_examples=10)
@given(st.integers(0, 2 ** 31 - 1))
def test_locate_matches_brute_force(small_cover, seed):
    pts = np.random.default_rng(seed).uniform(0, 1, (400, 2))
    field = MicroField(small_cover, CoefficientField.two_phase(DiskInclusion(0.7), 1.0, 2.0), 1.5)
    assert np.array_equal(field.locate(pts), _brute_locate(small_cover, pts))


def test_laminate_locate_matches_brute_force():
    cov = generate_laminate_covering((0, 0, 1, 1), 2, [0.1, 0.2, 0.2])
    pts = np.random.default_rng(5).uniform(0, 1, (2000, 2))
    field = MicroField(cov, CoefficientField.two_phase(LaminateCell(0.5, 2), 1.0, 2.0), 1.5)
    assert np.array_equal(field.locate(pts), _brute_locate(cov, pts))


def test_micro_field_phases(small_cover):
    cell = CoefficientField.two_phase(DiskInclusion(math.sqrt(0.5)), 1.0, 2.0)
    field = MicroField(small_cover, cell, 10.0 / 7.0)
    k = int(np.argmax(small_cover.eps))
    c = np.array([small_cover.cx[k], small_cover.cy[k]])
    e = small_cover.eps[k]
    pts = np.array([c, c + [0.9 * e, 0.0]])
    assert field.phase_codes(pts).tolist() == [CORE, COATING]
    assert np.allclose(evaluate_micro(field, c), np.eye(2))
    free = np.random.default_rng(0).uniform(0, 1, (3000, 2))
    bg = free[field.locate(free) < 0][0]
    assert field.phase_codes(bg[None])[0] == BACKGROUND
    assert np.allclose(evaluate_micro(field, bg), 10.0 / 7.0 * np.eye(2))


def test_micro_field_cell_mismatch(small_cover):
    with pytest.raises(ArgumentError):
        MicroField(small_cover, CoefficientField.two_phase(LaminateCell(0.5, 1), 1.0, 2.0), 1.0)


def test_background_fraction_matches_residual(small_cover):
    field = MicroField(small_cover, CoefficientField.two_phase(DiskInclusion(0.7), 1.0, 2.0), 1.0)
    pts = np.random.default_rng(11).uniform(0, 1, (200000, 2))
    frac = np.mean(field.locate(pts) < 0)
    assert frac == pytest.approx(small_cover.residual_fraction, abs=4 * math.sqrt(0.1 * 0.9 / 200000))


def test_equal_bands_form_a_periodic_laminate():
    cov = generate_laminate_covering((0, 0, 1, 1), 1, [0.125] * 4)
    assert cov.n_cells == 16 and cov.residual_fraction == pytest.approx(0.0, abs=1e-14)
    field = MicroField(cov, CoefficientField.two_phase(LaminateCell(0.5, 1), 1.0, 2.0), 1.5)
    pts = np.random.default_rng(3).uniform(0, 1, (4000, 2))
    for shift in ([0.25, 0.0], [0.0, 0.25], [0.5, 0.75]):
        moved = (pts + shift) % 1.0
        assert np.array_equal(field.phase_codes(pts), field.phase_codes(moved))
    assert np.all(field.locate(pts) >= 0)


def test_halving_eps_max_halves_kappa():
    a = generate_disk_covering((0, 0, 1, 1), 0.2, 0.005, 0.1, grid=256)
    b = generate_disk_covering((0, 0, 1, 1), 0.1, 0.0025, 0.1, grid=256)
    assert b.kappa <= 0.5 * a.kappa * (1 + 1e-12)
    assert b.kappa >= 0.25 * a.kappa
