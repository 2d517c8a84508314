from dataclasses import replace

import numpy as np
import pytest

from Cocycle_Thermo.errors import DegenerateEigenfunctionError, DimensionError, SpectralGapError
from Cocycle_Thermo.fixtures import fix_constant_diag, fix_dg, fix_sc, fix_ty, perturbed_sc
from Cocycle_Thermo.pressure import pressure_estimate
from Cocycle_Thermo.symbolic import SymbolPotential, full_shift, golden_mean_shift
from Cocycle_Thermo.transfer import (
    apply_Lt,
    build_grid,
    concentration_diagnostic,
    decay_profile,
    h_bounds_check,
    invariant_skew_measure,
    operator_geometry,
    ruelle_g,
    scan_t_max,
    spectral_triple,
)

GOLDEN = np.log((1 + np.sqrt(5)) / 2)


@pytest.fixture(scope="module")
def grid64():
    return build_grid(2, 64)


def test_uniform_g_on_full_shift():
    g = ruelle_g(full_shift(2))
    assert g.depth == 1
    np.testing.assert_allclose(g.values, [0.5, 0.5], atol=1e-13)
    assert g.pressure_psi == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("psi_factory", [
    lambda s: SymbolPotential.zero(s),
    lambda s: SymbolPotential.from_symbol_weights(s, [1.0, 2.0]),
    lambda s: SymbolPotential.from_table(s, 2, {(0, 0): 0.3, (0, 1): -0.2, (1, 0): 0.1, (1, 1): 0.0}),
])
def test_g_rows_sum_to_one_on_golden_mean(psi_factory):
    spec = golden_mean_shift()
    g = ruelle_g(spec, psi_factory(spec))
    np.testing.assert_allclose(g.row_sums(), 1.0, atol=1e-10)
    assert np.all(g.values[g.values != 0] > 0)


def test_g_pressure_matches_entropy():
    assert ruelle_g(golden_mean_shift()).pressure_psi == pytest.approx(GOLDEN, abs=1e-12)


def test_build_grid_validation():
    with pytest.raises(DimensionError):
        build_grid(1, 64)
    with pytest.raises(DimensionError):
        build_grid(2, 8)
    with pytest.raises(DimensionError):
        build_grid(2, 64, m_grid=0)


def test_three_dimensional_grid_points_are_canonical_unit_vectors():
    grid = build_grid(3, 128)
    np.testing.assert_allclose(np.linalg.norm(grid.points, axis=1), 1.0)
    first = grid.points[np.arange(128), np.argmax(np.abs(grid.points) > 1e-14, axis=1)]
    assert np.all(first > 0)
    assert grid.nearest(-grid.points[5]) == 5


@pytest.mark.parametrize("factory", [fix_sc, fix_dg, fix_ty])
def test_operator_at_zero_preserves_constants(factory, grid64):
    c = factory()
    g = ruelle_g(c.shift)
    geometry = operator_geometry(c, g, grid64)
    ones = np.ones(geometry.space.size)
    np.testing.assert_allclose(apply_Lt(ones, c, g, 0.0, grid64), ones, atol=1e-12)
    with pytest.raises(DimensionError):
        apply_Lt(np.ones(7), c, g, 0.0, grid64)


def test_triple_at_zero_is_trivial(grid64):
    c = fix_ty()
    triple = spectral_triple(c, ruelle_g(c.shift), 0.0, grid64)
    assert triple.rho == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(triple.h, 1.0, atol=1e-8)
    assert triple.nu.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("t", [-1.0, 0.5, 1.0, 2.0])
def test_scalar_cocycle_log_rho_plus_potential_pressure(t, grid64):
    c = fix_sc()
    g = ruelle_g(c.shift)
    triple = spectral_triple(c, g, t, grid64)
    assert triple.log_rho + g.pressure_psi == pytest.approx(np.log(2.0 ** t + 3.0 ** t), abs=1e-10)
    assert triple.spectral_gap == pytest.approx(1.0)


def test_triple_row_fields(grid64):
    c = fix_sc()
    row = spectral_triple(c, ruelle_g(c.shift), 1.0, grid64).row()
    assert set(row) == {"t", "rho", "log_rho", "gap", "iterations", "h_min", "h_max"}
    assert row["rho"] == pytest.approx(2.5)


def test_lagged_cocycle_is_rejected(grid64):
    c = perturbed_sc(0.1, lag=1)
    with pytest.raises(DimensionError):
        spectral_triple(c, ruelle_g(c.shift), 1.0, grid64)


def test_gap_below_floor_carries_partial_triple(grid64):
    c = fix_sc()
    with pytest.raises(SpectralGapError) as err:
        spectral_triple(c, ruelle_g(c.shift), 1.0, grid64, gap_floor=1.5)
    partial = err.value.partial
    assert partial is not None
    assert partial.rho == pytest.approx(2.5)
    assert "partial" not in err.value.to_dict()


def test_non_convergence_raises_with_partial(grid64):
    c = fix_ty()
    with pytest.raises(SpectralGapError) as err:
        spectral_triple(c, ruelle_g(c.shift), 0.5, grid64, max_iter=1)
    assert err.value.partial.converged is False


def test_h_bounds(grid64):
    c = fix_ty()
    triple = spectral_triple(c, ruelle_g(c.shift), 0.5, grid64)
    h_min, h_max = h_bounds_check(triple)
    assert 0 < h_min <= h_max
    broken = replace(triple, h=np.concatenate([[0.0], triple.h[1:]]))
    with pytest.raises(DegenerateEigenfunctionError):
        h_bounds_check(broken)


def test_decay_and_skew_measure(grid64):
    c = fix_ty()
    triple = spectral_triple(c, ruelle_g(c.shift), 0.5, grid64)
    f = np.linspace(0.0, 1.0, triple.h.size)
    profile = decay_profile(triple, f, 30)
    assert profile.errors[-1] < profile.errors[0]
    assert profile.rate < 1.0
    skew = invariant_skew_measure(triple)
    assert skew.mass.sum() == pytest.approx(1.0, abs=1e-8)
    assert skew.defect < 1e-6


def test_concentration_on_constant_diagonal(grid64):
    c = fix_constant_diag()
    triple = spectral_triple(c, ruelle_g(c.shift), 0.0, grid64)
    report = concentration_diagnostic(triple, c, n_slow=30, eps=0.05)
    assert report.reliable
    assert report.fraction > 0.9


def test_concentration_unreliable_for_conformal_cocycle(grid64):
    c = fix_sc()
    triple = spectral_triple(c, ruelle_g(c.shift), 1.0, grid64)
    report = concentration_diagnostic(triple, c)
    assert not report.reliable
    assert report.fraction is None
    with pytest.raises(ValueError):
        concentration_diagnostic(triple, c, n_push=-1)


def test_scan_t_max_for_scalar_cocycle(grid64):
    c = fix_sc()
    scan = scan_t_max(c, ruelle_g(c.shift), grid64, [-1.0, 0.0, 0.5, 1.0])
    assert scan.t_max == pytest.approx(1.0)
    assert [row["t"] for row in scan.rows] == [0.0, 0.5, -1.0, 1.0]
    assert all(row["ok"] for row in scan.rows)


@pytest.mark.slow
@pytest.mark.parametrize("factory", [fix_sc, fix_ty])
def test_log_rho_matches_cylinder_pressure(factory):
    c = factory()
    g = ruelle_g(c.shift)
    grid = build_grid(2, 512)
    geometry = operator_geometry(c, g, grid)
    for t in (-0.2, 0.0, 0.2, 0.5):
        triple = spectral_triple(c, g, t, grid, geometry=geometry)
        assert triple.log_rho + g.pressure_psi == pytest.approx(pressure_estimate(c, t, 12).estimate, abs=5e-2)


@pytest.mark.slow
def test_constant_diagonal_concentrates_on_fine_grid():
    c = fix_constant_diag()
    triple = spectral_triple(c, ruelle_g(c.shift), 0.0, build_grid(2, 2048))
    assert concentration_diagnostic(triple, c, eps=0.05).fraction >= 0.99


@pytest.fixture(scope="module")
def typical_triple_1024():
    c = fix_ty()
    g = ruelle_g(c.shift)
    return c, g, spectral_triple(c, g, 0.0, build_grid(2, 1024))


@pytest.mark.slow
def test_pushed_concentration_grows_with_prefix_length(typical_triple_1024):
    c, g, triple = typical_triple_1024
    fractions = [concentration_diagnostic(triple, c, g=g, n_push=n).fraction for n in (0, 4, 8, 10)]
    assert all(b >= a - 1e-9 for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] > fractions[0]


@pytest.mark.slow
def test_typical_concentration_regression_value(typical_triple_1024):
    # FIX-TY 의 Lyapunov 간격이 작아 (λ₁ − λ₂ ≈ 0.045) 0.95 에는 한참 못 미친다
    c, g, triple = typical_triple_1024
    report = concentration_diagnostic(triple, c, g=g)
    assert report.reliable
    assert report.n_push == 8
    assert report.fraction == pytest.approx(0.107, abs=0.03)
