import numpy as np
import pytest

from Cocycle_Thermo.cocycle import build_cocycle, exterior_power
from Cocycle_Thermo.errors import DimensionError
from Cocycle_Thermo.fixtures import fix_dg, fix_sc, fix_ty, rotation
from Cocycle_Thermo.symbolic import full_shift
from Cocycle_Thermo.typicality import check_pinching, check_twisting, is_one_typical, is_typical


def test_pinching_at_fixed_points():
    assert check_pinching(fix_ty(), (0,)).holds
    rot = check_pinching(fix_ty(), (1,))
    assert not rot.holds and rot.reason == "complex eigenvalues"
    scalar = check_pinching(fix_sc(), (0,))
    assert not scalar.holds and "separated" in scalar.reason


def test_pinching_basis_is_ordered_by_modulus():
    result = check_pinching(fix_dg(), (1,))
    assert result.moduli == pytest.approx([2.0, 1.0])
    np.testing.assert_allclose(np.abs(result.basis[:, 0]), [0.0, 1.0], atol=1e-14)


def test_twisting_of_fix_ty():
    result = check_twisting(fix_ty(), (0,), (1,), 1)
    assert result.holds
    assert 0.0 < result.margin <= 1.0


def test_twisting_fails_for_diagonal_cocycle():
    result = check_twisting(fix_dg(), (0,), (1,), 1)
    assert not result.holds
    assert result.margin == pytest.approx(0.0, abs=1e-12)


def test_twisting_needs_pinching():
    with pytest.raises(DimensionError):
        check_twisting(fix_sc(), (0,), (1,), 1)


def test_typicality_verdicts():
    ty = is_one_typical(fix_ty())
    assert ty.typical
    assert ty.pair.describe() == {"p": "1", "insert": "2", "offset": 1}
    assert not is_one_typical(fix_dg()).typical
    sc = is_one_typical(fix_sc())
    assert not sc.typical
    assert all(not entry["pinching"] for entry in sc.search_log)


def test_typicality_is_deterministic():
    first = is_one_typical(fix_ty(), 2, 2).to_dict()
    second = is_one_typical(fix_ty(), 2, 2).to_dict()
    assert first == second


def test_search_caps_validated():
    with pytest.raises(ValueError):
        is_one_typical(fix_ty(), 0, 3)


def test_three_dimensional_typicality_uses_every_exterior_power():
    # a diagonal matrix with distinct moduli and a generic orthogonal matrix
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    c = build_cocycle(full_shift(2), {(0,): np.diag([3.0, 2.0, 1.0]), (1,): q})
    report = is_typical(c, 2, 2)
    assert report.typical
    assert [row["power"] for row in report.per_exterior_power] == [1, 2]
    assert exterior_power(c, 2).dimension == 3


def test_rotation_only_cocycle_is_not_typical():
    c = build_cocycle(full_shift(2), {(0,): rotation(0.3), (1,): rotation(1.1)})
    assert not is_one_typical(c, 2, 2).typical
