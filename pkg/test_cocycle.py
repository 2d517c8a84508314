import numpy as np
import pytest

from Cocycle_Thermo.cocycle import (
    adjoint_inverse,
    block_recode,
    build_cocycle,
    compound_matrices,
    cylinder_log_norms,
    distortion_constant,
    evaluate,
    exterior_power,
    fiber_bunching_margin,
    holonomy_loop,
    homoclinic_point,
    norm_over_cylinder,
    one_sided_reduction,
    periodic_product,
    power_cocycle,
    require_fiber_bunched,
    slowest_direction,
    stable_holonomy,
    unstable_holonomy,
)
from Cocycle_Thermo.errors import (
    DimensionError,
    FiberBunchingError,
    InadmissibleWordError,
    NearSingularError,
    StableSetError,
)
from Cocycle_Thermo.fixtures import fix_constant_diag, fix_sc, fix_ty, perturbed_sc, rotation
from Cocycle_Thermo.projgeom import ProjPoint
from Cocycle_Thermo.symbolic import (
    SequencePoint,
    build_subshift,
    enumerate_words,
    full_shift,
    golden_mean_shift,
    words_as_tuples,
)

D = np.diag([1.5, 1.0])
R = rotation(np.pi / 3)


def test_build_cocycle_validation():
    spec = golden_mean_shift()
    with pytest.raises(DimensionError):
        build_cocycle(spec, {(0, 0): np.identity(2), (0, 1): np.identity(2)})
    with pytest.raises(NearSingularError) as err:
        build_cocycle(spec, {(0,): np.identity(2), (1,): np.zeros((2, 2))})
    assert err.value.context["word"] == "2"
    with pytest.raises(InadmissibleWordError):
        build_cocycle(spec, {w: np.identity(2) for w in [(0, 0), (0, 1), (1, 0), (1, 1)]})


def test_generator_table_has_identity_on_inadmissible_windows():
    spec = golden_mean_shift()
    c = build_cocycle(spec, {w: 2 * np.identity(2) for w in [(0, 0), (0, 1), (1, 0)]})
    assert c.table.shape == (4, 2, 2)
    np.testing.assert_array_equal(c.table[3], np.identity(2))
    with pytest.raises(InadmissibleWordError):
        c.generator((1, 1))


def test_evaluate_orders_later_symbols_on_the_left():
    c = fix_ty()
    np.testing.assert_allclose(evaluate(c, (0, 1)), R @ D, atol=1e-14)
    np.testing.assert_allclose(evaluate(c, (1, 0, 0)), D @ D @ R, atol=1e-14)
    np.testing.assert_allclose(evaluate(fix_sc(), (0, 1, 1)), 18 * np.identity(2))


def test_periodic_product():
    np.testing.assert_allclose(periodic_product(fix_ty(), (0, 1)), R @ D, atol=1e-14)
    with pytest.raises(InadmissibleWordError):
        periodic_product(build_cocycle(golden_mean_shift(), {(0,): D, (1,): R}), (1,))


def test_cylinder_norms_one_step_are_exact():
    c = fix_ty()
    words, hi, lo = cylinder_log_norms(c, 5)
    np.testing.assert_array_equal(hi, lo)
    for w, v in zip(words_as_tuples(words[:8]), hi[:8]):
        assert v == pytest.approx(np.log(np.linalg.norm(evaluate(c, w), 2)), abs=1e-12)


def test_cylinder_norms_depth_two_spread():
    c = perturbed_sc(0.2)
    words, hi, lo = cylinder_log_norms(c, 4)
    assert (hi >= lo).all()
    assert (hi > lo).any()
    cn = norm_over_cylinder(c, (0, 1, 0))
    assert cn.refinements == 2
    words3, hi3, _ = cylinder_log_norms(c, 3)
    idx = words_as_tuples(words3).index((0, 1, 0))
    assert cn.value == pytest.approx(np.exp(hi3[idx]), rel=1e-12)
    assert cn.residual_bound == pytest.approx(cn.value - cn.minimum)
    assert distortion_constant(c, 4).constant >= 1.0


def test_exterior_square_is_determinant():
    c = fix_ty()
    ext = exterior_power(c, 2)
    assert ext.dimension == 1
    for w in words_as_tuples(enumerate_words(c.shift, 5)):
        assert abs(evaluate(ext, w)[0, 0]) == pytest.approx(abs(np.linalg.det(evaluate(c, w))), rel=1e-12)


def test_compound_matrices_are_multiplicative():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    np.testing.assert_allclose(
        compound_matrices(a @ b, 2), compound_matrices(a, 2) @ compound_matrices(b, 2), atol=1e-12
    )
    with pytest.raises(DimensionError):
        compound_matrices(a, 4)


def test_adjoint_inverse_products():
    c = fix_ty()
    adj = adjoint_inverse(c)
    for w in [(0, 1, 1), (1, 0, 0, 1)]:
        np.testing.assert_allclose(evaluate(adj, w), np.linalg.inv(evaluate(c, w)).T, atol=1e-12)


def test_block_recode_reads_blocks():
    c = perturbed_sc(0.1)
    c1, blocks = block_recode(c)
    assert c1.depth == 1 and c1.shift.k == 4
    for i, block in enumerate(words_as_tuples(blocks)):
        np.testing.assert_allclose(c1.generator((i,)), c.generator(block))


def test_power_cocycle_turns_periods_into_symbols():
    c = fix_ty()
    pc, blocks = power_cocycle(c, 2)
    assert pc.shift.k == 4
    assert pc.holder_exponent == pytest.approx(2.0)
    i = words_as_tuples(blocks).index((0, 1))
    np.testing.assert_allclose(pc.generator((i,)), R @ D, atol=1e-12)
    np.testing.assert_allclose(periodic_product(pc, (i,)), periodic_product(c, (0, 1)), atol=1e-12)


def test_fiber_bunching():
    report = fiber_bunching_margin(fix_ty())
    assert report.bunched and report.margin == pytest.approx(0.5)
    stretched = build_cocycle(full_shift(2), {(0,): np.diag([5.0, 1.0]), (1,): np.identity(2)})
    assert not fiber_bunching_margin(stretched).bunched
    with pytest.raises(FiberBunchingError):
        require_fiber_bunched(stretched)


def test_one_step_local_stable_holonomy_is_identity():
    c = fix_ty()
    x = SequencePoint.from_text(c.shift, "12", past="1")
    y = SequencePoint.from_text(c.shift, "12", past="2")
    np.testing.assert_allclose(stable_holonomy(c, x, y).matrix, np.identity(2), atol=1e-14)


def test_stable_holonomy_of_past_dependent_cocycle():
    c = perturbed_sc(0.1, lag=1)
    x = SequencePoint.from_text(c.shift, "12", past="1")
    y = SequencePoint.from_text(c.shift, "12", past="2")
    res = stable_holonomy(c, x, y)
    np.testing.assert_allclose(res.matrix, (2.0 / 3.0) * np.identity(2), atol=1e-14)
    assert res.iterations == 2


def test_stable_holonomy_cocycle_property():
    c = perturbed_sc(0.1, lag=1)
    x = SequencePoint.from_text(c.shift, "121", past="121")
    y = SequencePoint.from_text(c.shift, "121", past="212")
    h = stable_holonomy(c, x, y).matrix
    h_next = stable_holonomy(c, x.shifted(1), y.shifted(1)).matrix
    np.testing.assert_allclose(h_next @ c.generator_at(x), c.generator_at(y) @ h, atol=1e-12)


def test_unstable_holonomy_depth_two():
    eps = 0.1
    c = perturbed_sc(eps)
    x = SequencePoint.from_text(c.shift, "1", past="12")
    y = SequencePoint.from_text(c.shift, "2", past="12")
    expected = np.array([[1.0, -2 * eps], [0.0, 1.0]])
    np.testing.assert_allclose(unstable_holonomy(c, x, y).matrix, expected, atol=1e-14)


def test_points_off_the_stable_set():
    # successor map 1 -> 2 -> 1, 2 -> 1 -> 2: the canonical tails never merge
    spec = build_subshift([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    c = build_cocycle(spec, {(0,): D, (1,): R, (2,): np.identity(2)})
    x, y = SequencePoint(spec, (0,)), SequencePoint(spec, (1,))
    assert x.sync_index(y) is None
    with pytest.raises(StableSetError):
        stable_holonomy(c, x, y)


def test_homoclinic_point_and_loop():
    c = fix_ty()
    hp = homoclinic_point(c.shift, (0,), (1,), 1)
    assert hp.steps == 2
    assert hp.point.window(0, 4) == (0, 1, 0, 0)
    loop = holonomy_loop(c, (0,), (1,), 1)
    np.testing.assert_allclose(loop, np.linalg.inv(D @ D) @ R @ D, atol=1e-12)
    with pytest.raises(InadmissibleWordError):
        homoclinic_point(c.shift, (0,), (0,), 1)


def test_slowest_direction_of_constant_diagonal():
    c = fix_constant_diag()
    sd = slowest_direction(c, SequencePoint(c.shift, (0,)), 10)
    assert sd.direction == ProjPoint.basis(2, 0)
    assert sd.stability == pytest.approx(0.0, abs=1e-12)
    assert sd.log_norm == pytest.approx(10 * np.log(2.0), abs=1e-12)
    assert not sd.unreliable


def test_slowest_direction_flags_conformal_cocycles():
    c = fix_sc()
    assert slowest_direction(c, SequencePoint(c.shift, (0, 1)), 6).unreliable


def test_slowest_direction_stabilises_along_the_orbit():
    c = fix_ty()
    x = SequencePoint(c.shift, (0, 1, 1, 0, 1))
    early = slowest_direction(c, x, 3)
    late = slowest_direction(c, x, 30)
    assert late.stability < 1e-6
    assert late.stability <= early.stability
    assert not late.unreliable


def test_one_sided_reduction_is_a_conjugacy():
    c = perturbed_sc(0.1, lag=1)
    red = one_sided_reduction(c)
    assert red.cocycle.lag == 0
    for text, past in [("1212", "21"), ("2211", "1"), ("12", "222")]:
        x = SequencePoint.from_text(c.shift, text, past=past)
        assert red.defect(x) < 1e-12


def test_with_depth_keeps_products():
    c = fix_ty()
    deeper = c.with_depth(3)
    for w in [(0, 1), (1, 1, 0, 1)]:
        np.testing.assert_allclose(evaluate(deeper, w), evaluate(c, w), atol=1e-14)
