import numpy as np
import pytest
from hypothesis import assume, given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from Cocycle_Thermo.errors import DimensionError, NearSingularError
from Cocycle_Thermo.projgeom import (
    ProjPoint,
    check_benoist,
    delta_distance,
    gap_data,
    proj_distance,
    random_unit_vectors,
)

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
DIAG = (E1 + E2) / np.sqrt(2.0)


def test_proj_distance_examples():
    assert proj_distance(E1, E2) == pytest.approx(1.0)
    assert proj_distance(DIAG, DIAG) == pytest.approx(0.0, abs=1e-15)
    assert proj_distance(E1, DIAG) == pytest.approx(0.7071067811865476, abs=1e-14)


def test_delta_distance_examples():
    assert delta_distance(DIAG, DIAG) == pytest.approx(1.0)
    assert delta_distance(E1, E2) == pytest.approx(0.0)
    assert delta_distance(E1, DIAG) == pytest.approx(0.7071067811865476, abs=1e-14)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        proj_distance(E1, np.ones(3))


def test_proj_point_identifies_antipodes():
    assert ProjPoint(np.array([1.0, -2.0])) == ProjPoint(np.array([-1.0, 2.0]))
    assert np.linalg.norm(ProjPoint(np.array([3.0, 4.0])).vector) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DimensionError):
        ProjPoint(np.zeros(2))
    with pytest.raises(DimensionError):
        ProjPoint(np.array([1.0]))


def test_gap_data_examples():
    g = gap_data(np.diag([2.0, 1.0]))
    assert g.gap == pytest.approx(0.5)
    assert g.top_dir == ProjPoint.basis(2, 0)
    assert not g.degenerate

    angle = 0.7
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    assert gap_data(rot).gap == pytest.approx(1.0)
    assert gap_data(rot).degenerate

    assert gap_data(np.diag([3.0, 2.0, 1.0])).gap == pytest.approx(2.0 / 3.0)


def test_gap_data_singular_input():
    with pytest.raises(NearSingularError):
        gap_data(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_gap_of_adjoint_and_top_direction():
    rng = np.random.default_rng(3)
    for d in (2, 3, 4):
        a = rng.standard_normal((d, d))
        g, g_adj = gap_data(a), gap_data(a.T)
        assert g.gap == pytest.approx(g_adj.gap, rel=1e-12)
        u = g.top_dir.vector
        assert np.linalg.norm(a.T @ u) == pytest.approx(g.norm, rel=1e-10)


def test_benoist_identity_and_diagonal():
    for u, v in ((E1, E2), (DIAG, E1)):
        assert check_benoist(np.identity(2), u, v).all_hold
    check = check_benoist(np.diag([2.0, 1.0]), E1, E1)
    assert check.all_hold
    # (ii) with u = e1: ‖A*u‖/‖A‖ = 1 = δ(u, v+(A))
    assert check.residuals[1] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_benoist_inequalities_random_oracle(d):
    rng = np.random.default_rng(1000 + d)
    us = random_unit_vectors(rng, 10_000, d)
    vs = random_unit_vectors(rng, 10_000, d)
    violations = 0
    for u, v in zip(us, vs):
        a = rng.standard_normal((d, d))
        if not check_benoist(a, u, v).all_hold:
            violations += 1
    assert violations == 0


vectors = arrays(np.float64, (3,), elements=st.floats(min_value=-10.0, max_value=10.0))


@seed(11)
@settings(max_examples=200, deadline=None)
@given(vectors, vectors)
def test_proj_distance_is_symmetric_and_bounded(u, v):
    assume(np.linalg.norm(u) > 1e-3 and np.linalg.norm(v) > 1e-3)
    d_uv, d_vu = proj_distance(u, v), proj_distance(v, u)
    assert 0.0 <= d_uv <= 1.0
    assert d_uv == pytest.approx(d_vu, abs=1e-12)
    assert proj_distance(u, -u) == pytest.approx(0.0, abs=1e-7)
    # |sin|² + |cos|² = 1
    assert d_uv ** 2 + delta_distance(u, v) ** 2 == pytest.approx(1.0, abs=1e-9)


@seed(12)
@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(min_value=-5.0, max_value=5.0)), vectors, vectors)
def test_benoist_inequalities_hypothesis(a, u, v):
    assume(np.linalg.norm(u) > 1e-3 and np.linalg.norm(v) > 1e-3)
    s = np.linalg.svd(a, compute_uv=False)
    assume(s[-1] > 1e-6 * s[0])
    assert check_benoist(a, u, v, slack=1e-10).all_hold
