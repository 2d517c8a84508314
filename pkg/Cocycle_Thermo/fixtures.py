"""
Named reference cocycles with closed-form or derived answers.

fix_sc  full 2-shift, 2I / 3I (scalar; pressure log(2^t + 3^t))
fix_dg  full 2-shift, diag(2,1) / diag(1,2) (diagonal; not typical)
fix_ty  full 2-shift, diag(3/2,1) / rotation by π/3 (1-typical)
"""

from __future__ import annotations

from typing import Any, Dict

import numpy as np

from .cocycle import MatrixCocycle, build_cocycle, constant_cocycle, identity_cocycle, one_step_cocycle
from .symbolic import SubshiftSpec, format_word, full_shift

SCHEMA = "cocycle-thermo/1"


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def fix_sc(shift: SubshiftSpec | None = None) -> MatrixCocycle:
    shift = shift or full_shift(2)
    return one_step_cocycle(shift, [2 * np.identity(2), 3 * np.identity(2)], name="fix_sc")


def fix_dg(shift: SubshiftSpec | None = None) -> MatrixCocycle:
    shift = shift or full_shift(2)
    return one_step_cocycle(shift, [np.diag([2.0, 1.0]), np.diag([1.0, 2.0])], name="fix_dg")


def fix_ty(shift: SubshiftSpec | None = None) -> MatrixCocycle:
    shift = shift or full_shift(2)
    return one_step_cocycle(shift, [np.diag([1.5, 1.0]), rotation(np.pi / 3)], 1.0, name="fix_ty")


def fix_identity(d: int = 2) -> MatrixCocycle:
    return identity_cocycle(full_shift(2), d)


def fix_constant_diag() -> MatrixCocycle:
    """Constant diag(2,1): the eigenmeasure of the adjoint action concentrates at ē₁."""
    return constant_cocycle(full_shift(2), np.diag([2.0, 1.0]))


def perturbed_sc(eps: float = 0.1, lag: int = 0) -> MatrixCocycle:
    """
    Depth-2 perturbation of fix_sc: A(ab) = c_a [[1, ±eps], [0, 1]] with the
    sign set by b. lag=1 makes the window (x_{-1}, x_0), so the cocycle
    depends on the past.
    """
    shift = full_shift(2)
    scale = (2.0, 3.0)
    gens = {}
    for a in range(2):
        for b in range(2):
            sign = 1.0 if b == 0 else -1.0
            gens[(a, b)] = scale[a] * np.array([[1.0, sign * eps], [0.0, 1.0]])
    return build_cocycle(shift, gens, 1.0, lag, name=f"perturbed_sc(eps={eps}, lag={lag})")


FIXTURES = {
    "fix_sc": fix_sc,
    "fix_dg": fix_dg,
    "fix_ty": fix_ty,
}


def cocycle_to_dict(c: MatrixCocycle) -> Dict[str, Any]:
    return {
        "dimension": c.dimension,
        "holder_exponent": c.holder_exponent,
        "lag": c.lag,
        "generators": {word: mat.tolist() for word, mat in c.generators().items()},
    }


def create_sample_config(name: str = "fix_ty") -> Dict[str, Any]:
    """테스트 및 `sample-config` 명령용 샘플 설정 생성"""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose one of {sorted(FIXTURES)}")
    c = FIXTURES[name]()
    return {
        "schema": SCHEMA,
        "name": name,
        "shift": {"transitions": c.shift.transitions.tolist()},
        "cocycle": cocycle_to_dict(c),
        "psi": {"kind": "zero"},
        "grid": {"m_grid": 1, "n_proj": 512},
        "t": {"values": [-1.0, -0.5, 0.0, 0.5, 1.0]},
        "n": 12,
        "depth": 8,
        "mixing": {"L": 3, "n_gap": 8},
        "lyapunov": {"n": 200, "trials": 200, "h_step": 0.05, "eps": 0.1, "n_list": [10, 20, 30, 40]},
        "typicality": {"period_cap": 3, "insert_cap": 3},
        "holonomy": {"x": format_word((0, 1, 0, 0)), "y": format_word((0, 1, 0, 1))},
        "require_fiber_bunching": False,
        "seed": 0,
    }
