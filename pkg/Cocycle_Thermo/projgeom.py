"""Projective space P(R^d): distances, singular directions and spectral gaps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import DimensionError, NearSingularError

UNIT_TOL = 1e-12
CONDITION_LIMIT = 1e14
DEGENERATE_GAP = 1.0 - 1e-10
BENOIST_SLACK = 1e-12


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip v so that its first non-negligible coordinate is positive."""
    v = np.asarray(v, dtype=float)
    nz = np.flatnonzero(np.abs(v) > 1e-14 * max(1.0, float(np.abs(v).max(initial=0.0))))
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


@dataclass(frozen=True, eq=False)
class ProjPoint:
    """A line in R^d, stored as a unit representative with canonical sign."""

    vector: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DimensionError(f"projective points need d >= 2, got shape {v.shape}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not np.isfinite(norm):
            raise DimensionError("cannot projectivise the zero vector")
        v = canonical_sign(v / norm)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @classmethod
    def basis(cls, d: int, i: int) -> "ProjPoint":
        e = np.zeros(d)
        e[i] = 1.0
        return cls(e)

    @property
    def dimension(self) -> int:
        return self.vector.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjPoint) or other.dimension != self.dimension:
            return NotImplemented
        return proj_distance(self, other) <= UNIT_TOL

    __hash__ = None  # type: ignore[assignment]


PointLike = Union[ProjPoint, np.ndarray]


def _unit_pair(u: PointLike, v: PointLike) -> Tuple[np.ndarray, np.ndarray]:
    a = u.vector if isinstance(u, ProjPoint) else np.asarray(u, dtype=float)
    b = v.vector if isinstance(v, ProjPoint) else np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    return a / np.linalg.norm(a), b / np.linalg.norm(b)


def proj_distance(u: PointLike, v: PointLike) -> float:
    """d_P(u, v) = ‖u∧v‖/(‖u‖‖v‖) = |sin angle|."""
    a, b = _unit_pair(u, v)
    # ‖a - <a,b> b‖ is the stable form of ‖a∧b‖ for unit vectors
    value = float(np.linalg.norm(a - np.dot(a, b) * b))
    return min(1.0, value)


def delta_distance(u: PointLike, v: PointLike) -> float:
    """δ_P(u, v) = d_P(u, v^⊥) = |<u, v>| for unit representatives."""
    a, b = _unit_pair(u, v)
    return min(1.0, abs(float(np.dot(a, b))))


@dataclass(frozen=True)
class GapData:
    sigma: np.ndarray
    gap: float
    top_dir: ProjPoint
    top_dir_adjoint: ProjPoint
    degenerate: bool

    @property
    def norm(self) -> float:
        return float(self.sigma[0])


def oriented_svd(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with each singular vector's first non-negligible coordinate positive."""
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=float))
    for i in range(s.size):
        col = canonical_sign(u[:, i])
        if not np.array_equal(col, u[:, i]):
            u[:, i] = -u[:, i]
            vt[i] = -vt[i]
    return u, s, vt


def gap_data(a: np.ndarray) -> GapData:
    """
    Singular values of A, the gap σ₂/σ₁ and the top directions.

    top_dir is v₊(A): ‖A* u‖ = ‖A*‖. top_dir_adjoint is v₊(A*), the most
    expanded direction of A itself.

    Raises:
        NearSingularError: σ₁/σ_d above 1e14
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise DimensionError(f"gap_data needs a square matrix with d >= 2, got {a.shape}")
    u, s, vt = oriented_svd(a)
    if s[-1] <= 0 or s[0] / s[-1] > CONDITION_LIMIT:
        raise NearSingularError("matrix is numerically singular", condition=float(s[0] / s[-1]) if s[-1] > 0 else float("inf"))
    gap = float(s[1] / s[0])
    return GapData(
        sigma=s,
        gap=gap,
        top_dir=ProjPoint(u[:, 0]),
        top_dir_adjoint=ProjPoint(vt[0]),
        degenerate=gap >= DEGENERATE_GAP,
    )


@dataclass(frozen=True)
class BenoistCheck:
    """Three two-sided projective inequalities; residual > slack means violated."""

    holds: Tuple[bool, bool, bool]
    residuals: Tuple[float, float, float]

    @property
    def all_hold(self) -> bool:
        return all(self.holds)


def check_benoist(a: np.ndarray, u: PointLike, v: PointLike, slack: float = BENOIST_SLACK) -> BenoistCheck:
    """
    For invertible A and lines u, v, with γ = σ₂/σ₁:

      (i)   δ(v₊(A*), v) ≤ ‖Av‖/(‖A‖‖v‖) ≤ δ(v₊(A*), v) + γ
      (ii)  δ(u, v₊(A)) ≤ ‖A*u‖/(‖A‖‖u‖) ≤ δ(u, v₊(A)) + γ
      (iii) d(A*u, v₊(A*))·δ(u, v₊(A)) ≤ γ

    Residuals are the largest amount by which a side fails (≤ 0 when it holds).
    """
    a = np.asarray(a, dtype=float)
    data = gap_data(a)
    uu, vv = _unit_pair(u, v)
    norm_a = data.norm
    gamma = data.gap

    ratio_v = float(np.linalg.norm(a @ vv)) / norm_a
    delta_v = delta_distance(data.top_dir_adjoint, vv)
    r1 = max(delta_v - ratio_v, ratio_v - (delta_v + gamma))

    adj_u = a.T @ uu
    ratio_u = float(np.linalg.norm(adj_u)) / norm_a
    delta_u = delta_distance(uu, data.top_dir)
    r2 = max(delta_u - ratio_u, ratio_u - (delta_u + gamma))

    r3 = proj_distance(adj_u, data.top_dir_adjoint.vector) * delta_u - gamma

    residuals = (float(r1), float(r2), float(r3))
    return BenoistCheck(tuple(r <= slack for r in residuals), residuals)  # type: ignore[arg-type]


def random_unit_vectors(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    x = rng.standard_normal((count, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
