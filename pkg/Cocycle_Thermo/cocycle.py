"""
Locally constant matrix cocycles over a subshift of finite type.

A cocycle of depth m and lag l reads the window x_{i-l} .. x_{i-l+m-1} at
position i; lag 0 cocycles only look forward. The generator is stored as a
dense (k^m, d, d) table indexed by the base-k code of the window, with the
identity at inadmissible windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import ceil, comb
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from .errors import (
    ConvergenceError,
    DimensionError,
    FiberBunchingError,
    InadmissibleWordError,
    NearSingularError,
    StableSetError,
)
from .projgeom import CONDITION_LIMIT, DEGENERATE_GAP, ProjPoint, oriented_svd, proj_distance
from .symbolic import (
    SequencePoint,
    SubshiftSpec,
    Word,
    block_power,
    encode_words,
    enumerate_words,
    extend_with_past,
    extend_with_tail,
    format_word,
    higher_block,
    words_as_tuples,
    word_distance,
)

log = structlog.get_logger(__name__)

HOLONOMY_MAX_ITER = 200
RESCALE_EVERY = 8
STABILITY_LOOKAHEAD = 10


@dataclass(frozen=True, eq=False)
class MatrixCocycle:
    shift: SubshiftSpec
    dimension: int
    depth: int
    table: np.ndarray
    holder_exponent: float = 1.0
    lag: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        k, m, d = self.shift.k, self.depth, self.dimension
        if self.table.shape != (k ** m, d, d):
            raise DimensionError(f"generator table must have shape {(k ** m, d, d)}, got {self.table.shape}")
        if not 0 <= self.lag < m:
            raise DimensionError(f"lag must lie in [0, depth), got lag={self.lag}, depth={m}")
        self.table.setflags(write=False)

    @property
    def is_one_step(self) -> bool:
        return self.depth == 1 and self.lag == 0

    def windows(self) -> np.ndarray:
        return enumerate_words(self.shift, self.depth)

    def window_codes(self) -> np.ndarray:
        return encode_words(self.windows(), self.shift.k)

    def generator(self, window: Sequence[int]) -> np.ndarray:
        window = tuple(window)
        if len(window) != self.depth or not self.shift.is_admissible(window):
            raise InadmissibleWordError(f"no generator for window {format_word(window)}")
        return self.table[int(encode_words(np.array([window]), self.shift.k)[0])]

    def window_at(self, x: SequencePoint, i: int = 0) -> Word:
        return x.window(i - self.lag, i - self.lag + self.depth)

    def generator_at(self, x: SequencePoint, i: int = 0) -> np.ndarray:
        return self.generator(self.window_at(x, i))

    def generators(self) -> Dict[str, np.ndarray]:
        return {format_word(w): self.table[c] for w, c in zip(words_as_tuples(self.windows()), self.window_codes())}

    def with_depth(self, depth: int) -> "MatrixCocycle":
        """The same lag-0 cocycle read through longer windows."""
        if self.lag != 0 or depth < self.depth:
            raise DimensionError("with_depth only lengthens lag-0 cocycles")
        table = np.repeat(self.table, self.shift.k ** (depth - self.depth), axis=0)
        return MatrixCocycle(self.shift, self.dimension, depth, table, self.holder_exponent, 0, self.name)

    def scaled(self, factor: float) -> "MatrixCocycle":
        return MatrixCocycle(self.shift, self.dimension, self.depth, self.table * factor,
                             self.holder_exponent, self.lag, self.name)

    def with_table(self, table: np.ndarray, dimension: Optional[int] = None, name: str = "") -> "MatrixCocycle":
        return MatrixCocycle(self.shift, dimension or self.dimension, self.depth, table,
                             self.holder_exponent, self.lag, name or self.name)


def build_cocycle(
    shift: SubshiftSpec,
    generators: Mapping[Word, np.ndarray],
    holder_exponent: float = 1.0,
    lag: int = 0,
    name: str = "",
) -> MatrixCocycle:
    """
    Assemble a cocycle from {window: matrix}. Every admissible window of the
    common length must be present and invertible.

    Raises:
        DimensionError: mixed window lengths or matrix shapes, missing windows
        NearSingularError: a generator with condition number above 1e14
    """
    if not generators:
        raise DimensionError("no generators given")
    lengths = {len(w) for w in generators}
    if len(lengths) != 1:
        raise DimensionError(f"generator windows have mixed lengths {sorted(lengths)}")
    depth = lengths.pop()
    mats = {tuple(w): np.asarray(a, dtype=float) for w, a in generators.items()}
    shapes = {a.shape for a in mats.values()}
    if len(shapes) != 1:
        raise DimensionError(f"generators have mixed shapes {sorted(shapes)}")
    shape = shapes.pop()
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"generators must be square, got {shape}")
    d = shape[0]

    table = np.broadcast_to(np.identity(d), (shift.k ** depth, d, d)).copy()
    for window in words_as_tuples(enumerate_words(shift, depth)):
        if window not in mats:
            raise DimensionError(f"missing generator for window {format_word(window)}", word=format_word(window))
        a = mats[window]
        s = np.linalg.svd(a, compute_uv=False)
        if s[-1] <= 0 or s[0] / s[-1] > CONDITION_LIMIT:
            raise NearSingularError(f"generator for {format_word(window)} is singular", word=format_word(window))
        table[int(encode_words(np.array([window]), shift.k)[0])] = a
    for window in mats:
        if not shift.is_admissible(window):
            raise InadmissibleWordError(f"generator given for inadmissible window {format_word(window)}")
    return MatrixCocycle(shift, d, depth, table, holder_exponent, lag, name)


def one_step_cocycle(shift: SubshiftSpec, matrices: Sequence[np.ndarray], holder_exponent: float = 1.0,
                     name: str = "") -> MatrixCocycle:
    return build_cocycle(shift, {(a,): m for a, m in enumerate(matrices)}, holder_exponent, 0, name)


def identity_cocycle(shift: SubshiftSpec, d: int = 2) -> MatrixCocycle:
    return one_step_cocycle(shift, [np.identity(d)] * shift.k, name="identity")


def constant_cocycle(shift: SubshiftSpec, a: np.ndarray, holder_exponent: float = 1.0) -> MatrixCocycle:
    return one_step_cocycle(shift, [np.asarray(a, dtype=float)] * shift.k, holder_exponent, name="constant")


# --- batched products ------------------------------------------------------------

def canonical_extension(c: MatrixCocycle, words: np.ndarray) -> np.ndarray:
    """
    Rows padded with the canonical past (lag columns) and canonical tail so
    that column j holds index j - lag and n windows fit.
    """
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    ext = extend_with_past(c.shift, words, c.lag)
    return extend_with_tail(c.shift, ext, c.depth - 1 - c.lag)


def log_products(c: MatrixCocycle, ext: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    𝒜ⁿ along each row of ext (n + depth - 1 columns), returned as
    (P, s) with 𝒜ⁿ = e^s · P and max|P| = 1.
    """
    ext = np.atleast_2d(ext)
    rows, d = ext.shape[0], c.dimension
    if ext.shape[1] < n + c.depth - 1:
        raise DimensionError(f"need {n + c.depth - 1} columns for {n} steps, got {ext.shape[1]}")
    prod = np.broadcast_to(np.identity(d), (rows, d, d)).copy()
    logscale = np.zeros(rows)
    k = c.shift.k
    for i in range(n):
        codes = encode_words(ext[:, i:i + c.depth], k)
        prod = c.table[codes] @ prod
        if (i + 1) % RESCALE_EVERY == 0 or i == n - 1:
            s = np.abs(prod).max(axis=(1, 2))
            prod /= s[:, None, None]
            logscale += np.log(s)
    return prod, logscale


def log_norms(prod: np.ndarray, logscale: np.ndarray) -> np.ndarray:
    return np.log(np.linalg.norm(prod, ord=2, axis=(1, 2))) + logscale


def evaluate(c: MatrixCocycle, word: Sequence[int]) -> np.ndarray:
    """𝒜^{|I|} at the canonical point of [I]; later symbols act on the left."""
    word = c.shift.require_admissible(word)
    if not word:
        raise InadmissibleWordError("evaluate needs a non-empty word")
    ext = canonical_extension(c, np.array([word]))[0]
    out = np.identity(c.dimension)
    for i in range(len(word)):
        out = c.generator(tuple(ext[i:i + c.depth])) @ out
    return out


def evaluate_point(c: MatrixCocycle, x: SequencePoint, n: int, start: int = 0) -> np.ndarray:
    """𝒜ⁿ(σ^start x)."""
    out = np.identity(c.dimension)
    for i in range(start, start + n):
        out = c.generator_at(x, i) @ out
    return out


def periodic_product(c: MatrixCocycle, p: Sequence[int]) -> np.ndarray:
    """𝒜^{|p|} at the periodic point p^∞."""
    p = tuple(p)
    if not c.shift.is_cyclic(p):
        raise InadmissibleWordError(f"{format_word(p)} is not a cyclically admissible word")
    reps = ceil((c.depth + c.lag) / len(p)) + 2
    point = SequencePoint(c.shift, p * (2 * reps), -reps * len(p))
    return evaluate_point(c, point, len(p))


@dataclass(frozen=True)
class CylinderNorm:
    value: float
    minimum: float
    residual_bound: float
    refinements: int


def cylinder_log_norms(c: MatrixCocycle, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    For every I in Σ_n (lexicographic): log max and log min of ‖𝒜ⁿ(x)‖ over
    x in [I]. The cocycle is locally constant, so the maximum is taken over
    the finitely many refinements of [I] that fix every window it reads.
    """
    words = enumerate_words(c.shift, n)
    span = n + c.depth - 1
    if span == n and c.lag == 0:
        prod, scale = log_products(c, words, n)
        values = log_norms(prod, scale)
        return words, values, values.copy()
    refined = enumerate_words(c.shift, span)
    prod, scale = log_products(c, refined, n)
    values = log_norms(prod, scale)
    idx = np.searchsorted(encode_words(words, c.shift.k), encode_words(refined[:, c.lag:c.lag + n], c.shift.k))
    hi = np.full(words.shape[0], -np.inf)
    lo = np.full(words.shape[0], np.inf)
    np.maximum.at(hi, idx, values)
    np.minimum.at(lo, idx, values)
    return words, hi, lo


def norm_over_cylinder(c: MatrixCocycle, word: Sequence[int]) -> CylinderNorm:
    """
    ‖𝒜(I)‖ = max over [I] of ‖𝒜^{|I|}(x)‖. residual_bound is the spread
    max - min over the refinements, which bounds how far any single
    evaluation point in [I] can be from the maximum.
    """
    word = c.shift.require_admissible(word)
    n = len(word)
    if c.is_one_step:
        value = float(np.linalg.norm(evaluate(c, word), 2))
        return CylinderNorm(value, value, 0.0, 1)
    extra = c.depth - 1
    fixed = np.array([word])
    refined = _refinements(c.shift, fixed, before=c.lag, after=extra - c.lag)
    prod, scale = log_products(c, refined, n)
    values = np.exp(log_norms(prod, scale))
    return CylinderNorm(float(values.max()), float(values.min()), float(values.max() - values.min()), int(values.size))


def _refinements(spec: SubshiftSpec, fixed: np.ndarray, before: int, after: int) -> np.ndarray:
    """Every admissible way to extend the single row `fixed` on both sides."""
    rows = fixed
    q = spec.transitions.astype(bool)
    for _ in range(after):
        r, nxt = np.nonzero(q[rows[:, -1]])
        rows = np.hstack([rows[r], nxt[:, None]])
    for _ in range(before):
        r, prv = np.nonzero(q[:, rows[:, 0]].T)
        rows = np.hstack([prv[:, None], rows[r]])
    return rows


# --- derived cocycles ----------------------------------------------------------------

def adjoint_inverse(c: MatrixCocycle) -> MatrixCocycle:
    """Generator (A⁻¹)ᵀ per window, so that 𝒜_*^{-n} = [(𝒜ⁿ)⁻¹]*."""
    table = np.linalg.inv(c.table).transpose(0, 2, 1).copy()
    return c.with_table(table, name=f"{c.name}*" if c.name else "")


def compound_matrices(mats: np.ndarray, k: int) -> np.ndarray:
    """k-th exterior power of a stack of d×d matrices via k×k minors."""
    mats = np.asarray(mats, dtype=float)
    d = mats.shape[-1]
    if not 1 <= k <= d:
        raise DimensionError(f"exterior power index must lie in 1..{d}, got {k}")
    subsets = list(combinations(range(d), k))
    out = np.empty(mats.shape[:-2] + (len(subsets), len(subsets)))
    for i, rows in enumerate(subsets):
        for j, cols in enumerate(subsets):
            out[..., i, j] = np.linalg.det(mats[..., list(rows), :][..., :, list(cols)])
    return out


def exterior_power(c: MatrixCocycle, k: int) -> MatrixCocycle:
    if not 1 <= k <= c.dimension:
        raise DimensionError(f"exterior power index must lie in 1..{c.dimension}, got {k}")
    if k == 1:
        return c
    table = compound_matrices(c.table, k)
    return c.with_table(table, dimension=comb(c.dimension, k), name=f"{c.name}^{k}" if c.name else "")


def block_recode(c: MatrixCocycle) -> Tuple[MatrixCocycle, np.ndarray]:
    """One-step cocycle over the depth-block presentation of the shift."""
    if c.lag != 0:
        raise DimensionError("block_recode needs a lag-0 cocycle; apply one_sided_reduction first")
    if c.depth == 1:
        return c, enumerate_words(c.shift, 1)
    spec, blocks = higher_block(c.shift, c.depth)
    table = c.table[encode_words(blocks, c.shift.k)].copy()
    return MatrixCocycle(spec, c.dimension, 1, table, c.holder_exponent, 0, c.name), blocks


def power_cocycle(c: MatrixCocycle, length: int) -> Tuple[MatrixCocycle, np.ndarray]:
    """
    The length-step cocycle over σ^length, read on the shift of admissible
    length-words. A periodic word of that length becomes a fixed symbol.
    """
    if c.lag != 0:
        raise DimensionError("power_cocycle needs a lag-0 cocycle; apply one_sided_reduction first")
    if length == 1:
        return c, enumerate_words(c.shift, 1)
    spec, blocks = block_power(c.shift, length)
    depth = 1 + ceil((c.depth - 1) / length)
    block_words = enumerate_words(spec, depth)
    original = blocks[block_words].reshape(block_words.shape[0], depth * length)
    prod, scale = log_products(c, original, length)
    mats = prod * np.exp(scale)[:, None, None]
    table = np.broadcast_to(np.identity(c.dimension), (spec.k ** depth, c.dimension, c.dimension)).copy()
    table[encode_words(block_words, spec.k)] = mats
    return MatrixCocycle(spec, c.dimension, depth, table, c.holder_exponent * length, 0, c.name), blocks


# --- fiber bunching and distortion ---------------------------------------------------------

@dataclass(frozen=True)
class FiberBunchingReport:
    margin: float
    bunched: bool
    rows: List[Dict[str, float]]


def fiber_bunching_margin(c: MatrixCocycle) -> FiberBunchingReport:
    """min over generator windows of 2^θ − ‖A‖‖A⁻¹‖; positive iff fiber-bunched."""
    words = c.windows()
    s = np.linalg.svd(c.table[c.window_codes()], compute_uv=False)
    condition = s[:, 0] / s[:, -1]
    margins = 2.0 ** c.holder_exponent - condition
    rows = [
        {"word": format_word(w), "condition": float(cn), "margin": float(mg)}
        for w, cn, mg in zip(words_as_tuples(words), condition, margins)
    ]
    margin = float(margins.min())
    return FiberBunchingReport(margin, margin > 0, rows)


def require_fiber_bunched(c: MatrixCocycle) -> FiberBunchingReport:
    report = fiber_bunching_margin(c)
    if not report.bunched:
        raise FiberBunchingError("cocycle is not fiber-bunched", margin=report.margin,
                                 holder_exponent=c.holder_exponent)
    return report


@dataclass(frozen=True)
class DistortionReport:
    constant: float
    per_length: List[Tuple[int, float]]


def distortion_constant(c: MatrixCocycle, n_max: int) -> DistortionReport:
    """C = max over n ≤ n_max and I ∈ Σ_n of ‖𝒜ⁿ(x)‖/‖𝒜ⁿ(y)‖ for x, y ∈ [I]."""
    rows = []
    for n in range(1, n_max + 1):
        _, hi, lo = cylinder_log_norms(c, n)
        rows.append((n, float(np.exp(np.max(hi - lo)))))
    constant = max(v for _, v in rows)
    log.debug("distortion_table", rows=rows)
    return DistortionReport(constant, rows)


# --- holonomies ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolonomyResult:
    matrix: np.ndarray
    iterations: int
    cauchy_residual: float
    residuals: List[float] = field(default_factory=list)
    holder_ratio: float = 0.0


def _holonomy_ratio(c: MatrixCocycle, h: np.ndarray, x: SequencePoint, y: SequencePoint) -> float:
    dist = word_distance(x, y, two_sided=True)
    excess = float(np.linalg.norm(h - np.identity(c.dimension), 2))
    if dist == 0.0:
        return 0.0 if excess < 1e-12 else float("inf")
    return excess / dist ** c.holder_exponent


def _iterate_holonomy(
    c: MatrixCocycle,
    x_window: Callable[[int], Word],
    y_window: Callable[[int], Word],
    settle: int,
    tol: float,
    max_iter: int,
    left: bool,
) -> HolonomyResult:
    d = c.dimension
    px = np.identity(d)
    py = np.identity(d)
    h = np.identity(d)
    residuals: List[float] = []
    if settle > max_iter:
        raise ConvergenceError("holonomy did not converge", iterations=max_iter, settle=settle)
    for n in range(1, max_iter + 1):
        wx, wy = x_window(n), y_window(n)
        ax, ay = c.generator(wx), c.generator(wy)
        if left:
            px, py = ax @ px, ay @ py
        else:
            px, py = px @ ax, py @ ay
        scale = float(np.abs(py).max())
        px, py = px / scale, py / scale
        if wx == wy:
            new = h
        elif left:
            new = np.linalg.solve(py, px)
        else:
            new = py @ np.linalg.inv(px)
        residual = float(np.linalg.norm(new - h, 2))
        residuals.append(residual)
        h = new
        if n >= settle and residual < tol:
            return HolonomyResult(h, n, residual, residuals)
    raise ConvergenceError("holonomy did not converge", iterations=max_iter, residuals=residuals[-5:])


def stable_holonomy(
    c: MatrixCocycle,
    x: SequencePoint,
    y: SequencePoint,
    tol: float = 1e-12,
    max_iter: int = HOLONOMY_MAX_ITER,
    require_bunching: bool = False,
) -> HolonomyResult:
    """
    H^s_{y←x} = lim 𝒜ⁿ(y)⁻¹𝒜ⁿ(x) for y on the stable set of x.

    Raises:
        StableSetError: the forward orbits never merge
        FiberBunchingError: require_bunching and the margin is not positive
        ConvergenceError: no convergence within max_iter steps
    """
    if require_bunching:
        require_fiber_bunched(c)
    sync = x.sync_index(y)
    if sync is None:
        raise StableSetError("points are not on a common stable set")
    # step n reads the window at position n-1; windows agree from position sync+lag on
    settle = max(1, sync + c.lag + 1)
    result = _iterate_holonomy(
        c, lambda n: c.window_at(x, n - 1), lambda n: c.window_at(y, n - 1), settle, tol, max_iter, left=True
    )
    log.debug("stable_holonomy", iterations=result.iterations, residuals=result.residuals)
    return HolonomyResult(result.matrix, result.iterations, result.cauchy_residual, result.residuals,
                          _holonomy_ratio(c, result.matrix, x, y))


def unstable_holonomy(
    c: MatrixCocycle,
    x: SequencePoint,
    y: SequencePoint,
    tol: float = 1e-12,
    max_iter: int = HOLONOMY_MAX_ITER,
    require_bunching: bool = False,
) -> HolonomyResult:
    """H^u_{y←x} = lim 𝒜^{-n}(y)⁻¹𝒜^{-n}(x) for y on the unstable set of x."""
    if require_bunching:
        require_fiber_bunched(c)
    unsync = x.unsync_index(y)
    if unsync is None:
        raise StableSetError("points are not on a common unstable set")
    # step n reads the window at position -n, whose last index is -n-lag+depth-1
    settle = max(1, c.depth - c.lag - unsync)
    result = _iterate_holonomy(
        c, lambda n: c.window_at(x, -n), lambda n: c.window_at(y, -n), settle, tol, max_iter, left=False
    )
    return HolonomyResult(result.matrix, result.iterations, result.cauchy_residual, result.residuals,
                          _holonomy_ratio(c, result.matrix, x, y))


@dataclass(frozen=True)
class HomoclinicPoint:
    periodic: SequencePoint
    point: SequencePoint
    steps: int


def homoclinic_point(spec: SubshiftSpec, p: Sequence[int], insert: Sequence[int], offset: int,
                     margin: int = 4) -> HomoclinicPoint:
    """
    z agrees with p^∞ (p_0 at index 0) except on indices offset ..
    offset+|insert|-1, where it reads `insert`. steps is the smallest
    multiple of |p| that moves the insert into the past.
    """
    p, insert = tuple(p), tuple(insert)
    if not spec.is_cyclic(p):
        raise InadmissibleWordError(f"{format_word(p)} is not cyclically admissible")
    if offset < 1 or not insert:
        raise InadmissibleWordError("homoclinic insert needs offset >= 1 and a non-empty word")
    period = len(p)
    steps = period * ceil((offset + len(insert)) / period)
    reps = ceil((steps + margin) / period) + 1
    lo = -reps * period
    base = p * (2 * reps + ceil(steps / period))
    z = list(base)
    for j, s in enumerate(insert):
        z[offset + j - lo] = s
    z = tuple(z)
    if not spec.is_admissible(z):
        raise InadmissibleWordError(
            f"insert {format_word(insert)} at offset {offset} does not fit into {format_word(p)}^∞"
        )
    if z == base:
        raise InadmissibleWordError("insert reproduces the periodic orbit")
    return HomoclinicPoint(SequencePoint(spec, base, lo), SequencePoint(spec, z, lo), steps)


def holonomy_loop(
    c: MatrixCocycle,
    p: Sequence[int],
    insert: Sequence[int],
    offset: int,
    tol: float = 1e-12,
) -> np.ndarray:
    """
    H̃_p^z = 𝒜^{-n}(p) · H^s_{p←σⁿz} · 𝒜ⁿ(z) · H^u_{z←p}, with n a multiple
    of the period so that σⁿp = p. For one-step cocycles both holonomies are
    the identity and H̃ = 𝒜ⁿ(p)⁻¹𝒜ⁿ(z).
    """
    margin = c.depth + c.lag + 4
    hp = homoclinic_point(c.shift, p, insert, offset, margin=margin)
    n = hp.steps
    h_u = unstable_holonomy(c, hp.periodic, hp.point, tol).matrix
    along = evaluate_point(c, hp.point, n)
    h_s = stable_holonomy(c, hp.point.shifted(n), hp.periodic.shifted(n), tol).matrix
    back = np.linalg.inv(evaluate_point(c, hp.periodic, n))
    return back @ h_s @ along @ h_u


# --- slowest direction ----------------------------------------------------------------------

@dataclass(frozen=True)
class SlowestDirection:
    direction: ProjPoint
    image: ProjPoint
    gap: float
    unreliable: bool
    stability: float
    log_norm: float


def _point_product(c: MatrixCocycle, x: SequencePoint, n: int) -> Tuple[np.ndarray, float]:
    ext = np.array([x.window(-c.lag, n + c.depth - 1 - c.lag)])
    prod, scale = log_products(c, ext, n)
    return prod[0], float(scale[0])


def slowest_direction(c: MatrixCocycle, x: SequencePoint, n: int,
                      lookahead: int = STABILITY_LOOKAHEAD) -> SlowestDirection:
    """
    ξ = bottom singular direction of 𝒜_*^{-n}(x), i.e. the most expanded
    direction of 𝒜ⁿ(x). image is 𝒜_*^{-n}(x)ξ normalised. stability is
    d_P(ξ_n, ξ_{n+lookahead}).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p, scale = _point_product(c, x, n)
    u, s, vt = oriented_svd(p)
    xi = vt[0]
    adj_inv_xi = np.linalg.solve(p.T, xi)
    image = adj_inv_xi / np.linalg.norm(adj_inv_xi)
    later, _ = _point_product(c, x, n + lookahead)
    xi_later = oriented_svd(later)[2][0]
    gap = float(s[1] / s[0])
    return SlowestDirection(
        direction=ProjPoint(xi),
        image=ProjPoint(image),
        gap=gap,
        unreliable=gap >= DEGENERATE_GAP,
        stability=proj_distance(xi, xi_later),
        log_norm=float(np.log(s[0]) + scale),
    )


# --- one-sided reduction ------------------------------------------------------------------------

@dataclass(frozen=True)
class OneSidedReduction:
    cocycle: MatrixCocycle
    original: MatrixCocycle

    def conjugacy(self, x: SequencePoint) -> np.ndarray:
        """𝒞(x) = H^s_{x_η←x}."""
        if self.original.lag == 0:
            return np.identity(self.original.dimension)
        return stable_holonomy(self.original, x, x.canonical_past()).matrix

    def defect(self, x: SequencePoint) -> float:
        """Relative size of 𝒜̂(x)𝒞(x) − 𝒞(σx)𝒜(x)."""
        left = self.cocycle.generator_at(x) @ self.conjugacy(x)
        right = self.conjugacy(x.shifted(1)) @ self.original.generator_at(x)
        return float(np.linalg.norm(left - right, 2) / np.linalg.norm(right, 2))


def one_sided_reduction(c: MatrixCocycle) -> OneSidedReduction:
    """
    Replace the past of every point by the canonical past of x_0:
    𝒜̂(x) = H^s_{(σx)_η←σ(x_η)}·𝒜(x_η), a lag-0 cocycle of the same depth
    conjugate to 𝒜 through 𝒞.
    """
    if c.lag == 0:
        return OneSidedReduction(c, c)
    table = np.broadcast_to(np.identity(c.dimension), c.table.shape).copy()
    for window, code in zip(words_as_tuples(c.windows()), c.window_codes()):
        x = SequencePoint(c.shift, window, 0)
        x_eta = x.canonical_past()
        a = c.generator_at(x_eta)
        h = stable_holonomy(c, x_eta.shifted(1), x.shifted(1).canonical_past()).matrix
        table[code] = h @ a
    reduced = MatrixCocycle(c.shift, c.dimension, c.depth, table, c.holder_exponent, 0, c.name)
    return OneSidedReduction(reduced, c)
