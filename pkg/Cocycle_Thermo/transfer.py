"""
Ruelle operators.

ruelle_g normalises a symbol potential into a g-function. The projective
transfer operator

    (𝓛_t f)(x, ū) = Σ_{σy = x} g(y) ‖𝒜(y)ᵀu‖^t f(y, 𝒜(y)ᵀu)

is discretised on (admissible words of length M) × (projective grid of N
points) as a sparse matrix whose rows are targets and columns are sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import sparse, special
from scipy.spatial import cKDTree
from scipy.stats import linregress, qmc

from .cocycle import MatrixCocycle, log_products
from .errors import (
    ConvergenceError,
    DegenerateEigenfunctionError,
    DimensionError,
    SpectralGapError,
)
from .projgeom import DEGENERATE_GAP
from .symbolic import SubshiftSpec, SymbolPotential, encode_words, enumerate_words, extend_with_tail

log = structlog.get_logger(__name__)

POWER_TOL = 1e-10
MAX_ITER = 10_000
GAP_FLOOR = 0.05
MIN_GRID = 16
ROW_SUM_TOL = 1e-10
CONCENTRATION_CHUNK = 1024


# --- g-functions ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GFunction:
    """g(y) = values[code(y_0 .. y_{depth-1})]; zero on inadmissible windows."""

    spec: SubshiftSpec
    depth: int
    values: np.ndarray
    pressure_psi: float
    iterations: int = 0

    def at(self, words: np.ndarray) -> np.ndarray:
        words = np.atleast_2d(words)
        return self.values[encode_words(words[:, :self.depth], self.spec.k)]

    def log_birkhoff(self, words: np.ndarray, n: int) -> np.ndarray:
        """log g^{(n)} = Σ_{i<n} log g(σ^i y); rows need n + depth - 1 columns."""
        words = np.atleast_2d(words)
        total = np.zeros(words.shape[0])
        for i in range(n):
            total += np.log(self.values[encode_words(words[:, i:i + self.depth], self.spec.k)])
        return total

    def row_sums(self) -> np.ndarray:
        """Σ_{a: ax admissible} g(ax) for every admissible context x."""
        q = self.spec.transitions.astype(bool)
        k = self.spec.k
        if self.depth == 1:
            return np.array([self.values[q[:, b]].sum() for b in range(k)])
        contexts = enumerate_words(self.spec, self.depth - 1)
        sums = np.zeros(contexts.shape[0])
        for a in range(k):
            ok = q[a, contexts[:, 0]]
            ext = np.hstack([np.full((int(ok.sum()), 1), a), contexts[ok]])
            sums[ok] += self.values[encode_words(ext, k)]
        return sums


def ruelle_g(
    spec: SubshiftSpec,
    psi: Optional[SymbolPotential] = None,
    m: int = 1,
    tol: float = 1e-13,
    max_iter: int = MAX_ITER,
) -> GFunction:
    """
    Leading eigenpair (λ, h) of Λ_ψ f(x) = Σ_{ax admissible} e^{ψ(ax)} f(ax)
    on functions of q = max(m, depth(ψ) − 1, 1) coordinates, found by power
    iteration, and g(y) = e^{ψ(y)} h(y) / (λ h(σy)).

    Raises:
        ConvergenceError: power iteration does not settle within max_iter
    """
    psi = psi or SymbolPotential.zero(spec)
    k, p = spec.k, psi.depth
    q = max(m, p - 1, 1)
    words = enumerate_words(spec, q)
    codes = encode_words(words, k)
    w = words.shape[0]

    rows, cols, data = [], [], []
    for a in range(k):
        ok = np.flatnonzero(spec.transitions[a, words[:, 0]])
        ext = np.hstack([np.full((ok.size, 1), a), words[ok]])
        rows.append(ok)
        cols.append(np.searchsorted(codes, encode_words(ext[:, :q], k)))
        data.append(np.exp(psi.values[encode_words(ext[:, :p], k)]))
    lam_op = sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(w, w))

    h = np.ones(w)
    for it in range(1, max_iter + 1):
        nxt = lam_op @ h
        nxt /= nxt.max()
        change = float(np.max(np.abs(nxt - h)))
        h = nxt
        if change < tol:
            break
    else:
        raise ConvergenceError("potential transfer operator did not converge", iterations=max_iter)
    lam_h = lam_op @ h
    i = int(np.argmax(h))
    lam = float(lam_h[i] / h[i])

    full = enumerate_words(spec, q + 1)
    fcodes = encode_words(full, k)
    values = np.zeros(k ** (q + 1))
    h_head = h[np.searchsorted(codes, encode_words(full[:, :q], k))]
    h_tail = h[np.searchsorted(codes, encode_words(full[:, 1:], k))]
    values[fcodes] = np.exp(psi.values[encode_words(full[:, :p], k)]) * h_head / (lam * h_tail)

    depth, values = _compress(spec, q + 1, values)
    g = GFunction(spec, depth, values, float(np.log(lam)), it)
    defect = float(np.max(np.abs(g.row_sums() - 1.0)))
    if defect > ROW_SUM_TOL:
        raise ConvergenceError("g-function rows do not sum to one", defect=defect)
    log.debug("ruelle_g_done", depth=depth, pressure=g.pressure_psi, iterations=it, row_defect=defect)
    return g


def _compress(spec: SubshiftSpec, depth: int, values: np.ndarray) -> Tuple[int, np.ndarray]:
    """Drop trailing coordinates that g does not depend on."""
    k = spec.k
    while depth > 1:
        words = enumerate_words(spec, depth)
        head = encode_words(words[:, :-1], k)
        vals = values[encode_words(words, k)]
        lo = np.full(k ** (depth - 1), np.inf)
        hi = np.full(k ** (depth - 1), -np.inf)
        np.minimum.at(lo, head, vals)
        np.maximum.at(hi, head, vals)
        seen = np.isfinite(lo)
        if np.any(hi[seen] - lo[seen] > 1e-14 * np.maximum(1.0, hi[seen])):
            break
        values = np.where(seen, lo, 0.0)
        depth -= 1
    return depth, values


# --- grids ----------------------------------------------------------------------------------

def _canonical_rows(points: np.ndarray) -> np.ndarray:
    first = np.argmax(np.abs(points) > 1e-14, axis=1)
    signs = np.sign(points[np.arange(points.shape[0]), first])
    return points * signs[:, None]


@dataclass(frozen=True, eq=False)
class GridSpec:
    dimension: int
    size: int
    m_grid: int
    points: np.ndarray
    tree: Optional[cKDTree] = field(default=None, repr=False)

    def interpolate(self, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Grid indices and weights for each row of vectors: linear in angle on
        two neighbours for d = 2, nearest neighbour otherwise.
        """
        vectors = np.atleast_2d(vectors)
        if self.dimension == 2:
            theta = np.mod(np.arctan2(vectors[:, 1], vectors[:, 0]), np.pi)
            s = theta / (np.pi / self.size)
            base = np.floor(s)
            frac = s - base
            j0 = base.astype(np.int64) % self.size
            j1 = (j0 + 1) % self.size
            return np.stack([j0, j1], axis=1), np.stack([1.0 - frac, frac], axis=1)
        _, idx = self.tree.query(vectors, k=1)
        return (np.asarray(idx) % self.size)[:, None], np.ones((vectors.shape[0], 1))

    def nearest(self, vector: np.ndarray) -> int:
        idx, w = self.interpolate(np.asarray(vector, dtype=float)[None, :])
        return int(idx[0, np.argmax(w[0])])


def build_grid(d: int, n_points: int, m_grid: int = 1) -> GridSpec:
    if d < 2:
        raise DimensionError(f"projective grid needs d >= 2, got {d}")
    if n_points < MIN_GRID:
        raise DimensionError(f"projective grid needs at least {MIN_GRID} points, got {n_points}")
    if m_grid < 1:
        raise DimensionError(f"grid word depth must be >= 1, got {m_grid}")
    if d == 2:
        theta = np.arange(n_points) * np.pi / n_points
        points = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return GridSpec(d, n_points, m_grid, points)
    # 첫 Halton 점은 원점이므로 건너뛴다
    raw = qmc.Halton(d=d, scramble=False).random(n_points + 1)[1:]
    gauss = special.ndtri(np.clip(raw, 1e-12, 1 - 1e-12))
    points = _canonical_rows(gauss / np.linalg.norm(gauss, axis=1, keepdims=True))
    return GridSpec(d, n_points, m_grid, points, cKDTree(np.vstack([points, -points])))


@dataclass(frozen=True, eq=False)
class StateSpace:
    words: np.ndarray
    grid: GridSpec
    alphabet_size: int

    @property
    def n_words(self) -> int:
        return self.words.shape[0]

    @property
    def size(self) -> int:
        return self.n_words * self.grid.size

    @property
    def word_depth(self) -> int:
        return self.words.shape[1]

    def word_index(self, words: np.ndarray) -> np.ndarray:
        k = self.alphabet_size
        return np.searchsorted(encode_words(self.words, k), encode_words(np.atleast_2d(words), k))

    def as_grid(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f).reshape(self.n_words, self.grid.size)


def state_space(c: MatrixCocycle, g: GFunction, grid: GridSpec) -> StateSpace:
    if c.lag != 0:
        raise DimensionError("the transfer operator needs a lag-0 cocycle; apply one_sided_reduction first")
    if grid.dimension != c.dimension:
        raise DimensionError(f"grid dimension {grid.dimension} does not match cocycle dimension {c.dimension}")
    if g.spec is not c.shift and not np.array_equal(g.spec.transitions, c.shift.transitions):
        raise DimensionError("g-function and cocycle live on different subshifts")
    depth = max(grid.m_grid, g.depth - 1, c.depth - 1, 1)
    return StateSpace(enumerate_words(c.shift, depth), grid, c.shift.k)


# --- the operator --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorGeometry:
    """Sparsity pattern of 𝓛_t with the t-independent factors split out."""

    space: StateSpace
    rows: np.ndarray
    cols: np.ndarray
    base: np.ndarray
    log_norm: np.ndarray

    def matrix(self, t: float) -> sparse.csr_matrix:
        data = self.base * np.exp(t * self.log_norm)
        n = self.space.size
        return sparse.csr_matrix((data, (self.rows, self.cols)), shape=(n, n))


def operator_geometry(c: MatrixCocycle, g: GFunction, grid: GridSpec) -> OperatorGeometry:
    space = state_space(c, g, grid)
    spec, k, d = c.shift, c.shift.k, c.dimension
    words, n = space.words, grid.size
    codes = encode_words(words, k)
    depth = space.word_depth
    rows, cols, base, log_norm = [], [], [], []
    for a in range(k):
        sel = np.flatnonzero(spec.transitions[a, words[:, 0]])
        if not sel.size:
            continue
        ext = np.hstack([np.full((sel.size, 1), a), words[sel]])
        source_word = np.searchsorted(codes, encode_words(ext[:, :depth], k))
        g_val = g.values[encode_words(ext[:, :g.depth], k)]
        mats = c.table[encode_words(ext[:, :c.depth], k)]
        # (Aᵀu)_i = Σ_j A_ji u_j
        images = np.einsum("sji,nj->sni", mats, grid.points)
        norms = np.linalg.norm(images, axis=2)
        idx, weights = grid.interpolate((images / norms[..., None]).reshape(-1, d))
        r = idx.shape[1]
        target = (sel[:, None] * n + np.arange(n)[None, :]).reshape(-1)
        source = np.repeat(source_word * n, n)[:, None] + idx
        rows.append(np.repeat(target, r))
        cols.append(source.reshape(-1))
        base.append((np.repeat(g_val, n)[:, None] * weights).reshape(-1))
        log_norm.append(np.repeat(np.log(norms.reshape(-1)), r))
    return OperatorGeometry(space, np.concatenate(rows), np.concatenate(cols),
                            np.concatenate(base), np.concatenate(log_norm))


def operator_matrix(c: MatrixCocycle, g: GFunction, t: float, grid: GridSpec) -> sparse.csr_matrix:
    return operator_geometry(c, g, grid).matrix(t)


def apply_Lt(f: np.ndarray, c: MatrixCocycle, g: GFunction, t: float, grid: GridSpec) -> np.ndarray:
    """One application of the discretised 𝓛_t to a grid function (flat or (words, N))."""
    op = operator_matrix(c, g, t, grid)
    f = np.asarray(f, dtype=float)
    if f.size != op.shape[0]:
        raise DimensionError(f"grid function has {f.size} values, operator acts on {op.shape[0]}")
    return (op @ f.reshape(-1)).reshape(f.shape)


# --- spectral triple -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralTriple:
    t: float
    rho: float
    h: np.ndarray
    nu: np.ndarray
    gap_estimate: float
    iterations: int
    residual: float
    space: StateSpace
    operator: sparse.csr_matrix = field(repr=False)
    converged: bool = True

    @property
    def log_rho(self) -> float:
        return float(np.log(self.rho))

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.gap_estimate

    def row(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "rho": self.rho,
            "log_rho": self.log_rho,
            "gap": self.spectral_gap,
            "iterations": self.iterations,
            "h_min": float(self.h.min()),
            "h_max": float(self.h.max()),
        }


def _iterate(step, x: np.ndarray, normalise, tol: float, max_iter: int) -> Tuple[np.ndarray, List[float], bool]:
    residuals: List[float] = []
    for _ in range(max_iter):
        nxt = normalise(step(x))
        change = float(np.max(np.abs(nxt - x)) / max(np.max(np.abs(nxt)), 1e-300))
        residuals.append(change)
        x = nxt
        if change < tol:
            return x, residuals, True
    return x, residuals, False


def _contraction_ratio(residuals: Sequence[float]) -> float:
    """Geometric decay rate of a residual sequence, 0 when it vanished at once."""
    r = np.asarray(residuals, dtype=float)
    usable = np.flatnonzero(r > 1e-14)
    if usable.size < 3:
        return 0.0
    tail = usable[usable.size // 2:] if usable.size >= 6 else usable
    fit = linregress(tail.astype(float), np.log(r[tail]))
    return float(np.clip(np.exp(fit.slope), 0.0, 1.0))


def spectral_triple(
    c: MatrixCocycle,
    g: GFunction,
    t: float,
    grid: GridSpec,
    tol: float = POWER_TOL,
    max_iter: int = MAX_ITER,
    gap_floor: float = GAP_FLOOR,
    geometry: Optional[OperatorGeometry] = None,
) -> SpectralTriple:
    """
    (ρ_t, h_t, ν_t) by forward and adjoint power iteration, normalised so
    that ν has mass 1 and ∫h dν = 1.

    Raises:
        SpectralGapError: the estimated gap is below gap_floor or an iteration
            did not converge; the partially computed triple rides along
    """
    geometry = geometry or operator_geometry(c, g, grid)
    op = geometry.matrix(t)
    size = geometry.space.size
    op_t = op.T.tocsr()

    h, res_h, ok_h = _iterate(lambda x: op @ x, np.ones(size), lambda x: x / np.max(np.abs(x)), tol, max_iter)
    nu, res_nu, ok_nu = _iterate(lambda x: op_t @ x, np.full(size, 1.0 / size), lambda x: x / x.sum(), tol, max_iter)

    lh = op @ h
    rho = float(nu @ lh / (nu @ h))
    h = h / float(nu @ h)
    residual = float(np.max(np.abs(op @ h - rho * h)))
    ratio = max(_contraction_ratio(res_h), _contraction_ratio(res_nu))
    iterations = max(len(res_h), len(res_nu))
    converged = ok_h and ok_nu
    triple = SpectralTriple(float(t), rho, h, nu, ratio, iterations, residual, geometry.space, op, converged)

    log.info("spectral_triple", t=t, rho=rho, gap=1.0 - ratio, iterations=iterations, residual=residual)
    if not converged:
        raise SpectralGapError("power iteration did not converge", t=t, iterations=iterations, partial=triple)
    if 1.0 - ratio < gap_floor:
        raise SpectralGapError("spectral gap below floor", t=t, gap=1.0 - ratio, floor=gap_floor, partial=triple)
    return triple


def h_bounds_check(triple: SpectralTriple, rel_floor: float = 1e-14) -> Tuple[float, float]:
    """(min h, max h); the minimum must be positive relative to the maximum."""
    h_min, h_max = float(triple.h.min()), float(triple.h.max())
    if h_min <= rel_floor * h_max:
        raise DegenerateEigenfunctionError("eigenfunction is not bounded away from zero", h_min=h_min, h_max=h_max,
                                           t=triple.t)
    log.debug("h_bounds", t=triple.t, h_min=h_min, h_max=h_max, ratio=h_max / h_min)
    return h_min, h_max


@dataclass(frozen=True)
class TMaxScan:
    t_max: float
    rows: List[Dict[str, float]]


def scan_t_max(
    c: MatrixCocycle,
    g: GFunction,
    grid: GridSpec,
    t_grid: Sequence[float],
    gap_floor: float = GAP_FLOOR,
    tol: float = POWER_TOL,
    max_iter: int = MAX_ITER,
) -> TMaxScan:
    """Largest |t| such that every scanned t' with |t'| ≤ |t| converges with gap ≥ floor."""
    geometry = operator_geometry(c, g, grid)
    rows = []
    for t in sorted(t_grid, key=lambda s: (abs(s), s)):
        try:
            triple = spectral_triple(c, g, t, grid, tol, max_iter, gap_floor, geometry)
            rows.append({"t": float(t), "gap": triple.spectral_gap, "ok": True})
        except SpectralGapError as e:
            partial = e.partial
            rows.append({"t": float(t), "gap": partial.spectral_gap if partial else float("nan"), "ok": False})
    t_max = 0.0
    for row in rows:
        if not row["ok"]:
            break
        t_max = max(t_max, abs(row["t"]))
    log.info("t_max_scan", t_max=t_max, points=len(rows))
    return TMaxScan(t_max, rows)


# --- diagnostics -----------------------------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationReport:
    fraction: Optional[float]
    reliable: bool
    eps: float
    n_slow: int
    n_push: int


def _slowest_directions(c: MatrixCocycle, words: np.ndarray, n_slow: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top right singular direction of 𝒜^{n_slow} at the canonical point of each row, with its gap."""
    ext = extend_with_tail(c.shift, words, n_slow + c.depth - 1 - words.shape[1])
    prod, _ = log_products(c, ext, n_slow)
    _, s, vt = np.linalg.svd(prod)
    return vt[:, 0, :], s[:, 1] / s[:, 0]


def concentration_diagnostic(triple: SpectralTriple, c: MatrixCocycle, n_slow: int = 30,
                             eps: float = 0.05, g: Optional[GFunction] = None,
                             n_push: int = 8) -> ConcentrationReport:
    """
    ν_t mass within eps of the graph (x, ξ_*(x)).

    The fibre of ν over a state word mixes every x in its cylinder, so the
    mass is read through ν(f) = ρ⁻ⁿ ν(𝓛ⁿf): each state (w, u) is pushed
    along every admissible prefix K of length n_push to (Kw, 𝒜ⁿ(Kw)ᵀu) and
    compared with ξ_* at the canonical point of Kw. n_push = 0 compares
    the grid directly. g defaults to the g-function of ψ ≡ 0.
    """
    if n_push < 0:
        raise ValueError("n_push must be >= 0")
    g = g or ruelle_g(c.shift)
    space, grid = triple.space, triple.space.grid
    spec, d = c.shift, c.dimension
    states = space.words
    nu = space.as_grid(triple.nu)
    if n_push == 0:
        prefixes = np.zeros((1, 0), dtype=np.int64)
        pair_i, pair_x = np.zeros(states.shape[0], dtype=np.int64), np.arange(states.shape[0])
    else:
        prefixes = enumerate_words(spec, n_push)
        pair_i, pair_x = np.nonzero(spec.transitions[prefixes[:, -1]][:, states[:, 0]])

    total, near = 0.0, 0.0
    for start in range(0, pair_i.size, CONCENTRATION_CHUNK):
        ii = pair_i[start:start + CONCENTRATION_CHUNK]
        xx = pair_x[start:start + CONCENTRATION_CHUNK]
        ext = np.hstack([prefixes[ii], states[xx]])
        xi, gaps = _slowest_directions(c, ext, n_slow)
        if np.any(gaps >= DEGENERATE_GAP):
            log.info("concentration_unreliable", worst_gap=float(gaps.max()))
            return ConcentrationReport(None, False, eps, n_slow, n_push)
        if n_push:
            log_g = g.log_birkhoff(ext, n_push)
            prod, scale = log_products(c, ext, n_push)
            images = np.einsum("pji,nj->pni", prod, grid.points)
            norms = np.linalg.norm(images, axis=2)
            weight = nu[xx] * np.exp(log_g[:, None] + triple.t * (np.log(norms) + scale[:, None])
                                     - n_push * triple.log_rho)
            directions = images / norms[..., None]
        else:
            weight = nu[xx]
            directions = np.broadcast_to(grid.points, (xx.size, grid.size, d))
        # |sin| between unit vectors
        cos = np.abs(np.einsum("pni,pi->pn", directions, xi))
        dist = np.sqrt(np.clip(1.0 - cos ** 2, 0.0, None))
        total += float(weight.sum())
        near += float(weight[dist <= eps].sum())
    fraction = near / total
    log.info("concentration", t=triple.t, n_push=n_push, fraction=fraction)
    return ConcentrationReport(fraction, True, eps, n_slow, n_push)


@dataclass(frozen=True)
class DecayProfile:
    errors: List[float]
    rate: float
    r_squared: float


def decay_profile(triple: SpectralTriple, f: np.ndarray, n_steps: int = 40) -> DecayProfile:
    """‖ρ^{−n}𝓛ⁿf − ⟨f,ν⟩h‖∞ for n = 1 .. n_steps and its fitted geometric rate."""
    f = np.asarray(f, dtype=float).reshape(-1)
    target = float(triple.nu @ f) * triple.h
    x = f
    errors = []
    for _ in range(n_steps):
        x = (triple.operator @ x) / triple.rho
        errors.append(float(np.max(np.abs(x - target))))
    e = np.asarray(errors)
    usable = np.flatnonzero(e > 1e-13)
    if usable.size < 3:
        return DecayProfile(errors, 0.0, 1.0)
    fit = linregress(usable.astype(float), np.log(e[usable]))
    return DecayProfile(errors, float(np.exp(fit.slope)), float(fit.rvalue ** 2))


@dataclass(frozen=True)
class SkewMeasure:
    mass: np.ndarray
    defect: float


def invariant_skew_measure(triple: SpectralTriple) -> SkewMeasure:
    """
    m_t = h·ν and its invariance defect under the Markov kernel
    P[s, s'] = 𝓛[s, s'] h(s') / (ρ h(s)), which moves (x, u) to (y, 𝒜(y)ᵀu).
    """
    m = triple.h * triple.nu
    weighted = triple.operator.T @ (triple.nu)
    pushed = triple.h * weighted / triple.rho
    return SkewMeasure(m, float(np.abs(pushed - m).sum()))
