"""
Cylinder measures: the Gibbs candidate μ_t built from a spectral triple,
reference measures, and the Gibbs / invariance / equilibrium / mixing checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import special
from scipy.stats import linregress

from .cocycle import MatrixCocycle, canonical_extension, cylinder_log_norms, log_norms, log_products
from .errors import DimensionError, DiscretizationError, InadmissibleWordError
from .pressure import cylinder_log_weights, empirical_entropy, log_partition_sum, psi_sup_sums
from .symbolic import (
    SubshiftSpec,
    SymbolPotential,
    encode_words,
    enumerate_words,
    extend_with_tail,
    format_word,
    prefix_index,
    suffix_index,
)
from .transfer import GFunction, SpectralTriple

log = structlog.get_logger(__name__)

LEVEL_DEFECT_LIMIT = 1e-3
PAIR_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class CylinderMeasure:
    """Weights of every n-cylinder, n ≤ depth, aligned with enumerate_words(spec, n)."""

    spec: SubshiftSpec
    depth: int
    levels: Dict[int, np.ndarray]
    pressure_const: float = 0.0
    defects: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_top(cls, spec: SubshiftSpec, depth: int, top: np.ndarray, pressure_const: float = 0.0,
                 defects: Optional[Dict[int, float]] = None) -> "CylinderMeasure":
        """Lower levels are the marginals of the top level, so the family is consistent."""
        top = np.asarray(top, dtype=float)
        words = {n: enumerate_words(spec, n) for n in range(1, depth + 1)}
        if words[depth].shape[0] != top.size:
            raise DimensionError(f"{top.size} weights do not match the {words[depth].shape[0]} words of length {depth}")
        levels = {depth: top / top.sum()}
        for n in range(depth - 1, 0, -1):
            idx = prefix_index(words[n + 1], words[n], spec.k)
            levels[n] = np.bincount(idx, weights=levels[n + 1], minlength=words[n].shape[0])
        return cls(spec, depth, levels, pressure_const, dict(defects or {}))

    def level(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.depth:
            raise ValueError(f"measure is known on lengths 1..{self.depth}, asked for {n}")
        return self.levels[n]

    def words(self, n: int) -> np.ndarray:
        return enumerate_words(self.spec, n)

    def weight(self, word: Sequence[int]) -> float:
        word = tuple(word)
        if not self.spec.is_admissible(word):
            return 0.0
        n = len(word)
        codes = encode_words(self.words(n), self.spec.k)
        i = int(np.searchsorted(codes, encode_words(np.array([word]), self.spec.k)[0]))
        return float(self.level(n)[i])

    def rows(self, n: int) -> List[Dict[str, object]]:
        return [{"n": n, "word": format_word(w), "weight": float(v)} for w, v in zip(self.words(n), self.level(n))]


# --- reference measures ---------------------------------------------------------------------

def bernoulli_measure(spec: SubshiftSpec, probs: Sequence[float], depth: int) -> CylinderMeasure:
    p = np.asarray(probs, dtype=float)
    if not spec.is_full_shift:
        raise DimensionError("Bernoulli measures need the full shift")
    if p.shape != (spec.k,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
        raise DimensionError("Bernoulli weights must be k nonnegative numbers summing to 1")
    words = enumerate_words(spec, depth)
    return CylinderMeasure.from_top(spec, depth, np.prod(p[words], axis=1))


def markov_measure(spec: SubshiftSpec, transition: np.ndarray, depth: int) -> CylinderMeasure:
    """Stationary Markov measure of a stochastic matrix supported on Q."""
    P = np.asarray(transition, dtype=float)
    if P.shape != (spec.k, spec.k) or np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
        raise DimensionError("transition matrix must be k×k and row-stochastic")
    if ((P > 0) & (spec.transitions == 0)).any():
        raise InadmissibleWordError("transition matrix charges a forbidden transition")
    vals, vecs = np.linalg.eig(P.T)
    pi = np.abs(np.real(vecs[:, np.argmin(np.abs(vals - 1.0))]))
    pi /= pi.sum()
    words = enumerate_words(spec, depth)
    weights = pi[words[:, 0]]
    for i in range(depth - 1):
        weights = weights * P[words[:, i], words[:, i + 1]]
    return CylinderMeasure.from_top(spec, depth, weights)


def periodic_orbit_measure(spec: SubshiftSpec, p: Sequence[int], depth: int) -> CylinderMeasure:
    """Uniform measure on the orbit of p^∞; a point mass when |p| = 1."""
    p = tuple(p)
    if not spec.is_cyclic(p):
        raise InadmissibleWordError(f"{format_word(p)} is not cyclically admissible")
    words = enumerate_words(spec, depth)
    codes = encode_words(words, spec.k)
    weights = np.zeros(words.shape[0])
    reps = depth // len(p) + 2
    for r in range(len(p)):
        orbit = (p[r:] + p[:r]) * reps
        i = np.searchsorted(codes, encode_words(np.array([orbit[:depth]]), spec.k)[0])
        weights[i] += 1.0 / len(p)
    return CylinderMeasure.from_top(spec, depth, weights)


def partition_measure(c: MatrixCocycle, t: float, n: int, psi: Optional[SymbolPotential] = None) -> CylinderMeasure:
    """μ̃([I]) = e^{S_nψ}‖𝒜(I)‖^t / Z_n on n-cylinders (and its marginals)."""
    _, logw = cylinder_log_weights(c, t, n, psi)
    log_z = float(special.logsumexp(logw))
    return CylinderMeasure.from_top(c.shift, n, np.exp(logw - log_z), pressure_const=log_z / n)


# --- the Gibbs candidate ---------------------------------------------------------------------

def _raw_level(triple: SpectralTriple, c: MatrixCocycle, g: GFunction, n: int) -> np.ndarray:
    """
    ρ^{−n} Σ_{(x,j)} ν(x,j) g^{(n)}(Ix) ‖𝒜ⁿ(Ix)ᵀu_j‖^t h(Ix, 𝒜ⁿ(Ix)ᵀu_j) for every I ∈ Σ_n.
    """
    space, grid = triple.space, triple.space.grid
    spec, d = c.shift, c.dimension
    words = enumerate_words(spec, n)
    states = space.words
    n_grid = grid.size
    nu = space.as_grid(triple.nu)
    h = triple.h
    pair_i, pair_x = np.nonzero(spec.transitions[words[:, -1]][:, states[:, 0]])
    out = np.zeros(words.shape[0])
    log_rho_n = n * np.log(triple.rho)
    for start in range(0, pair_i.size, PAIR_CHUNK):
        ii = pair_i[start:start + PAIR_CHUNK]
        xx = pair_x[start:start + PAIR_CHUNK]
        ext = np.hstack([words[ii], states[xx]])
        log_g = g.log_birkhoff(ext, n)
        prod, scale = log_products(c, ext, n)
        images = np.einsum("pji,nj->pni", prod, grid.points)
        norms = np.linalg.norm(images, axis=2)
        idx, w = grid.interpolate((images / norms[..., None]).reshape(-1, d))
        state = space.word_index(ext[:, :space.word_depth])
        flat = np.repeat(state * n_grid, n_grid)[:, None] + idx
        h_img = (h[flat] * w).sum(axis=1).reshape(ii.size, n_grid)
        log_factor = log_g[:, None] + triple.t * (np.log(norms) + scale[:, None]) - log_rho_n
        contrib = (nu[xx] * np.exp(log_factor) * h_img).sum(axis=1)
        out += np.bincount(ii, weights=contrib, minlength=words.shape[0])
    return out


def gibbs_measure(triple: SpectralTriple, c: MatrixCocycle, g: GFunction, n_max: int,
                  defect_limit: float = LEVEL_DEFECT_LIMIT) -> CylinderMeasure:
    """
    μ_t([I]) = ρ_t^{−|I|} ∫ 𝓛_t^{|I|}(1_{[I]} h_t) dν_t for |I| ≤ n_max.

    Each level is evaluated independently; its mass defect and its
    consistency defect against the next level are recorded. The returned
    family is the normalised top level with its marginals.

    Raises:
        DiscretizationError: some level defect exceeds defect_limit
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    spec = c.shift
    raw = {n: _raw_level(triple, c, g, n) for n in range(1, n_max + 1)}
    defects: Dict[int, float] = {}
    for n in range(1, n_max + 1):
        defect = abs(float(raw[n].sum()) - 1.0)
        if n < n_max:
            idx = prefix_index(enumerate_words(spec, n + 1), enumerate_words(spec, n), spec.k)
            marg = np.bincount(idx, weights=raw[n + 1], minlength=raw[n].size)
            defect = max(defect, float(np.max(np.abs(marg - raw[n]))))
        defects[n] = defect
    worst = max(defects.values())
    log.info("gibbs_measure", t=triple.t, n_max=n_max, worst_defect=worst)
    if worst > defect_limit:
        raise DiscretizationError("level defect too large; refine the projective grid", worst=worst,
                                  limit=defect_limit, defects=defects)
    return CylinderMeasure.from_top(spec, n_max, raw[n_max], pressure_const=triple.log_rho, defects=defects)


@dataclass(frozen=True)
class GibbsReport:
    C1: float
    C2: float
    rows: List[Dict[str, float]]
    ratio_drift: float


def gibbs_ratios(mu: CylinderMeasure, c: MatrixCocycle, g: GFunction, triple: SpectralTriple, n: int) -> np.ndarray:
    """μ([I]) / (ρ^{−n} g^{(n)}(y) ‖𝒜ⁿ(y)‖^t) at the canonical point y of each n-cylinder."""
    words = enumerate_words(c.shift, n)
    ext = canonical_extension(c, words)
    ext = extend_with_tail(c.shift, ext, max(0, n + g.depth - 1 - ext.shape[1]))
    prod, scale = log_products(c, ext, n)
    log_ref = -n * triple.log_rho + g.log_birkhoff(ext, n) + triple.t * log_norms(prod, scale)
    return mu.level(n) * np.exp(-log_ref)


def check_gibbs_bounds(mu: CylinderMeasure, c: MatrixCocycle, g: GFunction, triple: SpectralTriple) -> GibbsReport:
    rows = []
    for n in range(1, mu.depth + 1):
        r = gibbs_ratios(mu, c, g, triple, n)
        rows.append({"n": n, "min": float(r.min()), "max": float(r.max())})
    c1 = min(row["min"] for row in rows)
    c2 = max(row["max"] for row in rows)
    drift = 0.0
    if len(rows) >= 2:
        q_prev = rows[-2]["max"] / rows[-2]["min"]
        q_last = rows[-1]["max"] / rows[-1]["min"]
        drift = abs(q_last - q_prev) / q_prev
    return GibbsReport(c1, c2, rows, drift)


def check_invariance(mu: CylinderMeasure) -> float:
    """max over |I| ≤ depth − 1 of |Σ_a μ([aI]) − μ([I])|."""
    if mu.depth < 2:
        raise ValueError("invariance needs a measure of depth >= 2")
    worst = 0.0
    for n in range(1, mu.depth):
        longer, shorter = mu.words(n + 1), mu.words(n)
        idx = suffix_index(longer, shorter, mu.spec.k)
        pulled = np.bincount(idx, weights=mu.level(n + 1), minlength=shorter.shape[0])
        worst = max(worst, float(np.max(np.abs(pulled - mu.level(n)))))
    return worst


@dataclass(frozen=True)
class EquilibriumGap:
    n: int
    gap: float
    entropy: float
    lyapunov: float
    psi_mean: float
    pressure: float


def equilibrium_gap(mu: CylinderMeasure, c: MatrixCocycle, t: float, psi: Optional[SymbolPotential], n: int,
                    pressure: Optional[float] = None) -> EquilibriumGap:
    """
    |h_n(μ) + ∫S_nψ/n dμ + t·λ̂₁(μ,n) − P̂| with λ̂₁(μ,n) = (1/n)Σ μ([I]) log‖𝒜(I)‖
    and P̂ = (1/n) log Z_n unless given.
    """
    if n > mu.depth:
        raise ValueError(f"n={n} exceeds measure depth {mu.depth}")
    psi = psi or SymbolPotential.zero(c.shift)
    weights = mu.level(n)
    _, hi, _ = cylinder_log_norms(c, n)
    lyap = float(weights @ hi) / n
    psi_mean = float(weights @ psi_sup_sums(psi, n)) / n
    entropy = empirical_entropy(mu, n)
    p_hat = log_partition_sum(c, t, n, psi) / n if pressure is None else pressure
    gap = abs(entropy + psi_mean + t * lyap - p_hat)
    return EquilibriumGap(n, gap, entropy, lyap, psi_mean, p_hat)


# --- mixing -----------------------------------------------------------------------------------

def _gap_ratios(mu: CylinderMeasure, li: int, lj: int, gap: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """μ([I] ∩ σ^{−gap−|I|}[J]) / (μ([I])μ([J])) for positive-mass I, J, with their indices."""
    spec = mu.spec
    joined = mu.words(li + gap + lj)
    wi, wj = mu.words(li), mu.words(lj)
    ii = prefix_index(joined, wi, spec.k)
    jj = suffix_index(joined, wj, spec.k)
    joint = np.bincount(ii * wj.shape[0] + jj, weights=mu.level(li + gap + lj),
                        minlength=wi.shape[0] * wj.shape[0]).reshape(wi.shape[0], wj.shape[0])
    denom = np.outer(mu.level(li), mu.level(lj))
    ok = denom > 0
    return joint[ok] / denom[ok], np.nonzero(ok)[0], np.nonzero(ok)[1]


def quasi_bernoulli_constant(mu: CylinderMeasure, L: int) -> float:
    """D = max over |I|, |J| ≤ L with IJ admissible of max(μ(IJ)/(μ(I)μ(J)), inverse)."""
    if 2 * L > mu.depth:
        raise ValueError(f"quasi-Bernoulli check needs depth >= {2 * L}")
    spec = mu.spec
    worst = 1.0
    for li in range(1, L + 1):
        for lj in range(1, L + 1):
            ratios, ii, jj = _gap_ratios(mu, li, lj, 0)
            admissible = spec.transitions[mu.words(li)[ii, -1], mu.words(lj)[jj, 0]] > 0
            r = ratios[admissible]
            if r.size == 0:
                continue
            if (r == 0).any():
                return float("inf")
            worst = max(worst, float(np.max(np.maximum(r, 1.0 / r))))
    return worst


@dataclass(frozen=True)
class MixingReport:
    rows: List[Tuple[int, float]]
    nonincreasing: bool


def psi_mixing_report(mu: CylinderMeasure, L: int, n_gap: int, noise: float = 1e-3) -> MixingReport:
    """sup over |I|, |J| ≤ L of |μ([I] ∩ σ^{−n−|I|}[J]) / (μ([I])μ([J])) − 1| for gaps n = 0 .. n_gap."""
    if 2 * L + n_gap > mu.depth:
        raise ValueError(f"mixing table needs depth >= {2 * L + n_gap}, measure has {mu.depth}")
    rows = []
    for gap in range(n_gap + 1):
        dev = 0.0
        for li in range(1, L + 1):
            for lj in range(1, L + 1):
                ratios, _, _ = _gap_ratios(mu, li, lj, gap)
                if ratios.size:
                    dev = max(dev, float(np.max(np.abs(ratios - 1.0))))
        rows.append((gap, dev))
    devs = [d for _, d in rows]
    nonincreasing = all(b <= a + noise for a, b in zip(devs, devs[1:]))
    return MixingReport(rows, nonincreasing)


def kappa_delta_bounds(mu: CylinderMeasure, k: int, L: Optional[int] = None) -> Tuple[float, float]:
    """
    (κ, δ) = (min, max) of μ([I] ∩ σ^{−k−|I|}[J]) / (μ([I])μ([J])) over |I|, |J| ≤ L.

    k counts the free symbols between I and J, the length of the bridging
    words K in Σ_K μ([IKJ]). Bounds are meant for k ≥ mixing_time; smaller k
    is computed but logged. The cocycle and t enter only through μ.
    """
    if L is None:
        L = max(1, (mu.depth - k) // 2)
    if 2 * L + k > mu.depth:
        raise ValueError(f"bounds need depth >= {2 * L + k}, measure has {mu.depth}")
    if mu.spec.mixing_time is not None and k < mu.spec.mixing_time:
        log.warning("gap_below_mixing_time", k=k, mixing_time=mu.spec.mixing_time)
    kappa, delta = np.inf, 0.0
    for li in range(1, L + 1):
        for lj in range(1, L + 1):
            ratios, _, _ = _gap_ratios(mu, li, lj, k)
            if ratios.size:
                kappa = min(kappa, float(ratios.min()))
                delta = max(delta, float(ratios.max()))
    return float(kappa), float(delta)


@dataclass(frozen=True)
class ComparisonReport:
    rate: float
    constant: float
    rows: List[Tuple[int, float]]


def comparison_rate(mu_t: CylinderMeasure, mu_0: CylinderMeasure) -> ComparisonReport:
    """
    Fit C₀⁻¹R^{−n}μ₀ ≤ μ_t ≤ C₀Rⁿμ₀: R from the slope of max|log μ_t/μ₀|
    against n, C₀ from the largest residual above the fitted line.
    """
    depth = min(mu_t.depth, mu_0.depth)
    rows = []
    for n in range(1, depth + 1):
        a, b = mu_t.level(n), mu_0.level(n)
        ok = (a > 0) & (b > 0)
        rows.append((n, float(np.max(np.abs(np.log(a[ok]) - np.log(b[ok]))))))
    ns = np.array([n for n, _ in rows], dtype=float)
    vals = np.array([v for _, v in rows])
    if ns.size < 2:
        return ComparisonReport(float(np.exp(vals[0])), 1.0, rows)
    slope = max(0.0, float(linregress(ns, vals).slope))
    constant = float(np.exp(max(0.0, float(np.max(vals - slope * ns)))))
    return ComparisonReport(float(np.exp(slope)), constant, rows)
