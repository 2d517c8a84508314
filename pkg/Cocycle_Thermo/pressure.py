"""
Topological pressure of tΦ_𝒜 + ψ from cylinder partition sums.

    Z_n(t) = Σ_{I ∈ Σ_n} sup_{[I]} e^{S_nψ} · ‖𝒜(I)‖^t

All sums are taken in the log domain. Brackets come from the one-step
recoding of the cocycle, where Z_n is exactly sub- or super-multiplicative.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import optimize, special
from scipy.stats import qmc

from .cocycle import (
    MatrixCocycle,
    block_recode,
    cylinder_log_norms,
    exterior_power,
    log_norms,
    log_products,
    one_sided_reduction,
)
from .symbolic import (
    SubshiftSpec,
    SymbolPotential,
    encode_words,
    enumerate_words,
    format_word,
    higher_block,
    iter_word_chunks,
    prefix_index,
    suffix_index,
    word_count_by_matrix,
)

log = structlog.get_logger(__name__)

PRESSURE_TOL = 1e-4
BRACKET_WORD_LIMIT = 1 << 15
ANGLE_GRID = 180
SPHERE_POINTS = 256


# --- potentials ------------------------------------------------------------------

def potential_pressure(psi: SymbolPotential) -> float:
    """P(σ, ψ) as log of the Perron root of e^ψ(u)·Q_block[u, v]."""
    spec = psi.spec
    if psi.depth == 1:
        q, vals = spec.transitions, psi.values
    else:
        block_spec, blocks = higher_block(spec, psi.depth)
        q, vals = block_spec.transitions, psi.values[encode_words(blocks, spec.k)]
    m = q.astype(float) * np.exp(vals)[:, None]
    return float(np.log(np.max(np.abs(np.linalg.eigvals(m)))))


def psi_sup_sums(psi: SymbolPotential, n: int) -> np.ndarray:
    """sup over [I] of S_nψ, for I ∈ Σ_n in lexicographic order."""
    words = enumerate_words(psi.spec, n)
    if psi.depth == 1:
        return psi.birkhoff_sums(words, n)
    refined = enumerate_words(psi.spec, n + psi.depth - 1)
    sums = psi.birkhoff_sums(refined, n)
    out = np.full(words.shape[0], -np.inf)
    np.maximum.at(out, prefix_index(refined, words, psi.spec.k), sums)
    return out


def cylinder_log_weights(c: MatrixCocycle, t: float, n: int,
                         psi: Optional[SymbolPotential] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Σ_n and log(sup e^{S_nψ} · ‖𝒜(I)‖^t) per word."""
    psi = psi or SymbolPotential.zero(c.shift)
    words, hi, _ = cylinder_log_norms(c, n)
    return words, psi_sup_sums(psi, n) + t * hi


# --- partition sums ----------------------------------------------------------------

def _chunk_log_sum(c: MatrixCocycle, psi: SymbolPotential, t: float, n: int, chunk: np.ndarray) -> float:
    prod, scale = log_products(c, chunk, n)
    return float(special.logsumexp(psi.birkhoff_sums(chunk, n) + t * log_norms(prod, scale)))


def log_partition_sum(c: MatrixCocycle, t: float, n: int, psi: Optional[SymbolPotential] = None,
                      workers: int = 1) -> float:
    """log Z_n. One-step data is summed chunk by chunk, in a fixed order."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    psi = psi or SymbolPotential.zero(c.shift)
    if not (c.is_one_step and psi.depth == 1):
        _, logw = cylinder_log_weights(c, t, n, psi)
        return float(special.logsumexp(logw))
    chunks = list(iter_word_chunks(c.shift, n))
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ch: _chunk_log_sum(c, psi, t, n, ch), chunks))
    else:
        parts = [_chunk_log_sum(c, psi, t, n, ch) for ch in chunks]
    return float(special.logsumexp(np.array(parts)))


def partition_sum(c: MatrixCocycle, t: float, n: int, psi: Optional[SymbolPotential] = None,
                  workers: int = 1) -> float:
    return float(np.exp(log_partition_sum(c, t, n, psi, workers)))


# --- brackets ------------------------------------------------------------------------

@dataclass(frozen=True)
class _OneStepSystem:
    cocycle: MatrixCocycle
    psi: SymbolPotential


def _one_step_system(c: MatrixCocycle, psi: SymbolPotential) -> _OneStepSystem:
    if c.lag:
        c = one_sided_reduction(c).cocycle
    depth = max(c.depth, psi.depth)
    if depth == 1:
        return _OneStepSystem(c, psi)
    rec, blocks = block_recode(c.with_depth(depth))
    values = psi.with_depth(depth).values[encode_words(blocks, c.shift.k)]
    return _OneStepSystem(rec, SymbolPotential(rec.shift, 1, values, psi.kind))


def _directions(d: int) -> np.ndarray:
    """Columns are unit directions covering P(R^d)."""
    if d == 2:
        theta = np.arange(ANGLE_GRID) * np.pi / ANGLE_GRID
        return np.vstack([np.cos(theta), np.sin(theta)])
    pts = qmc.Halton(d=d, scramble=False).random(SPHERE_POINTS + 1)[1:]
    gauss = special.ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    return (gauss / np.linalg.norm(gauss, axis=1, keepdims=True)).T


def _log_w(logw_words: np.ndarray, prod: np.ndarray, scale: np.ndarray, t: float, v: np.ndarray) -> float:
    v = v / np.linalg.norm(v)
    norms = np.linalg.norm(prod @ v, axis=1)
    return float(special.logsumexp(logw_words + t * (np.log(norms) + scale)))


def _extreme_log_w(system: _OneStepSystem, t: float, n: int, minimise: bool) -> float:
    """min (or max) over first symbols a and directions v of log W_n(a, v)."""
    c, psi = system.cocycle, system.psi
    words = enumerate_words(c.shift, n)
    prod, scale = log_products(c, words, n)
    sums = psi.birkhoff_sums(words, n)
    if t == 0:
        per_a = [special.logsumexp(sums[c.shift.transitions[a, words[:, 0]] > 0]) for a in range(c.shift.k)]
        return float(min(per_a) if minimise else max(per_a))

    dirs = _directions(c.dimension)
    norms = np.linalg.norm(prod @ dirs, axis=1)
    table = sums[:, None] + t * (np.log(norms) + scale[:, None])
    sign = 1.0 if minimise else -1.0
    best = (np.inf, 0, 0)
    for a in range(c.shift.k):
        mask = c.shift.transitions[a, words[:, 0]] > 0
        vals = sign * special.logsumexp(table[mask], axis=0)
        j = int(np.argmin(vals))
        if vals[j] < best[0]:
            best = (float(vals[j]), a, j)

    value, a, j = best
    mask = c.shift.transitions[a, words[:, 0]] > 0
    sub_prod, sub_scale, sub_sums = prod[mask], scale[mask], sums[mask]
    if c.dimension == 2:
        step = np.pi / ANGLE_GRID
        theta0 = j * step

        def objective(theta: float) -> float:
            return sign * _log_w(sub_sums, sub_prod, sub_scale, t, np.array([np.cos(theta), np.sin(theta)]))

        res = optimize.minimize_scalar(objective, bounds=(theta0 - step, theta0 + step), method="bounded")
    else:
        res = optimize.minimize(lambda v: sign * _log_w(sub_sums, sub_prod, sub_scale, t, v),
                                dirs[:, j], method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
    refined = min(value, float(res.fun))
    return sign * refined


def _bridge_log_weight(system: _OneStepSystem, t: float) -> Tuple[int, float]:
    c, psi = system.cocycle, system.psi
    k = (c.shift.mixing_time or 1) - 1
    if k == 0:
        return 0, 0.0
    words = enumerate_words(c.shift, k)
    prod, scale = log_products(c, words, k)
    return k, float(np.min(psi.birkhoff_sums(words, k) + t * log_norms(prod, scale)))


def pressure_bracket(c: MatrixCocycle, t: float, n_max: int,
                     psi: Optional[SymbolPotential] = None) -> Tuple[float, float]:
    """
    (lower, upper) for P(σ, tΦ_𝒜 + ψ) from word lengths up to n_max.

    t ≥ 0: Z_n is submultiplicative (upper = inf log Z_n / n) and
    min_{a,v} W_n(a,v) = Σ_{J after a} e^{S_nψ}‖𝒜(J)v‖^t supermultiplicative.
    t < 0: Z_{n+k+m} ≥ b·Z_n·Z_m through bridges of length k, and
    max_{a,v} W_n(a,v) is submultiplicative.
    """
    psi = psi or SymbolPotential.zero(c.shift)
    system = _one_step_system(c, psi)
    spec = system.cocycle.shift
    lengths = [n for n in range(1, n_max + 1) if n == 1 or word_count_by_matrix(spec, n) <= BRACKET_WORD_LIMIT]
    lower, upper = -np.inf, np.inf
    if t >= 0:
        for n in lengths:
            upper = min(upper, log_partition_sum(system.cocycle, t, n, system.psi) / n)
            lower = max(lower, _extreme_log_w(system, t, n, minimise=True) / n)
    else:
        k, log_b = _bridge_log_weight(system, t)
        for n in lengths:
            lower = max(lower, (log_partition_sum(system.cocycle, t, n, system.psi) + log_b) / (n + k))
            upper = min(upper, _extreme_log_w(system, t, n, minimise=False) / n)
    if lower > upper + 1e-12:
        log.warning("pressure_bracket_crossed", t=t, lower=lower, upper=upper)
    return float(lower), float(upper)


# --- estimates -------------------------------------------------------------------------

@dataclass(frozen=True)
class PressureEstimate:
    t: float
    values: List[Tuple[int, float]]
    bracket: Optional[Tuple[float, float]]
    converged: bool
    estimate: float
    log_z: List[float] = field(default_factory=list)

    @property
    def last(self) -> float:
        return self.values[-1][1]

    def rows(self) -> List[Dict[str, object]]:
        lower, upper = self.bracket if self.bracket else (None, None)
        return [
            {"t": self.t, "n": n, "log_Zn_over_n": v, "lower": lower, "upper": upper, "converged": self.converged}
            for n, v in self.values
        ]


def pressure_estimate(
    c: MatrixCocycle,
    t: float,
    n_max: int,
    psi: Optional[SymbolPotential] = None,
    tol: float = PRESSURE_TOL,
    with_bracket: bool = True,
    workers: int = 1,
) -> PressureEstimate:
    """
    (1/n)log Z_n for n ≤ n_max with a bracket. The point estimate is
    log Z_n − log Z_{n−1} kept inside the bracket; at t = 0 it is the
    Perron value of ψ.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    psi = psi or SymbolPotential.zero(c.shift)
    log_z = [log_partition_sum(c, t, n, psi, workers) for n in range(1, n_max + 1)]
    values = [(n, lz / n) for n, lz in zip(range(1, n_max + 1), log_z)]
    converged = abs(values[-1][1] - values[-2][1]) < tol

    bracket = pressure_bracket(c, t, n_max, psi) if with_bracket else None
    if t == 0:
        estimate = potential_pressure(psi)
    else:
        estimate = log_z[-1] - log_z[-2]
        if bracket is not None:
            estimate = float(np.clip(estimate, bracket[0], bracket[1]))
    log.debug("pressure_estimate", t=t, n_max=n_max, estimate=estimate, bracket=bracket, converged=converged)
    return PressureEstimate(float(t), values, bracket, converged, float(estimate), log_z)


def pressure_curve(
    c: MatrixCocycle,
    t_grid: Sequence[float],
    n: int,
    psi: Optional[SymbolPotential] = None,
    with_bracket: bool = True,
    workers: int = 1,
) -> List[PressureEstimate]:
    curve = [pressure_estimate(c, float(t), n, psi, with_bracket=with_bracket, workers=workers) for t in t_grid]
    log.info("pressure_curve_done", points=len(curve), n=n)
    return curve


def pressure_derivative(curve: Sequence[PressureEstimate]) -> List[Tuple[float, float]]:
    """dP/dt by second-order differences on the (possibly uneven) t grid."""
    if len(curve) < 2:
        raise ValueError("need at least two points for a derivative")
    ts = np.array([p.t for p in curve])
    ps = np.array([p.estimate for p in curve])
    return [(float(t), float(dp)) for t, dp in zip(ts, np.gradient(ps, ts))]


def exterior_pressure(c: MatrixCocycle, k: int, t: float, n: int,
                      psi: Optional[SymbolPotential] = None) -> PressureEstimate:
    """Pressure of tΦ for the k-th exterior power cocycle."""
    return pressure_estimate(exterior_power(c, k), t, n, psi)


# --- quasi-multiplicativity -----------------------------------------------------------------

@dataclass(frozen=True)
class QmReport:
    k: int
    c: float
    witness: Optional[Dict[str, object]]
    pairs_tested: int
    missing_bridges: List[Tuple[str, str]] = field(default_factory=list)


def quasi_mult_search(c: MatrixCocycle, k: int, L: int) -> QmReport:
    """
    c = min over admissible I, J with |I|, |J| ≤ L of
    max_{|K| = k} ‖𝒜(IKJ)‖ / (‖𝒜(I)‖‖𝒜(J)‖). Pairs without a bridge of
    length k give c = 0 and are listed.
    """
    spec = c.shift
    if spec.mixing_time is not None and k < spec.mixing_time - 1:
        log.warning("bridge_length_below_mixing_time", k=k, mixing_time=spec.mixing_time)
    norms = {n: cylinder_log_norms(c, n) for n in range(1, 2 * L + k + 1)}
    best = (np.inf, None)
    pairs = 0
    missing: List[Tuple[str, str]] = []
    for li in range(1, L + 1):
        words_i, hi_i, _ = norms[li]
        for lj in range(1, L + 1):
            words_j, hi_j, _ = norms[lj]
            joined, hi_joined, _ = norms[li + k + lj]
            ii = prefix_index(joined, words_i, spec.k)
            jj = suffix_index(joined, words_j, spec.k)
            code = ii * words_j.shape[0] + jj
            ratio = hi_joined - hi_i[ii] - hi_j[jj]
            per_pair = np.full(words_i.shape[0] * words_j.shape[0], -np.inf)
            np.maximum.at(per_pair, code, ratio)
            pairs += per_pair.size
            empty = np.flatnonzero(np.isneginf(per_pair))
            for e in empty:
                missing.append((format_word(words_i[e // words_j.shape[0]]), format_word(words_j[e % words_j.shape[0]])))
            pick = int(np.argmin(per_pair))
            if per_pair[pick] < best[0]:
                rows = np.flatnonzero(code == pick)
                witness = None
                if rows.size:
                    r = rows[np.argmax(ratio[rows])]
                    witness = {
                        "I": format_word(joined[r, :li]),
                        "K": format_word(joined[r, li:li + k]),
                        "J": format_word(joined[r, li + k:]),
                    }
                else:
                    witness = {
                        "I": format_word(words_i[pick // words_j.shape[0]]),
                        "K": None,
                        "J": format_word(words_j[pick % words_j.shape[0]]),
                    }
                best = (float(per_pair[pick]), witness)
    log_c, witness = best
    value = float(np.exp(log_c))
    if witness is not None:
        witness["ratio"] = value
    if missing:
        log.info("quasi_mult_missing_bridges", k=k, count=len(missing))
    return QmReport(k, value, witness, pairs, missing)


def empirical_entropy(mu, n: int) -> float:
    """−(1/n) Σ_{|I|=n} μ([I]) log μ([I])."""
    return float(special.entr(np.asarray(mu.level(n), dtype=float)).sum() / n)
