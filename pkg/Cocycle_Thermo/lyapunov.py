"""
Lyapunov exponents of cylinder measures: Monte Carlo orbit products,
QR spectra, the pressure-derivative identity and large-deviation tails.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import optimize
from scipy.stats import linregress

from .cocycle import MatrixCocycle, canonical_extension, log_norms, log_products
from .errors import ConfigError, ConvergenceError
from .gibbs import CylinderMeasure, gibbs_measure
from .pressure import log_partition_sum
from .symbolic import SymbolPotential, Word, encode_words, prefix_index, suffix_index
from .transfer import GFunction, GridSpec, operator_geometry, ruelle_g, spectral_triple

log = structlog.get_logger(__name__)

MIN_TRIALS = 30
QR_EVERY = 10
TRIAL_CHUNK = 256
RESAMPLE_ATTEMPTS = 10


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    std_error: float
    trials: int
    orbit_length: int
    method: str

    def row(self) -> Dict[str, object]:
        return {"method": self.method, "value": self.value, "std_error": self.std_error,
                "trials": self.trials, "n": self.orbit_length}


# --- sampling ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledWords:
    words: np.ndarray
    bias_bound: float
    resampled: int = 0


def _trial_uniforms(seed: int, trials: int, n: int, salt: int = 0) -> np.ndarray:
    """Independent Philox streams per trial, spawned from one SeedSequence."""
    children = np.random.SeedSequence([seed, salt]).spawn(trials)
    return np.stack([np.random.Generator(np.random.Philox(ch)).random(n) for ch in children])


def _conditional_bias(mu: CylinderMeasure) -> float:
    """
    Largest change of P(a | w) when the oldest symbol of the context is
    dropped, at the deepest known context length.
    """
    D = mu.depth
    if D < 2:
        return float("nan")
    words_d, words_c = mu.words(D), mu.words(D - 1)
    parent = mu.level(D - 1)[prefix_index(words_d, words_c, mu.spec.k)]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond_d = np.where(parent > 0, mu.level(D) / parent, np.nan)
    if D == 2:
        shorter = mu.level(1)[words_d[:, -1]]
    else:
        tail = suffix_index(words_d, words_c, mu.spec.k)
        short_parent = mu.level(D - 2)[prefix_index(words_c, mu.words(D - 2), mu.spec.k)]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond_c = np.where(short_parent > 0, mu.level(D - 1) / short_parent, np.nan)
        shorter = cond_c[tail]
    diff = np.abs(cond_d - shorter)
    return float(np.nanmax(diff)) if np.isfinite(diff).any() else float("nan")


def _sample_rows(mu: CylinderMeasure, n: int, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sequential conditional sampling; returns (words, ok) where ok marks rows that never hit zero mass."""
    trials = u.shape[0]
    spec = mu.spec
    out = np.zeros((trials, n), dtype=np.int64)
    ok = np.ones(trials, dtype=bool)

    cum1 = np.cumsum(mu.level(1))
    idx = np.minimum(np.searchsorted(cum1, u[:, 0] * cum1[-1], side="right"), cum1.size - 1)
    out[:, 0] = mu.words(1)[idx, 0]

    D = mu.depth
    for i in range(1, n):
        length = min(i, D - 1) if D >= 2 else 0
        if length == 0:
            # depth-1 measure: weights μ([a]) restricted to allowed successors
            w = mu.level(1)[None, :] * spec.transitions[out[:, i - 1]]
            mass = w.sum(axis=1)
            ok &= mass > 0
            cum = np.cumsum(w, axis=1)
            pick = (cum <= (u[:, i] * mass)[:, None]).sum(axis=1)
            out[:, i] = np.minimum(pick, spec.k - 1)
            continue
        ctx_words = mu.words(length)
        child_words = mu.words(length + 1)
        parent = prefix_index(child_words, ctx_words, spec.k)
        ctx = out[:, i - length:i]
        ctx_idx = np.searchsorted(
            encode_words(ctx_words, spec.k), encode_words(ctx, spec.k)
        )
        mass = mu.level(length)[ctx_idx]
        ok &= mass > 0
        cum = np.cumsum(mu.level(length + 1))
        start = np.searchsorted(parent, ctx_idx, side="left")
        stop = np.searchsorted(parent, ctx_idx, side="right")
        base = np.where(start > 0, cum[np.maximum(start - 1, 0)], 0.0)
        target = base + u[:, i] * mass
        j = np.searchsorted(cum, target, side="right")
        j = np.clip(j, start, np.maximum(stop - 1, start))
        out[:, i] = child_words[j, -1]
    return out, ok


def sample_words(mu: CylinderMeasure, n: int, trials: int, seed: int) -> SampledWords:
    """
    `trials` words of length n from μ: symbol a follows I with probability
    μ([Ia])/μ([I]); past the measure's depth the context is the last
    depth − 1 symbols. Rows that reach a zero-mass context are redrawn from
    fresh streams.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = _trial_uniforms(seed, trials, n)
    words, ok = _sample_rows(mu, n, u)
    resampled = 0
    for attempt in range(1, RESAMPLE_ATTEMPTS + 1):
        if ok.all():
            break
        bad = np.flatnonzero(~ok)
        resampled += bad.size
        log.warning("zero_mass_prefix_resampled", rows=int(bad.size), attempt=attempt)
        redo, redo_ok = _sample_rows(mu, n, _trial_uniforms(seed, bad.size, n, salt=attempt))
        words[bad] = redo
        ok[bad] = redo_ok
    else:
        if not ok.all():
            raise ConvergenceError("sampling kept hitting zero-mass cylinders", rows=int((~ok).sum()))
    bias = _conditional_bias(mu) if n > mu.depth else 0.0
    return SampledWords(words, bias, resampled)


def sample_word(mu: CylinderMeasure, n: int, seed: int) -> Word:
    return tuple(int(s) for s in sample_words(mu, n, 1, seed).words[0])


# --- Monte Carlo exponents ------------------------------------------------------------------

def _chunked(fn: Callable[[np.ndarray], np.ndarray], rows: np.ndarray, workers: int) -> np.ndarray:
    chunks = [rows[i:i + TRIAL_CHUNK] for i in range(0, rows.shape[0], TRIAL_CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(ch) for ch in chunks]
    return np.concatenate(parts)


def orbit_log_norms(c: MatrixCocycle, words: np.ndarray, workers: int = 1) -> np.ndarray:
    """(1/n) log ‖𝒜ⁿ‖ at the canonical point of each sampled word."""
    n = words.shape[1]

    def run(chunk: np.ndarray) -> np.ndarray:
        prod, scale = log_products(c, canonical_extension(c, chunk), n)
        return log_norms(prod, scale) / n

    return _chunked(run, words, workers)


def _check_trials(trials: int) -> None:
    if trials < MIN_TRIALS:
        raise ConfigError(f"Monte Carlo estimates need at least {MIN_TRIALS} trials, got {trials}")


def _estimate(values: np.ndarray, n: int, method: str) -> LyapunovEstimate:
    std = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return LyapunovEstimate(float(np.mean(values)), std, int(values.size), n, method)


def top_lyapunov_mc(c: MatrixCocycle, mu: CylinderMeasure, n: int, trials: int, seed: int,
                    workers: int = 1) -> LyapunovEstimate:
    _check_trials(trials)
    sampled = sample_words(mu, n, trials, seed)
    est = _estimate(orbit_log_norms(c, sampled.words, workers), n, "mc-top")
    log.info("top_lyapunov_mc", value=est.value, std_error=est.std_error, n=n, trials=trials,
             bias_bound=sampled.bias_bound)
    return est


def _qr_exponents(c: MatrixCocycle, ext: np.ndarray, n: int) -> np.ndarray:
    rows, d = ext.shape[0], c.dimension
    basis = np.broadcast_to(np.identity(d), (rows, d, d)).copy()
    acc = np.zeros((rows, d))
    for i in range(n):
        basis = c.table[encode_words(ext[:, i:i + c.depth], c.shift.k)] @ basis
        if (i + 1) % QR_EVERY == 0 or i == n - 1:
            q, r = np.linalg.qr(basis)
            diag = np.diagonal(r, axis1=1, axis2=2)
            acc += np.log(np.abs(diag))
            basis = q
    return -np.sort(-acc / n, axis=1)


def lyapunov_spectrum_mc(c: MatrixCocycle, mu: CylinderMeasure, n: int, trials: int, seed: int,
                         workers: int = 1) -> List[LyapunovEstimate]:
    """All d exponents by re-orthonormalising the orbit product every few steps."""
    _check_trials(trials)
    sampled = sample_words(mu, n, trials, seed)
    values = _chunked(lambda ch: _qr_exponents(c, canonical_extension(c, ch), n), sampled.words, workers)
    return [_estimate(values[:, i], n, "mc-spectrum-qr") for i in range(c.dimension)]


# --- pressure derivative -------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeCheck:
    spectral: float
    cylinder: float
    lyapunov: LyapunovEstimate
    discrepancy: float
    outside_t_max: bool = False


def _cylinder_pressure(c: MatrixCocycle, t: float, n: int, psi: SymbolPotential) -> float:
    return log_partition_sum(c, t, n, psi) - log_partition_sum(c, t, n - 1, psi)


def pressure_derivative_check(
    c: MatrixCocycle,
    psi: Optional[SymbolPotential],
    t: float,
    h_step: float,
    grid: GridSpec,
    mu: Optional[CylinderMeasure] = None,
    g: Optional[GFunction] = None,
    n_cylinder: int = 12,
    depth: int = 8,
    n_orbit: int = 200,
    trials: int = 200,
    seed: int = 0,
    t_max: Optional[float] = None,
) -> DerivativeCheck:
    """
    P′(t) by central differences of log ρ_t and of the cylinder pressure,
    compared with λ₁(μ_t) by Monte Carlo. With t_max given, a stencil
    reaching past it is logged and flagged on the result.

    Raises:
        SpectralGapError: from any of the three spectral solves
    """
    psi = psi or SymbolPotential.zero(c.shift)
    outside = t_max is not None and abs(t) + h_step > t_max
    if outside:
        log.warning("derivative_outside_t_max", t=t, h_step=h_step, t_max=t_max)
    g = g or ruelle_g(c.shift, psi)
    geometry = operator_geometry(c, g, grid)
    lo = spectral_triple(c, g, t - h_step, grid, geometry=geometry)
    hi = spectral_triple(c, g, t + h_step, grid, geometry=geometry)
    spectral = (hi.log_rho - lo.log_rho) / (2 * h_step)
    cylinder = (_cylinder_pressure(c, t + h_step, n_cylinder, psi)
                - _cylinder_pressure(c, t - h_step, n_cylinder, psi)) / (2 * h_step)
    if mu is None:
        mu = gibbs_measure(spectral_triple(c, g, t, grid, geometry=geometry), c, g, depth)
    lam = top_lyapunov_mc(c, mu, n_orbit, trials, seed)
    discrepancy = max(abs(spectral - lam.value), abs(cylinder - lam.value))
    log.info("pressure_derivative_check", t=t, spectral=spectral, cylinder=cylinder, lyapunov=lam.value,
             discrepancy=discrepancy)
    return DerivativeCheck(float(spectral), float(cylinder), lam, float(discrepancy), outside)


# --- large deviations ----------------------------------------------------------------------

@dataclass(frozen=True)
class LdReport:
    rows: List[Tuple[int, float]]
    rate: float
    r_squared: float
    reference: float
    eps: float


def ld_diagnostic(
    c: MatrixCocycle,
    mu: CylinderMeasure,
    eps: float,
    n_list: Sequence[int],
    trials: int,
    seed: int,
    reference: Optional[float] = None,
    workers: int = 1,
) -> LdReport:
    """
    Fraction of trials with |(1/n) log‖𝒜ⁿ‖ − λ₁| ≥ eps for each n, and the
    decay rate fitted to log(fraction) against n. rate = inf when no trial
    ever exceeds.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    _check_trials(trials)
    n_list = sorted(int(n) for n in n_list)
    if reference is None:
        reference = top_lyapunov_mc(c, mu, max(n_list), trials, seed + 1, workers).value
    rows = []
    for n in n_list:
        sampled = sample_words(mu, n, trials, seed + 1000 * n)
        values = orbit_log_norms(c, sampled.words, workers)
        rows.append((n, float(np.mean(np.abs(values - reference) >= eps))))
    positive = [(n, f) for n, f in rows if f > 0]
    if not positive:
        return LdReport(rows, float("inf"), 1.0, float(reference), eps)
    if len(positive) < 2:
        return LdReport(rows, float("nan"), 0.0, float(reference), eps)
    fit = linregress([n for n, _ in positive], np.log([f for _, f in positive]))
    return LdReport(rows, float(-fit.slope), float(fit.rvalue ** 2), float(reference), eps)


def cramer_rate(values: Sequence[float], probs: Sequence[float], level: float) -> float:
    """I(x) = sup_θ [θx − log Σ p_i e^{θ v_i}] for an i.i.d. sum of values with weights probs."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    if level < v.min() - 1e-15 or level > v.max() + 1e-15:
        return float("inf")

    def negative(theta: float) -> float:
        shift = theta * v
        top = shift.max()
        return -(theta * level - (top + np.log(np.sum(p * np.exp(shift - top)))))

    res = optimize.minimize_scalar(negative)
    return float(max(0.0, -res.fun))


# --- curves ---------------------------------------------------------------------------------

def lyapunov_curve(
    c: MatrixCocycle,
    t_grid: Sequence[float],
    grid: GridSpec,
    psi: Optional[SymbolPotential] = None,
    depth: int = 8,
    n: int = 200,
    trials: int = 100,
    seed: int = 0,
) -> List[Dict[str, float]]:
    """λ_i(μ_t) along t, for inspection."""
    psi = psi or SymbolPotential.zero(c.shift)
    g = ruelle_g(c.shift, psi)
    geometry = operator_geometry(c, g, grid)
    rows = []
    for t in t_grid:
        mu = gibbs_measure(spectral_triple(c, g, t, grid, geometry=geometry), c, g, depth)
        spectrum = lyapunov_spectrum_mc(c, mu, n, trials, seed)
        row: Dict[str, float] = {"t": float(t)}
        for i, est in enumerate(spectrum, start=1):
            row[f"lambda_{i}"] = est.value
            row[f"std_error_{i}"] = est.std_error
        rows.append(row)
    return rows
