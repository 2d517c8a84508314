"""
Pinching and twisting checks at periodic / homoclinic pairs, and the search
for a witnessing pair.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .cocycle import MatrixCocycle, exterior_power, holonomy_loop, periodic_product
from .errors import ConvergenceError, DimensionError, InadmissibleWordError, StableSetError
from .symbolic import Word, enumerate_words, format_word, lyndon_words, words_as_tuples

log = structlog.get_logger(__name__)

INDEPENDENCE_TOL = 1e-8
MODULUS_SEPARATION = 1e-8
EIGENBASIS_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class PinchingResult:
    holds: bool
    moduli: List[float]
    reason: str = ""
    basis: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"holds": self.holds, "moduli": self.moduli, "reason": self.reason}


@dataclass(frozen=True)
class TwistingResult:
    holds: bool
    margin: float
    worst_family: Tuple[Tuple[int, ...], Tuple[int, ...]]

    def to_dict(self) -> Dict[str, Any]:
        fam = [[i + 1 for i in self.worst_family[0]], [j + 1 for j in self.worst_family[1]]]
        return {"holds": self.holds, "margin": self.margin, "worst_family": fam}


@dataclass(frozen=True)
class TypicalityPair:
    periodic: Word
    insert: Word
    offset: int

    def describe(self) -> Dict[str, Any]:
        return {"p": format_word(self.periodic), "insert": format_word(self.insert), "offset": self.offset}


@dataclass
class TypicalityReport:
    typical: bool
    pair: Optional[TypicalityPair] = None
    pinching: Optional[PinchingResult] = None
    twisting: Optional[TwistingResult] = None
    per_exterior_power: List[Dict[str, Any]] = field(default_factory=list)
    search_log: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "typical": self.typical,
            "pair": self.pair.describe() if self.pair else None,
            "pinching": self.pinching.to_dict() if self.pinching else None,
            "twisting": self.twisting.to_dict() if self.twisting else None,
            "per_exterior_power": self.per_exterior_power,
            "candidates_tried": len(self.search_log),
            "search_log": self.search_log,
        }


def check_pinching(c: MatrixCocycle, p: Sequence[int], separation: float = MODULUS_SEPARATION) -> PinchingResult:
    """
    A(p) = 𝒜^{|p|}(p^∞) must have real simple eigenvalues with pairwise
    distinct moduli. basis holds unit eigenvectors ordered by decreasing modulus.
    """
    a = periodic_product(c, p)
    eigvals, eigvecs = np.linalg.eig(a)
    order = np.argsort(-np.abs(eigvals), kind="stable")
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    moduli = [float(v) for v in np.abs(eigvals)]

    if np.any(np.abs(eigvals.imag) > 1e-12 * np.abs(eigvals)):
        return PinchingResult(False, moduli, "complex eigenvalues")
    rel_gaps = (np.abs(eigvals[:-1]) - np.abs(eigvals[1:])) / np.abs(eigvals[:-1])
    if rel_gaps.min() <= separation:
        return PinchingResult(False, moduli, "eigenvalue moduli not separated")
    basis = eigvecs.real / np.linalg.norm(eigvecs.real, axis=0)
    if np.linalg.cond(basis) > EIGENBASIS_CONDITION_LIMIT:
        return PinchingResult(False, moduli, "defective eigenbasis")
    return PinchingResult(True, moduli, "", basis)


def _family_margin(columns: np.ndarray) -> float:
    cols = columns / np.linalg.norm(columns, axis=0)
    return float(np.linalg.svd(cols, compute_uv=False)[-1])


def check_twisting(
    c: MatrixCocycle,
    p: Sequence[int],
    insert: Sequence[int],
    offset: int,
    basis: Optional[np.ndarray] = None,
    tol: float = INDEPENDENCE_TOL,
) -> TwistingResult:
    """
    {H̃ v_i : i ∈ I} ∪ {v_j : j ∈ J} must be linearly independent for all
    non-empty I, J with |I| + |J| ≤ d. margin is the worst smallest singular
    value of the column-normalised families; it is diagnostic only.

    Raises:
        DimensionError: pinching fails at p, so there is no eigenbasis
    """
    if basis is None:
        pinching = check_pinching(c, p)
        if not pinching.holds:
            raise DimensionError(f"no eigenbasis at {format_word(p)}: {pinching.reason}")
        basis = pinching.basis
    loop = holonomy_loop(c, p, insert, offset)
    moved = loop @ basis
    d = c.dimension
    worst = (np.inf, ((), ()))
    for size_i in range(1, d):
        for size_j in range(1, d - size_i + 1):
            for I in combinations(range(d), size_i):
                for J in combinations(range(d), size_j):
                    margin = _family_margin(np.hstack([moved[:, I], basis[:, J]]))
                    if margin < worst[0]:
                        worst = (margin, (I, J))
    margin, family = worst
    return TwistingResult(bool(margin > tol), float(margin), family)


def _candidate_pairs(c: MatrixCocycle, period_cap: int, insert_cap: int):
    for p in lyndon_words(c.shift, period_cap):
        for length in range(1, insert_cap + 1):
            for insert in words_as_tuples(enumerate_words(c.shift, length)):
                for offset in range(1, len(p) + 1):
                    yield p, insert, offset


def _search(cocycles: List[MatrixCocycle], period_cap: int, insert_cap: int, tol: float) -> TypicalityReport:
    if period_cap < 1 or insert_cap < 1:
        raise ValueError("search caps must be >= 1")
    base = cocycles[0]
    search_log: List[Dict[str, Any]] = []
    pinching_cache: Dict[Word, List[PinchingResult]] = {}
    last: Tuple[Optional[PinchingResult], Optional[TwistingResult]] = (None, None)

    for p, insert, offset in _candidate_pairs(base, period_cap, insert_cap):
        if p not in pinching_cache:
            pinching_cache[p] = [check_pinching(k, p) for k in cocycles]
            if not all(r.holds for r in pinching_cache[p]):
                failed = next(r for r in pinching_cache[p] if not r.holds)
                search_log.append({"p": format_word(p), "pinching": False, "reason": failed.reason})
                last = (failed, None)
        pinchings = pinching_cache[p]
        if not all(r.holds for r in pinchings):
            continue

        entry: Dict[str, Any] = {"p": format_word(p), "insert": format_word(insert), "offset": offset, "pinching": True}
        try:
            twistings = [check_twisting(k, p, insert, offset, r.basis, tol) for k, r in zip(cocycles, pinchings)]
        except InadmissibleWordError as e:
            entry["skipped"] = e.message
            search_log.append(entry)
            continue
        except (ConvergenceError, StableSetError) as e:
            entry["skipped"] = e.message
            log.warning("twisting_check_failed", **{k: v for k, v in entry.items() if k != "skipped"}, error=e.message)
            search_log.append(entry)
            continue

        entry["twisting"] = all(r.holds for r in twistings)
        entry["margin"] = min(r.margin for r in twistings)
        search_log.append(entry)
        last = (pinchings[0], twistings[0])
        if entry["twisting"]:
            pair = TypicalityPair(p, insert, offset)
            per_power = [
                {"power": i + 1, "pinching": pr.to_dict(), "twisting": tw.to_dict()}
                for i, (pr, tw) in enumerate(zip(pinchings, twistings))
            ]
            log.info("typicality_witness", **pair.describe(), margin=entry["margin"])
            return TypicalityReport(True, pair, pinchings[0], twistings[0], per_power, search_log)

    log.info("typicality_not_found", period_cap=period_cap, insert_cap=insert_cap, candidates=len(search_log))
    return TypicalityReport(False, None, last[0], last[1], [], search_log)


def is_one_typical(c: MatrixCocycle, period_cap: int = 3, insert_cap: int = 3,
                   tol: float = INDEPENDENCE_TOL) -> TypicalityReport:
    """First (p, z) in search order at which pinching and twisting both hold."""
    return _search([c], period_cap, insert_cap, tol)


def is_typical(c: MatrixCocycle, period_cap: int = 3, insert_cap: int = 3,
               tol: float = INDEPENDENCE_TOL) -> TypicalityReport:
    """Every 𝒜^{∧t}, 1 ≤ t ≤ d−1, must be 1-typical at one common pair."""
    powers = [exterior_power(c, t) for t in range(1, c.dimension)]
    return _search(powers, period_cap, insert_cap, tol)
