"""
Subshifts of finite type: admissible words, cylinders, bridging words,
canonical tails and the symbolic metric.

Symbols are 0-based integers internally and 1-based in text ("1211").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .errors import (
    DegenerateSubshiftError,
    DimensionError,
    InadmissibleWordError,
    NotMixingError,
)

log = structlog.get_logger(__name__)

Word = Tuple[int, ...]

MIXING_TIME_CAP = 64


@dataclass(frozen=True, eq=False)
class SubshiftSpec:
    alphabet_size: int
    transitions: np.ndarray
    mixing_time: Optional[int]
    successor: Tuple[int, ...] = field(repr=False)
    predecessor: Tuple[int, ...] = field(repr=False)

    @property
    def k(self) -> int:
        return self.alphabet_size

    @property
    def is_full_shift(self) -> bool:
        return bool(self.transitions.all())

    def allows(self, a: int, b: int) -> bool:
        return bool(self.transitions[a, b])

    def is_admissible(self, word: Sequence[int]) -> bool:
        w = np.asarray(word, dtype=np.int64)
        if w.size == 0:
            return True
        if w.min() < 0 or w.max() >= self.alphabet_size:
            return False
        return bool(self.transitions[w[:-1], w[1:]].all())

    def require_admissible(self, word: Sequence[int]) -> Word:
        w = tuple(int(s) for s in word)
        if not self.is_admissible(w):
            raise InadmissibleWordError(f"inadmissible word {format_word(w)}", word=format_word(w))
        return w

    def is_cyclic(self, word: Sequence[int]) -> bool:
        """word 를 주기로 반복한 수열이 허용되는지 여부."""
        return len(word) > 0 and self.is_admissible(word) and self.allows(word[-1], word[0])

    def tail(self, last: int, length: int) -> Word:
        out = []
        s = last
        for _ in range(length):
            s = self.successor[s]
            out.append(s)
        return tuple(out)

    def past(self, first: int, length: int) -> Word:
        """first 앞에 붙는 정규 과거. 인덱스가 증가하는 순서로 반환."""
        out = []
        s = first
        for _ in range(length):
            s = self.predecessor[s]
            out.append(s)
        return tuple(reversed(out))


def build_subshift(transitions, cap: int = MIXING_TIME_CAP) -> SubshiftSpec:
    """
    Validate a 0/1 transition matrix and compute its mixing time.

    Raises:
        DimensionError: non-square input or k < 2
        DegenerateSubshiftError: entries outside {0,1}, or an empty row/column
        NotMixingError: Q^n has a zero entry for every n <= cap
    """
    q = np.asarray(transitions)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionError(f"transition matrix must be square, got shape {q.shape}")
    k = q.shape[0]
    if k < 2:
        raise DimensionError(f"alphabet size must be at least 2, got {k}")
    if not np.isin(q, (0, 1)).all():
        raise DegenerateSubshiftError("transition matrix entries must be 0 or 1")
    q = q.astype(np.int8)
    empty_rows = np.flatnonzero(q.sum(axis=1) == 0)
    empty_cols = np.flatnonzero(q.sum(axis=0) == 0)
    if empty_rows.size or empty_cols.size:
        raise DegenerateSubshiftError(
            "transition matrix has an empty row or column",
            rows=[int(r) + 1 for r in empty_rows],
            columns=[int(c) + 1 for c in empty_cols],
        )
    q.setflags(write=False)

    mixing = _mixing_time(q, cap)
    if mixing is None:
        raise NotMixingError(f"transition matrix is not primitive within {cap} steps", cap=cap)

    successor = tuple(int(np.flatnonzero(q[a])[0]) for a in range(k))
    predecessor = tuple(int(np.flatnonzero(q[:, a])[0]) for a in range(k))
    return SubshiftSpec(k, q, mixing, successor, predecessor)


def _mixing_time(q: np.ndarray, cap: int) -> Optional[int]:
    step = q.astype(np.int64)
    power = step.copy()
    for n in range(1, cap + 1):
        if (power > 0).all():
            return n
        power = ((power @ step) > 0).astype(np.int64)
    return None


def full_shift(k: int = 2) -> SubshiftSpec:
    return build_subshift(np.ones((k, k), dtype=np.int8))


def golden_mean_shift() -> SubshiftSpec:
    return build_subshift([[1, 1], [1, 0]])


# --- words ------------------------------------------------------------------

def parse_word(text: str) -> Word:
    """'1211' 또는 '10,2,3' 형식의 1-based 문자열을 0-based 튜플로 변환."""
    text = text.strip()
    if not text:
        return ()
    parts = text.split(",") if "," in text else list(text)
    try:
        symbols = tuple(int(p) - 1 for p in parts)
    except ValueError as e:
        raise InadmissibleWordError(f"cannot parse word {text!r}") from e
    if any(s < 0 for s in symbols):
        raise InadmissibleWordError(f"symbols are 1-based, got {text!r}")
    return symbols


def format_word(word: Sequence[int]) -> str:
    symbols = [int(s) + 1 for s in word]
    if any(s >= 10 for s in symbols):
        return ",".join(str(s) for s in symbols)
    return "".join(str(s) for s in symbols)


def encode_words(words: np.ndarray, k: int) -> np.ndarray:
    """Base-k code of each row; lexicographic order is code order."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    codes = np.zeros(words.shape[0], dtype=np.int64)
    for col in range(words.shape[1]):
        codes = codes * k + words[:, col]
    return codes


def enumerate_words(spec: SubshiftSpec, n: int) -> np.ndarray:
    """
    All admissible words of length n as rows of an (W, n) integer array,
    in lexicographic order.

    Extension is iterative: each round appends the allowed successors of
    the last column, so memory stays proportional to the output.
    """
    if n < 1:
        raise ValueError(f"word length must be >= 1, got {n}")
    q = spec.transitions.astype(bool)
    words = np.arange(spec.k, dtype=np.int64)[:, None]
    for _ in range(n - 1):
        rows, nxt = np.nonzero(q[words[:, -1]])
        words = np.hstack([words[rows], nxt[:, None]])
    return words


def iter_word_chunks(spec: SubshiftSpec, n: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """enumerate_words 를 chunk 행 단위로 나누어 순서대로 내보낸다."""
    if n <= 6:
        words = enumerate_words(spec, n)
        for start in range(0, words.shape[0], chunk):
            yield words[start:start + chunk]
        return
    # prefix 단위로 나누어 전체 배열을 한 번에 만들지 않는다
    split = max(1, n // 2)
    prefixes = enumerate_words(spec, split)
    suffixes = enumerate_words(spec, n - split)
    q = spec.transitions.astype(bool)
    buffer: List[np.ndarray] = []
    size = 0
    for prefix in prefixes:
        ok = q[prefix[-1], suffixes[:, 0]]
        block = np.hstack([np.broadcast_to(prefix, (int(ok.sum()), split)), suffixes[ok]])
        buffer.append(block)
        size += block.shape[0]
        if size >= chunk:
            merged = np.vstack(buffer)
            for start in range(0, merged.shape[0] - merged.shape[0] % chunk, chunk):
                yield merged[start:start + chunk]
            rest = merged.shape[0] % chunk
            buffer = [merged[merged.shape[0] - rest:]] if rest else []
            size = rest
    if size:
        yield np.vstack(buffer)


def word_count_by_matrix(spec: SubshiftSpec, n: int) -> int:
    """Number of admissible words of length n, 1ᵀ Qⁿ⁻¹ 1."""
    q = spec.transitions.astype(object)
    power = np.identity(spec.k, dtype=object)
    for _ in range(n - 1):
        power = power.dot(q)
    return int(power.sum())


def words_as_tuples(words: np.ndarray) -> List[Word]:
    return [tuple(int(s) for s in row) for row in words]


def bridge_words(spec: SubshiftSpec, I: Sequence[int], J: Sequence[int], k: int) -> List[Word]:
    """All K with |K| = k and IKJ admissible, lexicographically ordered."""
    I = spec.require_admissible(I)
    J = spec.require_admissible(J)
    if not I or not J:
        raise InadmissibleWordError("bridge_words needs non-empty I and J")
    if spec.mixing_time is not None and k < spec.mixing_time:
        log.debug("bridge_length_below_mixing_time", k=k, mixing_time=spec.mixing_time)
    if k == 0:
        return [()] if spec.allows(I[-1], J[0]) else []
    middles = enumerate_words(spec, k)
    q = spec.transitions.astype(bool)
    ok = q[I[-1], middles[:, 0]] & q[middles[:, -1], J[0]]
    found = words_as_tuples(middles[ok])
    if not found:
        log.info("bridge_words_empty", I=format_word(I), J=format_word(J), k=k)
    return found


def lyndon_words(spec: SubshiftSpec, max_len: int) -> List[Word]:
    """
    Primitive, cyclically admissible words that are lexicographically
    minimal among their rotations, ordered by length then lexicographically.
    """
    found: List[Word] = []
    for n in range(1, max_len + 1):
        for w in words_as_tuples(enumerate_words(spec, n)):
            if not spec.allows(w[-1], w[0]):
                continue
            rotations = [w[i:] + w[:i] for i in range(1, n)]
            if all(w < r for r in rotations):
                found.append(w)
    return found


def higher_block(spec: SubshiftSpec, m: int) -> Tuple[SubshiftSpec, np.ndarray]:
    """
    The m-block presentation: alphabet = admissible m-words, u -> v allowed
    when u overlaps v in m-1 symbols. Returns the new spec and the block
    alphabet as an (K, m) array.
    """
    blocks = enumerate_words(spec, m)
    if m == 1:
        return spec, blocks
    codes_tail = encode_words(blocks[:, 1:], spec.k)
    codes_head = encode_words(blocks[:, :-1], spec.k)
    q = (codes_tail[:, None] == codes_head[None, :]).astype(np.int8)
    return build_subshift(q), blocks


def block_power(spec: SubshiftSpec, length: int) -> Tuple[SubshiftSpec, np.ndarray]:
    """σ^length on admissible length-words: u -> v allowed iff Q[u_last, v_first]."""
    blocks = enumerate_words(spec, length)
    q = spec.transitions[blocks[:, -1][:, None], blocks[:, 0][None, :]].astype(np.int8)
    return build_subshift(q), blocks


# --- points and metric ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SequencePoint:
    """
    A sequence given by a finite centre word placed at indices
    offset .. offset+len(center)-1, continued to the right by the canonical
    successor chain and to the left by the canonical predecessor chain.
    One-sided points use offset 0 and never look at negative indices.
    """

    spec: SubshiftSpec
    center: Word
    offset: int = 0

    def __post_init__(self) -> None:
        if not self.center:
            raise InadmissibleWordError("a point needs a non-empty centre word")
        self.spec.require_admissible(self.center)

    @classmethod
    def from_text(cls, spec: SubshiftSpec, text: str, past: str = "") -> "SequencePoint":
        """'12' 은 x_0 x_1 = 1 2, past='21' 은 x_-2 x_-1 = 2 1."""
        future = parse_word(text)
        before = parse_word(past)
        return cls(spec, before + future, -len(before))

    @property
    def end(self) -> int:
        return self.offset + len(self.center)

    def __getitem__(self, i: int) -> int:
        return self.window(i, i + 1)[0]

    def window(self, lo: int, hi: int) -> Word:
        """Symbols at indices lo .. hi-1."""
        if hi <= lo:
            return ()
        out: List[int] = []
        if lo < self.offset:
            before = self.spec.past(self.center[0], self.offset - lo)
            out.extend(before[: max(0, min(hi, self.offset) - lo)])
        a, b = max(lo, self.offset), min(hi, self.end)
        if a < b:
            out.extend(self.center[a - self.offset:b - self.offset])
        if hi > self.end:
            after = self.spec.tail(self.center[-1], hi - self.end)
            start = max(lo, self.end) - self.end
            out.extend(after[start:])
        return tuple(out)

    def prefix(self, n: int) -> Word:
        return self.window(0, n)

    def shifted(self, n: int = 1) -> "SequencePoint":
        return SequencePoint(self.spec, self.center, self.offset - n)

    def canonical_past(self) -> "SequencePoint":
        """x_η: the same future with the canonical past of x_0 attached."""
        future = self.window(0, max(self.end, 1))
        return SequencePoint(self.spec, future, 0)

    def sync_index(self, other: "SequencePoint") -> Optional[int]:
        """
        An index N with x_i = y_i for every i >= N, or None when the two
        sequences never merge. N is the smallest such index unless the
        sequences coincide, in which case any index below both centres is
        returned.
        """
        lo = min(self.offset, other.offset, 0)
        hi = max(self.end, other.end)
        # beyond hi both follow the successor map, so they merge within k steps or never
        merge = next((i for i in range(hi, hi + self.spec.k + 1) if self[i] == other[i]), None)
        if merge is None:
            return None
        for i in range(merge - 1, lo - 2, -1):
            if self[i] != other[i]:
                return i + 1
        return lo - 1

    def unsync_index(self, other: "SequencePoint") -> Optional[int]:
        """An index N with x_i = y_i for every i < N (largest unless equal), or None."""
        lo = min(self.offset, other.offset, 0)
        hi = max(self.end, other.end)
        merge = next((i for i in range(lo - 1, lo - self.spec.k - 2, -1) if self[i] == other[i]), None)
        if merge is None:
            return None
        for i in range(merge + 1, hi + 1):
            if self[i] != other[i]:
                return i
        return hi + 1


def word_distance(x: SequencePoint, y: SequencePoint, two_sided: bool = False) -> float:
    """
    2^-n for the first disagreement index n >= 0 (one-sided), or
    2^-min|n| over all disagreements (two_sided). Zero iff the two
    represented sequences coincide.
    """
    forward = _first_forward_disagreement(x, y)
    if not two_sided:
        return 0.0 if forward is None else 2.0 ** (-forward)
    backward = _first_backward_disagreement(x, y)
    candidates = [v for v in (forward, backward) if v is not None]
    return 0.0 if not candidates else 2.0 ** (-min(candidates))


def _first_forward_disagreement(x: SequencePoint, y: SequencePoint) -> Optional[int]:
    tail_start = max(x.end, y.end, 0)
    i = 0
    while True:
        if x[i] != y[i]:
            return i
        # past both centres the continuation is a function of the current symbol
        if i >= tail_start:
            return None
        i += 1


def _first_backward_disagreement(x: SequencePoint, y: SequencePoint) -> Optional[int]:
    past_start = min(x.offset, y.offset, 0)
    i = -1
    while True:
        if x[i] != y[i]:
            return -i
        if i < past_start:
            return None
        i -= 1


# --- potentials -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SymbolPotential:
    """ψ(x) = values[code(x_0 .. x_{depth-1})]; zero on inadmissible windows."""

    spec: SubshiftSpec
    depth: int
    values: np.ndarray
    kind: str = "table"

    @classmethod
    def zero(cls, spec: SubshiftSpec) -> "SymbolPotential":
        return cls(spec, 1, np.zeros(spec.k), "zero")

    @classmethod
    def from_symbol_weights(cls, spec: SubshiftSpec, weights: Sequence[float]) -> "SymbolPotential":
        w = np.asarray(weights, dtype=float)
        if w.shape != (spec.k,) or (w <= 0).any():
            raise DimensionError("symbol weights must be k positive numbers")
        return cls(spec, 1, np.log(w), "symbol_weights")

    @classmethod
    def from_table(cls, spec: SubshiftSpec, depth: int, table: Dict[Word, float]) -> "SymbolPotential":
        values = np.zeros(spec.k ** depth)
        words = enumerate_words(spec, depth)
        codes = encode_words(words, spec.k)
        for word, code in zip(words_as_tuples(words), codes):
            if word not in table:
                raise DimensionError(f"potential missing window {format_word(word)}")
            values[code] = float(table[word])
        return cls(spec, depth, values, "table")

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def with_depth(self, depth: int) -> "SymbolPotential":
        """Same function read through longer windows."""
        if depth < self.depth:
            raise DimensionError("cannot shorten a potential")
        extra = depth - self.depth
        values = np.repeat(self.values, self.spec.k ** extra)
        return SymbolPotential(self.spec, depth, values, self.kind)

    def birkhoff_sums(self, words: np.ndarray, n: int) -> np.ndarray:
        """S_nψ for rows of words; rows need n + depth - 1 columns."""
        words = np.atleast_2d(words)
        total = np.zeros(words.shape[0])
        for i in range(n):
            total += self.values[encode_words(words[:, i:i + self.depth], self.spec.k)]
        return total


# --- vectorised tails ---------------------------------------------------------------

def extend_with_tail(spec: SubshiftSpec, words: np.ndarray, extra: int) -> np.ndarray:
    """Append the canonical continuation of each row's last symbol."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    if extra <= 0:
        return words
    succ = np.asarray(spec.successor, dtype=np.int64)
    cols = [words]
    last = words[:, -1]
    for _ in range(extra):
        last = succ[last]
        cols.append(last[:, None])
    return np.hstack(cols)


def prefix_index(longer: np.ndarray, shorter: np.ndarray, k: int) -> np.ndarray:
    """Row index in `shorter` of each row's prefix in `longer`."""
    n = shorter.shape[1]
    return np.searchsorted(encode_words(shorter, k), encode_words(longer[:, :n], k))


def suffix_index(longer: np.ndarray, shorter: np.ndarray, k: int) -> np.ndarray:
    n = shorter.shape[1]
    return np.searchsorted(encode_words(shorter, k), encode_words(longer[:, -n:], k))


def all_windows(k: int, m: int) -> np.ndarray:
    """Every length-m word over k symbols in code order, admissible or not."""
    return np.array(list(product(range(k), repeat=m)), dtype=np.int64).reshape(-1, m)


def extend_with_past(spec: SubshiftSpec, words: np.ndarray, extra: int) -> np.ndarray:
    """Prepend the canonical past of each row's first symbol."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    if extra <= 0:
        return words
    pred = np.asarray(spec.predecessor, dtype=np.int64)
    cols = [words]
    first = words[:, 0]
    for _ in range(extra):
        first = pred[first]
        cols.insert(0, first[:, None])
    return np.hstack(cols)
