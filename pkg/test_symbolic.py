import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from Cocycle_Thermo.errors import DegenerateSubshiftError, DimensionError, InadmissibleWordError, NotMixingError
from Cocycle_Thermo.symbolic import (
    SequencePoint,
    SymbolPotential,
    block_power,
    bridge_words,
    build_subshift,
    enumerate_words,
    extend_with_past,
    extend_with_tail,
    format_word,
    full_shift,
    golden_mean_shift,
    higher_block,
    iter_word_chunks,
    lyndon_words,
    parse_word,
    prefix_index,
    suffix_index,
    word_count_by_matrix,
    word_distance,
    words_as_tuples,
)


def as_text(words):
    return [format_word(w) for w in words_as_tuples(words)]


def test_mixing_times():
    assert full_shift(2).mixing_time == 1
    assert golden_mean_shift().mixing_time == 2


def test_reducible_matrix_is_not_mixing():
    with pytest.raises(NotMixingError):
        build_subshift([[1, 0], [0, 1]])


def test_degenerate_matrices_rejected():
    with pytest.raises(DegenerateSubshiftError):
        build_subshift([[1, 0], [1, 0]])
    with pytest.raises(DegenerateSubshiftError):
        build_subshift([[2, 1], [1, 1]])
    with pytest.raises(DimensionError):
        build_subshift([[1]])


def test_enumerate_words_small_cases():
    assert as_text(enumerate_words(full_shift(2), 2)) == ["11", "12", "21", "22"]
    assert as_text(enumerate_words(golden_mean_shift(), 2)) == ["11", "12", "21"]
    assert enumerate_words(golden_mean_shift(), 5).shape == (13, 5)


@pytest.mark.parametrize("spec", [full_shift(2), full_shift(3), golden_mean_shift()])
def test_word_counts_match_matrix_powers(spec):
    for n in range(1, 13):
        words = enumerate_words(spec, n)
        assert words.shape[0] == word_count_by_matrix(spec, n)
        assert all(spec.is_admissible(w) for w in words[:50])


def test_chunked_enumeration_matches_full_enumeration():
    spec = golden_mean_shift()
    chunks = list(iter_word_chunks(spec, 10, chunk=17))
    assert all(c.shape[0] <= 17 for c in chunks[:-1])
    np.testing.assert_array_equal(np.vstack(chunks), enumerate_words(spec, 10))


def test_bridge_words_examples():
    assert bridge_words(full_shift(2), (0,), (1,), 1) == [(0,), (1,)]
    assert bridge_words(golden_mean_shift(), (1,), (1,), 2) == [(0, 0)]
    assert bridge_words(golden_mean_shift(), (0,), (0,), 2) == [(0, 0), (0, 1), (1, 0)]


def test_bridge_words_exist_at_mixing_time():
    spec = golden_mean_shift()
    words = [w for n in range(1, 4) for w in words_as_tuples(enumerate_words(spec, n))]
    for I in words:
        for J in words:
            assert bridge_words(spec, I, J, spec.mixing_time)


def test_bridge_words_rejects_inadmissible_input():
    with pytest.raises(InadmissibleWordError):
        bridge_words(golden_mean_shift(), (1, 1), (0,), 2)


def test_word_codec():
    assert parse_word("1211") == (0, 1, 0, 0)
    assert format_word((0, 1, 0, 0)) == "1211"
    assert format_word((9, 0)) == "10,1"
    assert parse_word("10,1") == (9, 0)
    assert parse_word("") == ()
    with pytest.raises(InadmissibleWordError):
        parse_word("0")


def test_word_distance_examples():
    spec = full_shift(2)
    x = SequencePoint(spec, (0, 0, 0, 0))
    assert word_distance(x, SequencePoint(spec, (0, 0, 0, 0))) == 0.0
    assert word_distance(x, SequencePoint(spec, (1,))) == 1.0
    assert word_distance(x, SequencePoint(spec, (0, 0, 0, 1))) == 0.125


def test_tail_completion_makes_short_and_long_words_equal():
    # successor of 1 is 1 on the full shift, so "1" and "1111" are the same point
    spec = full_shift(2)
    assert word_distance(SequencePoint(spec, (0,)), SequencePoint(spec, (0, 0, 0, 0))) == 0.0


def test_two_sided_distance_sees_the_past():
    spec = full_shift(2)
    x = SequencePoint.from_text(spec, "11", past="2")
    y = SequencePoint.from_text(spec, "11", past="1")
    assert word_distance(x, y) == 0.0
    assert word_distance(x, y, two_sided=True) == 0.5


word_strategy = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=8).map(tuple)


@seed(7)
@settings(max_examples=300, deadline=None)
@given(word_strategy, word_strategy, word_strategy)
def test_word_distance_is_an_ultrametric(a, b, c):
    spec = full_shift(2)
    x, y, z = (SequencePoint(spec, w) for w in (a, b, c))
    assert word_distance(x, z) <= max(word_distance(x, y), word_distance(y, z))
    assert word_distance(x, y) == word_distance(y, x)


def test_sequence_point_windows_and_sync():
    spec = full_shift(2)
    x = SequencePoint.from_text(spec, "1211")
    y = SequencePoint.from_text(spec, "1212")
    assert x.window(0, 6) == (0, 1, 0, 0, 0, 0)
    assert y.window(0, 6) == (0, 1, 0, 1, 0, 0)
    assert x.sync_index(y) == 4
    assert x.shifted(2).prefix(2) == (0, 0)


def test_canonical_past_keeps_the_future():
    spec = golden_mean_shift()
    x = SequencePoint.from_text(spec, "121", past="12")
    eta = x.canonical_past()
    assert eta.prefix(5) == x.prefix(5)
    assert eta[-1] == spec.predecessor[x[0]]


def test_lyndon_words():
    assert lyndon_words(full_shift(2), 3) == [(0,), (1,), (0, 1), (0, 0, 1), (0, 1, 1)]
    assert lyndon_words(golden_mean_shift(), 3) == [(0,), (0, 1), (0, 0, 1)]


def test_higher_block_and_power_shift():
    spec2, blocks = higher_block(golden_mean_shift(), 2)
    assert as_text(blocks) == ["11", "12", "21"]
    # 12 -> 21 allowed, 12 -> 11 not
    assert spec2.allows(1, 2) and not spec2.allows(1, 0)
    power, pblocks = block_power(full_shift(2), 2)
    assert power.k == 4 and power.is_full_shift
    assert pblocks.shape == (4, 2)


def test_prefix_and_suffix_index():
    spec = full_shift(2)
    longer, shorter = enumerate_words(spec, 3), enumerate_words(spec, 2)
    pre = prefix_index(longer, shorter, 2)
    suf = suffix_index(longer, shorter, 2)
    np.testing.assert_array_equal(shorter[pre], longer[:, :2])
    np.testing.assert_array_equal(shorter[suf], longer[:, 1:])


def test_tail_and_past_extensions_are_admissible():
    spec = golden_mean_shift()
    words = enumerate_words(spec, 3)
    for row in extend_with_tail(spec, words, 4):
        assert spec.is_admissible(row)
    for row in extend_with_past(spec, words, 4):
        assert spec.is_admissible(row)


def test_symbol_potential_birkhoff_sums():
    spec = full_shift(2)
    psi = SymbolPotential.from_symbol_weights(spec, [1.0, np.e])
    np.testing.assert_allclose(psi.birkhoff_sums(np.array([[0, 1, 1]]), 3), [2.0])
    deeper = psi.with_depth(2)
    np.testing.assert_allclose(deeper.birkhoff_sums(np.array([[0, 1, 1, 0]]), 3), [2.0])
    assert SymbolPotential.zero(spec).is_zero


def test_symbol_potential_rejects_nonpositive_weights():
    with pytest.raises(DimensionError):
        SymbolPotential.from_symbol_weights(full_shift(2), [1.0, 0.0])
