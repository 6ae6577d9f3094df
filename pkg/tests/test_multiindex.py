from itertools import combinations, permutations, product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxform.errors import AxisError, DegreeError
from fluxform.multiindex import REPEATED, enumerate_indices, from_key, index_positions, sort_with_sign, to_key, validate_index


def brute_force_indices(n, p):
    # every p-tuple over 1..n that is strictly increasing, in lexicographic order
    return sorted(t for t in product(range(1, n + 1), repeat=p) if all(a < b for a, b in zip(t, t[1:])))


def permutation_sign(seq):
    # determinant of the permutation matrix, independent of inversion counting
    order = sorted(seq)
    P = np.zeros((len(seq), len(seq)))
    for row, v in enumerate(seq):
        P[row, order.index(v)] = 1.0
    return int(round(np.linalg.det(P))) if len(seq) else 1


def test_enumerate_small_cases():
    assert enumerate_indices(3, 1) == [(1,), (2,), (3,)]
    assert enumerate_indices(3, 2) == [(1, 2), (1, 3), (2, 3)]
    assert enumerate_indices(3, 0) == [()]


def test_enumerate_4_2_matches_brute_force():
    got = enumerate_indices(4, 2)
    assert got == brute_force_indices(4, 2)
    assert len(got) == 6 and got[-1] == (3, 4)


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_enumerate_count_and_order(np_):
    n, p = np_
    got = enumerate_indices(n, p)
    assert len(got) == comb(n, p)
    assert got == brute_force_indices(n, p)
    assert index_positions(n, p) == {idx: i for i, idx in enumerate(got)}


@pytest.mark.parametrize("n,p", [(3, 4), (3, -1), (0, 1)])
def test_enumerate_rejects_bad_degree(n, p):
    with pytest.raises(DegreeError):
        enumerate_indices(n, p)


def test_sort_with_sign_examples():
    assert sort_with_sign([2, 1]) == ((1, 2), -1)
    assert sort_with_sign([1, 1]) == (REPEATED, 0)
    assert sort_with_sign([3, 1, 2]) == ((1, 2, 3), 1)
    assert sort_with_sign([]) == ((), 1)


def test_sort_with_sign_rejects_out_of_range():
    with pytest.raises(AxisError):
        sort_with_sign([0, 1], n=3)
    with pytest.raises(AxisError):
        sort_with_sign([1, 4], n=3)


@given(st.lists(st.integers(1, 7), min_size=0, max_size=6, unique=True))
def test_sort_with_sign_matches_permutation_determinant(seq):
    key, sign = sort_with_sign(seq, 7)
    assert key == tuple(sorted(seq))
    assert sign == permutation_sign(seq)


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))), st.data())
def test_reversal_sign_and_idempotence(np_, data):
    n, p = np_
    idx = data.draw(st.sampled_from(enumerate_indices(n, p)))
    assert sort_with_sign(idx, n) == (idx, 1)
    assert sort_with_sign(idx[::-1], n) == (idx, (-1) ** (p * (p - 1) // 2))


@given(st.lists(st.integers(1, 5), min_size=2, max_size=5))
def test_repeats_give_sentinel(seq):
    if len(set(seq)) < len(seq):
        assert sort_with_sign(seq, 5) == (REPEATED, 0)


def test_every_permutation_of_three():
    for perm in permutations([1, 2, 3]):
        assert sort_with_sign(perm)[1] == permutation_sign(perm)


def test_keys_round_trip():
    for idx in [(), (1,), (1, 3), (2, 4, 5)]:
        assert from_key(to_key(idx)) == idx
    assert to_key((1, 3)) == "[1,3]"


def test_validate_index():
    assert validate_index([1, 3], 3, 2) == (1, 3)
    with pytest.raises(AxisError):
        validate_index([3, 1], 3)
    with pytest.raises(DegreeError):
        validate_index([1, 2], 3, 1)


def test_combinations_agree_for_larger_n():
    assert enumerate_indices(12, 5) == list(combinations(range(1, 13), 5))
