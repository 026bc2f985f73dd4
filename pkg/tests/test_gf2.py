import numpy as np
import pytest
from hypothesis import given, strategies as st

from statqec import gf2

masks = st.integers(min_value=0, max_value=(1 << 16) - 1)


@given(st.lists(masks, max_size=10))
def test_rank_matches_numpy_gauss(rows):
    mat = np.array([[(r >> j) & 1 for j in range(16)] for r in rows], dtype=np.uint8)
    r = 0
    mat = mat.copy()
    col = 0
    rowi = 0
    while rowi < len(mat) and col < 16:
        pivot = None
        for i in range(rowi, len(mat)):
            if mat[i, col]:
                pivot = i
                break
        if pivot is None:
            col += 1
            continue
        mat[[rowi, pivot]] = mat[[pivot, rowi]]
        for i in range(len(mat)):
            if i != rowi and mat[i, col]:
                mat[i] ^= mat[rowi]
        r += 1
        rowi += 1
        col += 1
    assert gf2.rank(rows) == r


@given(st.lists(masks, min_size=1, max_size=8), st.lists(st.booleans(), min_size=8, max_size=8))
def test_span_membership(rows, picks):
    combo = 0
    for r, p in zip(rows, picks):
        if p:
            combo ^= r
    assert gf2.in_span(gf2.echelon(rows), combo)


@given(st.lists(masks, max_size=8), masks)
def test_reduce_mod_idempotent(rows, v):
    basis = gf2.echelon(rows)
    res = gf2.reduce_mod(basis, v)
    assert gf2.reduce_mod(basis, res) == res
    assert gf2.in_span(basis, v ^ res)


def test_solve_system_roundtrip():
    rng = np.random.default_rng(7)
    n = 12
    for _ in range(50):
        eqs = [(int(rng.integers(0, 1 << n)), 0) for _ in range(6)]
        x_true = int(rng.integers(0, 1 << n))
        eqs = [(m, (m & x_true).bit_count() & 1) for m, _ in eqs]
        sol, kernel = gf2.solve_system(eqs, n)
        assert sol is not None
        for m, b in eqs:
            assert (m & sol).bit_count() & 1 == b
        for kv in kernel:
            for m, _ in eqs:
                assert (m & kv).bit_count() & 1 == 0
        # dimension count: solutions form a coset of the kernel
        assert len(kernel) >= n - 6


def test_solve_system_inconsistent():
    sol, kernel = gf2.solve_system([(0b11, 0), (0b11, 1)], 2)
    assert sol is None and kernel == []


def test_span_elements_order_and_weights():
    basis = [0b001, 0b110]
    els = gf2.span_elements(basis, offset=0b1000)
    assert els.tolist() == [0b1000, 0b1001, 0b1110, 0b1111]
    assert gf2.popcount(els).tolist() == [1, 2, 3, 4]


def test_span_elements_rejects_wide_vectors():
    with pytest.raises(ValueError):
        gf2.span_elements([1 << 70])
