"""Bitmask linear algebra over GF(2).

Vectors are Python integers used as bitmasks (bit r = coordinate r), which
keeps rank / span / solve exact for any dimension.  Enumeration helpers
return numpy uint64 arrays so weight scans can use vectorized popcounts;
they are only valid for vectors that fit in 64 bits, which is enforced.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "echelon",
    "reduce_mod",
    "rank",
    "in_span",
    "independent_subset",
    "solve_system",
    "span_elements",
    "popcount",
]


def echelon(rows) -> list[int]:
    """Reduced echelon basis of the span of ``rows`` (masks with distinct pivots)."""
    basis: list[int] = []
    for row in rows:
        row = reduce_mod(basis, row)
        if row:
            # keep the basis fully reduced so membership tests are a single pass
            for i, b in enumerate(basis):
                if b & (1 << (row.bit_length() - 1)):
                    basis[i] = b ^ row
            basis.append(row)
            basis.sort(key=int.bit_length, reverse=True)
    return basis


def reduce_mod(basis: list[int], v: int) -> int:
    """Residue of v after XOR-ing out basis elements (basis from echelon())."""
    for b in basis:
        if v & (1 << (b.bit_length() - 1)):
            v ^= b
    return v


def rank(rows) -> int:
    return len(echelon(rows))


def in_span(basis: list[int], v: int) -> bool:
    return reduce_mod(basis, v) == 0


def independent_subset(vectors) -> list[int]:
    """Indices of a maximal linearly independent subset, greedily front to back."""
    basis: list[int] = []
    picked = []
    for i, v in enumerate(vectors):
        if reduce_mod(basis, v):
            basis = echelon(basis + [v])
            picked.append(i)
    return picked


def solve_system(equations, n: int):
    """Solve a GF(2) linear system given as (mask, parity_bit) pairs over n unknowns.

    Each equation demands popcount(x & mask) % 2 == parity_bit.  Returns
    (particular, kernel_basis) where particular is one solution mask and
    kernel_basis spans the homogeneous solutions, or (None, []) if the
    system is inconsistent.
    """
    rows = [(int(m), int(b) & 1) for m, b in equations]
    pivots: dict[int, tuple[int, int]] = {}  # pivot bit -> (mask, rhs)
    for mask, rhs in rows:
        for p, (pm, pb) in pivots.items():
            if mask & (1 << p):
                mask ^= pm
                rhs ^= pb
        if mask == 0:
            if rhs:
                return None, []
            continue
        p = mask.bit_length() - 1
        # back-substitute into existing rows to keep the system reduced
        for q in list(pivots):
            qm, qb = pivots[q]
            if qm & (1 << p):
                pivots[q] = (qm ^ mask, qb ^ rhs)
        pivots[p] = (mask, rhs)

    particular = 0
    for p, (_, pb) in pivots.items():
        if pb:
            particular |= 1 << p
    kernel = []
    pivot_bits = set(pivots)
    for j in range(n):
        if j in pivot_bits:
            continue
        v = 1 << j
        for p, (pm, _) in pivots.items():
            if pm & (1 << j):
                v |= 1 << p
        kernel.append(v)
    return particular, kernel


def span_elements(basis, offset: int = 0) -> np.ndarray:
    """All 2^k elements of offset + span(basis) as uint64, in Gray-free doubling order.

    Element order is deterministic: index i corresponds to XOR of the basis
    vectors selected by the bits of i (basis[0] toggled by bit 0, and so on).
    """
    for v in list(basis) + [offset]:
        if v < 0 or v.bit_length() > 64:
            raise ValueError("span_elements requires vectors that fit in 64 bits")
    out = np.array([offset], dtype=np.uint64)
    for b in basis:
        out = np.concatenate([out, out ^ np.uint64(b)])
    return out


def popcount(arr: np.ndarray) -> np.ndarray:
    return np.bitwise_count(arr)
