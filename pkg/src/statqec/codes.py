"""CSS code data model and the two lattice families used throughout.

A code is stored purely combinatorially: each check or logical operator is
a sorted tuple of qubit indices (its support).  Z checks and Z logicals
are products of Pauli Z, X checks and X logicals products of Pauli X; all
commutation rules reduce to overlap parities of supports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

from . import gf2
from .errors import UnsupportedSize, ValidationError

Support = tuple[int, ...]


@dataclass(frozen=True)
class CodeParams:
    """Summary parameters: block size n, logical count k, distance d, max Z-check weight w."""

    n: int
    k: int
    d: int | None
    w: int


@dataclass(frozen=True)
class CssCode:
    n_qubits: int
    z_checks: tuple[Support, ...]
    x_checks: tuple[Support, ...]
    logical_z: tuple[Support, ...]
    logical_x: tuple[Support, ...]

    @cached_property
    def z_check_masks(self) -> tuple[int, ...]:
        return tuple(_mask(s) for s in self.z_checks)

    @cached_property
    def x_check_masks(self) -> tuple[int, ...]:
        return tuple(_mask(s) for s in self.x_checks)

    @cached_property
    def logical_z_masks(self) -> tuple[int, ...]:
        return tuple(_mask(s) for s in self.logical_z)

    @cached_property
    def logical_x_masks(self) -> tuple[int, ...]:
        return tuple(_mask(s) for s in self.logical_x)

    @property
    def num_z_checks(self) -> int:
        return len(self.z_checks)

    @property
    def num_logicals(self) -> int:
        return len(self.logical_z)


def _mask(support) -> int:
    m = 0
    for q in support:
        m |= 1 << q
    return m


def _overlap_parity(a: int, b: int) -> int:
    return (a & b).bit_count() & 1


def _check_supports(name: str, supports, n: int) -> None:
    for s in supports:
        if len(s) == 0:
            raise ValidationError(f"{name}: empty support")
        if list(s) != sorted(set(s)):
            raise ValidationError(f"{name}: support {s} not sorted and unique")
        if s[0] < 0 or s[-1] >= n:
            raise ValidationError(f"{name}: support {s} out of range for n={n}")


def validate_css(code: CssCode) -> CodeParams:
    """Check all structural invariants and return the code's parameters.

    Raises ValidationError on malformed supports, on any anticommuting
    check pair, on a logical pairing matrix different from the identity,
    or on logicals that are not independent of the matching check span.
    The returned distance is None; compute_distance_bruteforce fills it in
    for small codes.
    """
    n = code.n_qubits
    if n <= 0:
        raise ValidationError("n_qubits must be positive")
    _check_supports("z_checks", code.z_checks, n)
    _check_supports("x_checks", code.x_checks, n)
    _check_supports("logical_z", code.logical_z, n)
    _check_supports("logical_x", code.logical_x, n)
    if len(code.logical_z) != len(code.logical_x):
        raise ValidationError("logical_z and logical_x must pair up one to one")

    for zm in code.z_check_masks:
        for xm in code.x_check_masks:
            if _overlap_parity(zm, xm):
                raise ValidationError("z check and x check overlap oddly")
    for lz in code.logical_z_masks:
        for xm in code.x_check_masks:
            if _overlap_parity(lz, xm):
                raise ValidationError("logical_z anticommutes with an x check")
    for lx in code.logical_x_masks:
        for zm in code.z_check_masks:
            if _overlap_parity(lx, zm):
                raise ValidationError("logical_x anticommutes with a z check")
    for j, lz in enumerate(code.logical_z_masks):
        for k, lx in enumerate(code.logical_x_masks):
            want = 1 if j == k else 0
            if _overlap_parity(lz, lx) != want:
                raise ValidationError(
                    f"logical pairing ({j},{k}) has overlap parity {1 - want}"
                )

    rank_z = gf2.rank(code.z_check_masks)
    rank_x = gf2.rank(code.x_check_masks)
    k = n - rank_z - rank_x
    if len(code.logical_z) != k:
        raise ValidationError(f"expected {k} logical pairs, found {len(code.logical_z)}")
    if gf2.rank(list(code.z_check_masks) + list(code.logical_z_masks)) != rank_z + k:
        raise ValidationError("logical_z operators are dependent on the z check span")
    if gf2.rank(list(code.x_check_masks) + list(code.logical_x_masks)) != rank_x + k:
        raise ValidationError("logical_x operators are dependent on the x check span")

    w = max((len(s) for s in code.z_checks), default=0)
    return CodeParams(n=n, k=k, d=None, w=w)


def compute_distance_bruteforce(code: CssCode, max_qubits: int = 24) -> int:
    """Minimum weight of a bitflip pattern that flips no Z check yet acts as a logical.

    Enumerates the full kernel of the Z-check overlap map and discards the
    patterns lying in the X-check span.  Exact, therefore capped.
    """
    if code.n_qubits > max_qubits:
        raise UnsupportedSize(
            f"distance enumeration capped at {max_qubits} qubits, got {code.n_qubits}"
        )
    equations = [(m, 0) for m in code.z_check_masks]
    _, kernel = gf2.solve_system(equations, code.n_qubits)
    x_basis = gf2.echelon(code.x_check_masks)
    elements = gf2.span_elements(kernel)
    weights = gf2.popcount(elements)
    for v, wt in sorted(zip(elements.tolist(), weights.tolist()), key=lambda p: p[1]):
        if v and not gf2.in_span(x_basis, v):
            return wt
    raise ValidationError("code has no logical operators")


def build_repetition_code(length: int) -> CssCode:
    """Ring of length qubits with adjacent-pair Z checks and one logical pair.

    The Z logical is the single-site order parameter at qubit 0; the X
    logical flips every qubit.  length 2 has a single distinct pair check.
    """
    if length < 2:
        raise ValidationError("repetition ring needs length >= 2")
    checks = []
    for r in range(length):
        pair = tuple(sorted((r, (r + 1) % length)))
        if pair not in checks:
            checks.append(pair)
    return CssCode(
        n_qubits=length,
        z_checks=tuple(checks),
        x_checks=(),
        logical_z=((0,),),
        logical_x=(tuple(range(length)),),
    )


def build_toric_code(length: int) -> CssCode:
    """Toric code on an length x length periodic square lattice, qubits on edges.

    Horizontal edge (x, y) has index y*L + x, vertical edge (x, y) has
    index L*L + y*L + x.  All L^2 plaquette Z checks are kept, including
    the one redundant generator (their product is empty).
    """
    L = length
    if L < 2:
        raise ValidationError("toric lattice needs length >= 2")

    def hidx(x, y):
        return (y % L) * L + (x % L)

    def vidx(x, y):
        return L * L + (y % L) * L + (x % L)

    z_checks = []
    x_checks = []
    for y in range(L):
        for x in range(L):
            z_checks.append(tuple(sorted((hidx(x, y), hidx(x, y + 1), vidx(x, y), vidx(x + 1, y)))))
            x_checks.append(tuple(sorted((hidx(x - 1, y), hidx(x, y), vidx(x, y - 1), vidx(x, y)))))
    logical_z = (
        tuple(sorted(hidx(x, 0) for x in range(L))),
        tuple(sorted(vidx(0, y) for y in range(L))),
    )
    logical_x = (
        tuple(sorted(hidx(0, y) for y in range(L))),
        tuple(sorted(vidx(x, 0) for x in range(L))),
    )
    return CssCode(
        n_qubits=2 * L * L,
        z_checks=tuple(z_checks),
        x_checks=tuple(x_checks),
        logical_z=logical_z,
        logical_x=logical_x,
    )


def code_to_json(code: CssCode) -> str:
    payload = {
        "n": code.n_qubits,
        "z_checks": [list(s) for s in code.z_checks],
        "x_checks": [list(s) for s in code.x_checks],
        "logical_z": [list(s) for s in code.logical_z],
        "logical_x": [list(s) for s in code.logical_x],
    }
    return json.dumps(payload, indent=2)


def code_from_json(text: str) -> CssCode:
    try:
        payload = json.loads(text)
        code = CssCode(
            n_qubits=int(payload["n"]),
            z_checks=tuple(tuple(int(q) for q in s) for s in payload["z_checks"]),
            x_checks=tuple(tuple(int(q) for q in s) for s in payload["x_checks"]),
            logical_z=tuple(tuple(int(q) for q in s) for s in payload["logical_z"]),
            logical_x=tuple(tuple(int(q) for q in s) for s in payload["logical_x"]),
        )
    except KeyError as exc:
        raise ValidationError(f"malformed code JSON: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed code JSON: {exc}") from exc
    validate_css(code)
    return code
