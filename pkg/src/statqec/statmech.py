"""Disordered Ising models defined by a measurement record or a noise history.

Spins live on qubit sites (r, t) for integer layers t = 0 .. t_f, indexed
t * n + r, with the t = 0 reference layer frozen to +1.  Every model is a
sum of sign-dressed ferromagnetic terms:

    H = - sum_terms k * sign * prod_{i in spins} sigma_i

A coupling equal to the FROZEN marker (math.inf) is a hard constraint:
configurations with sign * prod = -1 are excluded from every sum, and the
marker never enters arithmetic.

The syndrome model dresses check terms with the measured record; the event
model dresses both term families with a concrete noise history; the clean
model is the event model of the empty history.  The gauge model extends
the event model with one gauge spin per X check per half-integer slot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import gf2
from .codes import CssCode
from .errors import InconsistentBoundary, InvalidInput, UnsupportedSize
from .noise import FROZEN, Couplings, ErrorPattern, SyndromeHistory

ENUM_CUTOFF = 24
"""Largest number of free spins the exact engine will enumerate."""


@dataclass(frozen=True)
class Term:
    spins: tuple[int, ...]
    k: float
    sign: int


@dataclass
class StatMechModel:
    num_spins: int
    terms: list[Term]
    frozen: dict[int, int]
    labels: dict[int, tuple] = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def free_spins(self) -> list[int]:
        return [i for i in range(self.num_spins) if i not in self.frozen]


def qubit_spin(n: int, r: int, t: int) -> int:
    return t * n + r


def _base_model(code: CssCode, c: Couplings, check_signs: np.ndarray, bond_signs: np.ndarray,
                final_round_perfect: bool, kind: str) -> StatMechModel:
    n = code.n_qubits
    t_f = bond_signs.shape[1]
    terms: list[Term] = []
    labels = {}
    for t in range(t_f + 1):
        for r in range(n):
            labels[qubit_spin(n, r, t)] = ("qubit", r, t)
    for t in range(1, t_f + 1):
        final = t == t_f and final_round_perfect
        k = FROZEN if final else c.k_m
        for idx, support in enumerate(code.z_checks):
            spins = tuple(qubit_spin(n, r, t) for r in support)
            terms.append(Term(spins=spins, k=k, sign=int(check_signs[idx, t - 1])))
    for t in range(1, t_f + 1):
        for r in range(n):
            spins = (qubit_spin(n, r, t - 1), qubit_spin(n, r, t))
            terms.append(Term(spins=spins, k=c.k_bf, sign=int(bond_signs[r, t - 1])))
    frozen = {qubit_spin(n, r, 0): 1 for r in range(n)}
    meta = {"kind": kind, "n": n, "t_f": t_f, "final_round_perfect": final_round_perfect}
    return StatMechModel(num_spins=n * (t_f + 1), terms=terms, frozen=frozen,
                         labels=labels, meta=meta)


def build_syndrome_model(code: CssCode, s: SyndromeHistory, c: Couplings,
                         final_round_perfect: bool = True) -> StatMechModel:
    """Model whose Boltzmann weight is the posterior over sign trajectories given a record."""
    if s.signs.shape[0] != code.num_z_checks:
        raise InvalidInput("record has the wrong number of checks")
    bond_signs = np.ones((code.n_qubits, s.t_f), dtype=np.int8)
    return _base_model(code, c, s.signs, bond_signs, final_round_perfect, "syndrome")


def build_event_model(code: CssCode, e: ErrorPattern, c: Couplings,
                      final_round_perfect: bool = True) -> StatMechModel:
    """Model dressed by a concrete history; related to the syndrome model by a spin flip map."""
    t_f = e.t_f
    if e.bitflips.shape[0] != code.n_qubits:
        raise InvalidInput("history has the wrong number of qubits")
    check_signs = np.ones((code.num_z_checks, t_f), dtype=np.int8)
    m = e.meas_errors.shape[1]
    check_signs[:, :m] = 1 - 2 * e.meas_errors.astype(np.int8)
    bond_signs = (1 - 2 * e.bitflips.astype(np.int8)).astype(np.int8)
    model = _base_model(code, c, check_signs, bond_signs, final_round_perfect, "event")
    return model


def build_clean_model(code: CssCode, c: Couplings, t_f: int,
                      final_round_perfect: bool = True) -> StatMechModel:
    """Event model of the empty history: every sign +1 (a pure ferromagnet)."""
    m = t_f - 1 if final_round_perfect else t_f
    e = ErrorPattern(
        bitflips=np.zeros((code.n_qubits, t_f), dtype=bool),
        meas_errors=np.zeros((code.num_z_checks, m), dtype=bool),
    )
    model = build_event_model(code, e, c, final_round_perfect)
    model.meta["kind"] = "clean"
    return model


# ---------------------------------------------------------------------------
# gauge extension


def gauge_spin(n: int, t_f: int, num_x: int, g: int, t: int) -> int:
    """Index of the gauge spin for X check g at half-integer slot t + 1/2."""
    return (t_f + 1) * n + t * num_x + g


def build_gauge_model(code: CssCode, e: ErrorPattern, c: Couplings,
                      final_round_perfect: bool = True) -> StatMechModel:
    """Event model with temporal bonds dressed by the gauge spins of overlapping X checks.

    A code without X checks gauges to itself: the event model is returned
    unchanged.
    """
    model = build_event_model(code, e, c, final_round_perfect)
    num_x = len(code.x_checks)
    if num_x == 0:
        return model
    n = code.n_qubits
    t_f = e.t_f
    by_qubit = [[] for _ in range(n)]
    for g, support in enumerate(code.x_checks):
        for r in support:
            by_qubit[r].append(g)
    new_terms = []
    for term in model.terms:
        if _is_bond(term, n):
            t_prev, r = divmod(term.spins[0], n)
            gauge = tuple(gauge_spin(n, t_f, num_x, g, t_prev) for g in by_qubit[r])
            new_terms.append(Term(spins=term.spins + gauge, k=term.k, sign=term.sign))
        else:
            new_terms.append(term)
    labels = dict(model.labels)
    for t in range(t_f):
        for g in range(num_x):
            labels[gauge_spin(n, t_f, num_x, g, t)] = ("gauge", g, t)
    num_spins = (t_f + 1) * n + t_f * num_x
    meta = dict(model.meta)
    meta.update(kind="gauge", num_x=num_x)
    return StatMechModel(num_spins=num_spins, terms=new_terms, frozen=dict(model.frozen),
                         labels=labels, meta=meta)


def _is_bond(term: Term, n: int) -> bool:
    """Temporal bonds span two adjacent layers; check terms live in one layer."""
    return (
        len(term.spins) == 2
        and term.spins[1] - term.spins[0] == n
        and term.spins[0] // n != term.spins[1] // n
    )


def apply_gauge_transformation(code: CssCode, t_f: int, config: np.ndarray,
                               site: tuple[int, int]) -> np.ndarray:
    """Flip the spins of one gauge-symmetry generator; an involution that preserves energy.

    site = (g, t) names X check g at integer layer t in 0 .. t_f.  Flipped:
    the layer-t qubit spins on the check's support, and the adjacent gauge
    spins at slots t - 1/2 and t + 1/2 when they exist.  A site at t = 0
    flips reference-layer spins, which is only meaningful on the extended
    configuration space where the frozen layer is allowed to vary.
    """
    g, t = site
    n = code.n_qubits
    num_x = len(code.x_checks)
    if not 0 <= g < num_x or not 0 <= t <= t_f:
        raise InvalidInput(f"gauge site {site} out of range")
    out = np.array(config, copy=True)
    for r in code.x_checks[g]:
        out[qubit_spin(n, r, t)] *= -1
    if t < t_f:
        out[gauge_spin(n, t_f, num_x, g, t)] *= -1
    if t > 0:
        out[gauge_spin(n, t_f, num_x, g, t - 1)] *= -1
    return out


def gauge_fix(model: StatMechModel) -> StatMechModel:
    """Set every gauge spin to +1 and drop it; recovers the underlying event model."""
    if model.meta.get("kind") != "gauge":
        raise InvalidInput("gauge_fix expects a gauge model")
    n = model.meta["n"]
    t_f = model.meta["t_f"]
    cut = (t_f + 1) * n
    terms = [Term(spins=tuple(i for i in t.spins if i < cut), k=t.k, sign=t.sign)
             for t in model.terms]
    labels = {i: lab for i, lab in model.labels.items() if i < cut}
    frozen = {i: v for i, v in model.frozen.items() if i < cut}
    meta = dict(model.meta)
    meta["kind"] = "event"
    meta.pop("num_x", None)
    return StatMechModel(num_spins=cut, terms=terms, frozen=frozen, labels=labels, meta=meta)


def flip_frozen_layer(model: StatMechModel, flip_mask: np.ndarray) -> StatMechModel:
    """Model with reference-layer boundary spins flipped where flip_mask is true.

    Terms are untouched; only the frozen values change.  Used to express
    gauge transformations that act on the boundary layer.
    """
    frozen = dict(model.frozen)
    n = model.meta["n"]
    for r in range(n):
        if flip_mask[r]:
            frozen[qubit_spin(n, r, 0)] = -frozen[qubit_spin(n, r, 0)]
    out = StatMechModel(num_spins=model.num_spins, terms=list(model.terms), frozen=frozen,
                        labels=dict(model.labels), meta=dict(model.meta))
    return out


def model_energy(model: StatMechModel, config: np.ndarray) -> float:
    """H(config); +inf when a hard constraint is violated.  Frozen values are not imposed."""
    total = 0.0
    for term in model.terms:
        chi = term.sign
        for i in term.spins:
            chi *= int(config[i])
        if term.k is FROZEN or math.isinf(term.k):
            if chi == -1:
                return math.inf
        else:
            total -= term.k * chi
    return total


# ---------------------------------------------------------------------------
# exact engine: chunked enumeration over free spins with popcount parities


def _compile(model: StatMechModel, extra_observables=()):
    free = model.free_spins()
    if len(free) > ENUM_CUTOFF:
        raise UnsupportedSize(
            f"exact enumeration needs <= {ENUM_CUTOFF} free spins, got {len(free)}"
        )
    pos = {s: b for b, s in enumerate(free)}
    finite, constraints, obs = [], [], []
    for term in model.terms:
        mask = 0
        fixed = term.sign
        for i in term.spins:
            if i in pos:
                mask |= 1 << pos[i]
            else:
                fixed *= model.frozen[i]
        if term.k is FROZEN or math.isinf(term.k):
            constraints.append((mask, fixed))
        elif term.k != 0.0:
            finite.append((mask, fixed, float(term.k)))
    for spins in extra_observables:
        mask = 0
        fixed = 1
        for i in spins:
            if i in pos:
                mask |= 1 << pos[i]
            else:
                fixed *= model.frozen[i]
        obs.append((mask, fixed))
    return free, finite, constraints, obs


def _chunk_values(lo, hi, finite, constraints, obs_masks):
    idx = np.arange(lo, hi, dtype=np.uint64)
    gain = np.zeros(idx.shape, dtype=np.float64)
    for mask, fixed, k in finite:
        par = np.bitwise_count(idx & np.uint64(mask)).astype(np.int8) & 1
        chi = fixed * (1 - 2 * par)
        gain += k * chi.astype(np.float64)
    valid = np.ones(idx.shape, dtype=bool)
    for mask, fixed in constraints:
        par = np.bitwise_count(idx & np.uint64(mask)).astype(np.int8) & 1
        valid &= (fixed * (1 - 2 * par)) == 1
    signs = []
    for mask, fixed in obs_masks:
        par = np.bitwise_count(idx & np.uint64(mask)).astype(np.int8) & 1
        signs.append(fixed * (1 - 2 * par))
    return gain, valid, signs


_CHUNK = 1 << 22


def exact_log_partition(model: StatMechModel) -> float:
    """log of the constrained partition sum by full enumeration of free spins."""
    free, finite, constraints, _ = _compile(model)
    total = 1 << len(free)
    pieces = []
    for lo in range(0, total, _CHUNK):
        gain, valid, _ = _chunk_values(lo, min(lo + _CHUNK, total), finite, constraints, ())
        if valid.any():
            pieces.append(logsumexp(gain[valid]))
    if not pieces:
        raise InconsistentBoundary("hard constraints exclude every configuration")
    return float(logsumexp(pieces))


def exact_expectation(model: StatMechModel, spins, sign: int = 1) -> float:
    """Thermal expectation of sign * prod_{i in spins} sigma_i by full enumeration."""
    free, finite, constraints, obs = _compile(model, extra_observables=[tuple(spins)])
    total = 1 << len(free)
    plus, minus = [], []
    for lo in range(0, total, _CHUNK):
        gain, valid, signs = _chunk_values(lo, min(lo + _CHUNK, total), finite, constraints, obs)
        up = valid & (signs[0] == 1)
        dn = valid & (signs[0] == -1)
        if up.any():
            plus.append(logsumexp(gain[up]))
        if dn.any():
            minus.append(logsumexp(gain[dn]))
    if not plus and not minus:
        raise InconsistentBoundary("hard constraints exclude every configuration")
    lzp = logsumexp(plus) if plus else -math.inf
    lzm = logsumexp(minus) if minus else -math.inf
    if lzm == -math.inf:
        return float(sign)
    if lzp == -math.inf:
        return float(-sign)
    return float(sign * math.tanh(0.5 * (lzp - lzm)))


def final_layer_logical_spins(code: CssCode, t_f: int, j: int) -> tuple[int, ...]:
    """Spin indices realizing logical j's order parameter at the final layer."""
    n = code.n_qubits
    return tuple(qubit_spin(n, r, t_f) for r in code.logical_z[j])


# ---------------------------------------------------------------------------
# perfect-measurement reduction


def reduce_perfect_measurements(model: StatMechModel, code: CssCode) -> StatMechModel:
    """Solve all-infinite check constraints layer by layer and rewrite in free coordinates.

    Requires every check term frozen-infinite (measurements perfect at all
    rounds).  Each layer's constraint set is an affine GF(2) system; its
    solutions are parametrized by kernel coordinates of the check map,
    chosen to start with an independent subset of the X checks so the new
    variables match the code's natural gauge-invariant ones.  Temporal
    bonds become products of coordinate pairs with particular-solution
    signs folded in.  Raises InconsistentBoundary when a layer's system
    has no solution.
    """
    n = model.meta["n"]
    t_f = model.meta["t_f"]
    check_terms: dict[int, list[Term]] = {t: [] for t in range(1, t_f + 1)}
    bond_terms: list[tuple[int, int, Term]] = []
    for term in model.terms:
        if _is_bond(term, n):
            t_prev, r = divmod(term.spins[0], n)
            bond_terms.append((r, t_prev + 1, term))
        else:
            t = term.spins[0] // n
            if not (term.k is FROZEN or math.isinf(term.k)):
                raise InvalidInput("reduction requires every check term frozen-infinite")
            check_terms[t].append(term)

    kernel_basis = _x_first_kernel_basis(code)
    kappa = len(kernel_basis)

    particular = [0] * (t_f + 1)
    for t in range(1, t_f + 1):
        eqs = []
        for term in check_terms[t]:
            mask = 0
            for i in term.spins:
                mask |= 1 << (i % n)
            eqs.append((mask, 0 if term.sign == 1 else 1))
        sol, _ = gf2.solve_system(eqs, n)
        if sol is None:
            raise InconsistentBoundary(f"layer {t} check signs admit no spin assignment")
        particular[t] = sol

    def coord(a: int, t: int) -> int:
        return t * kappa + a

    terms = []
    for r, t, term in bond_terms:
        bit = 1 << r
        fixed = term.sign
        if (particular[t - 1] ^ particular[t]) & bit:
            fixed = -fixed
        spins = []
        for a, basis_vec in enumerate(kernel_basis):
            if basis_vec & bit:
                spins.extend((coord(a, t - 1), coord(a, t)))
        terms.append(Term(spins=tuple(sorted(spins)), k=term.k, sign=fixed))

    frozen = {coord(a, 0): 1 for a in range(kappa)}
    labels = {}
    for t in range(t_f + 1):
        for a in range(kappa):
            labels[coord(a, t)] = ("layer-coordinate", a, t)
    meta = {
        "kind": "reduced",
        "n": n,
        "t_f": t_f,
        "kappa": kappa,
        "kernel_basis": tuple(kernel_basis),
        "particular": tuple(particular),
    }
    return StatMechModel(num_spins=(t_f + 1) * kappa, terms=terms, frozen=frozen,
                         labels=labels, meta=meta)


def _x_first_kernel_basis(code: CssCode) -> list[int]:
    """Basis of the Z-check overlap kernel, preferring X-check supports as generators."""
    eqs = [(m, 0) for m in code.z_check_masks]
    _, kernel = gf2.solve_system(eqs, code.n_qubits)
    chosen: list[int] = []
    shadow: list[int] = []
    for m in code.x_check_masks:
        if gf2.reduce_mod(shadow, m):
            chosen.append(m)
            shadow = gf2.echelon(shadow + [m])
    for v in kernel:
        if gf2.reduce_mod(shadow, v):
            chosen.append(v)
            shadow = gf2.echelon(shadow + [v])
    return chosen


def reduced_logical_observable(reduced: StatMechModel, code: CssCode, j: int):
    """(spins, sign) realizing logical j's final-layer order parameter in reduced coordinates."""
    if reduced.meta.get("kind") != "reduced":
        raise InvalidInput("expects a reduced model")
    t_f = reduced.meta["t_f"]
    kappa = reduced.meta["kappa"]
    basis = reduced.meta["kernel_basis"]
    particular = reduced.meta["particular"]
    lmask = code.logical_z_masks[j]
    sign = -1 if (particular[t_f] & lmask).bit_count() & 1 else 1
    spins = tuple(t_f * kappa + a for a, v in enumerate(basis) if (v & lmask).bit_count() & 1)
    return spins, sign


# ---------------------------------------------------------------------------
# serialization


def model_to_json(model: StatMechModel) -> str:
    terms = []
    for t in model.terms:
        k = "inf" if (t.k is FROZEN or math.isinf(t.k)) else t.k
        terms.append({"spins": list(t.spins), "k": k, "sign": t.sign})
    payload = {
        "num_spins": model.num_spins,
        "terms": terms,
        "frozen": {str(i): v for i, v in model.frozen.items()},
        "labels": {str(i): list(lab) for i, lab in model.labels.items()},
    }
    return json.dumps(payload)


def model_from_json(text: str) -> StatMechModel:
    payload = json.loads(text)
    terms = []
    for t in payload["terms"]:
        k = FROZEN if t["k"] == "inf" else float(t["k"])
        terms.append(Term(spins=tuple(t["spins"]), k=k, sign=int(t["sign"])))
    labels = {int(i): tuple(lab) for i, lab in payload.get("labels", {}).items()}
    return StatMechModel(
        num_spins=int(payload["num_spins"]),
        terms=terms,
        frozen={int(i): int(v) for i, v in payload["frozen"].items()},
        labels=labels,
    )
