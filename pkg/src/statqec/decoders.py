"""Decoders: recover the logical signs of a noise history from its record.

All decoders work on the linear slot picture of a history: bitflip slots
(r, t) for t = 0 .. t_f - 1 come first in qubit-major-by-time order, then
measurement slots (S, t) for the noisy rounds.  The record is a linear
function of the slots over GF(2), so every decoder starts from one
particular solution plus the kernel of that map.

Three families are provided.  `ml_decode_*` sums the probability of every
class representative (two independent routes, enumeration and order
parameters of the matching layered models).  `mw_decode` picks the single most
probable (or fewest-slot) history.  `mwpm_repetition` is the scalable
matching decoder for ring codes, exact for pair-creating noise there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import gf2
from .codes import CssCode
from .errors import InconsistentBoundary, InvalidInput, UnsupportedCode, UnsupportedSize
from .matching import SPARSE_CUTOFF, min_weight_perfect_matching
from .noise import (
    ErrorPattern,
    NoiseParams,
    SyndromeHistory,
    couplings_from_params,
    detection_events,
    syndrome_of,
    true_logical,
)
from .statmech import build_gauge_model, exact_expectation, final_layer_logical_spins

ML_ENUM_SLOTS = 22
MW_ENUM_KERNEL = 26
TIE_MARGIN = 1e-9


def slot_count(code: CssCode, params: NoiseParams) -> int:
    return code.n_qubits * params.t_f + code.num_z_checks * params.num_meas_rounds


def error_to_slots(e: ErrorPattern, params: NoiseParams) -> int:
    """Pack a history into a slot bitmask, bitflip slots then meas slots."""
    n, t_f = e.bitflips.shape
    mask = 0
    for t in range(t_f):
        for r in range(n):
            if e.bitflips[r, t]:
                mask |= 1 << (t * n + r)
    base = n * t_f
    c = e.meas_errors.shape[0]
    for t in range(e.meas_errors.shape[1]):
        for s_i in range(c):
            if e.meas_errors[s_i, t]:
                mask |= 1 << (base + t * c + s_i)
    return mask


def slots_to_error(code: CssCode, params: NoiseParams, mask: int) -> ErrorPattern:
    n, t_f = code.n_qubits, params.t_f
    c = code.num_z_checks
    bitflips = np.zeros((n, t_f), dtype=bool)
    meas = np.zeros((c, params.num_meas_rounds), dtype=bool)
    for t in range(t_f):
        for r in range(n):
            if mask >> (t * n + r) & 1:
                bitflips[r, t] = True
    base = n * t_f
    for t in range(params.num_meas_rounds):
        for s_i in range(c):
            if mask >> (base + t * c + s_i) & 1:
                meas[s_i, t] = True
    return ErrorPattern(bitflips=bitflips, meas_errors=meas)


def _syndrome_solution(code: CssCode, params: NoiseParams,
                       s: SyndromeHistory) -> tuple[int, list[int]]:
    """Particular slot mask plus kernel basis of the record map for this record."""
    n_slots = slot_count(code, params)
    c, t_f = code.num_z_checks, params.t_f
    if s.signs.shape != (c, t_f):
        raise InvalidInput("record shape does not match code and t_f")
    columns = []
    for i in range(n_slots):
        probe = syndrome_of(code, slots_to_error(code, params, 1 << i), params)
        columns.append((probe.signs == -1).flatten())
    rows = np.array(columns).T  # [detector, slot]
    target = (s.signs == -1).flatten()
    equations = []
    for d in range(rows.shape[0]):
        mask = 0
        for i in np.nonzero(rows[d])[0]:
            mask |= 1 << int(i)
        equations.append((mask, int(target[d])))
    particular, kernel = gf2.solve_system(equations, n_slots)
    if particular is None:
        raise InconsistentBoundary("no history produces this record")
    return particular, kernel


def _slot_class_masks(code: CssCode, params: NoiseParams) -> tuple[int, int]:
    n_bf = code.n_qubits * params.t_f
    bf_mask = (1 << n_bf) - 1
    m_mask = ((1 << slot_count(code, params)) - 1) ^ bf_mask
    return bf_mask, m_mask


def _logical_slot_masks(code: CssCode, params: NoiseParams) -> list[int]:
    """Per logical, the bitflip slots whose parity gives the final-time sign."""
    n, t_f = code.n_qubits, params.t_f
    masks = []
    for support in code.logical_z:
        m = 0
        for r in support:
            for t in range(t_f):
                m |= 1 << (t * n + r)
        masks.append(m)
    return masks


def _coset_table(code: CssCode, params: NoiseParams, s: SyndromeHistory):
    """All consistent slot masks with their log relative weights and sector bits."""
    particular, kernel = _syndrome_solution(code, params, s)
    elements = gf2.span_elements(kernel, offset=particular)
    bf_mask, m_mask = _slot_class_masks(code, params)
    cnt_bf = gf2.popcount(elements & np.uint64(bf_mask)).astype(np.float64)
    cnt_m = gf2.popcount(elements & np.uint64(m_mask)).astype(np.float64)
    valid = np.ones(len(elements), dtype=bool)
    logw = np.zeros(len(elements))
    if params.p_bf == 0.0:
        valid &= cnt_bf == 0
    else:
        logw += cnt_bf * math.log(params.p_bf / (1.0 - params.p_bf))
    if params.p_m == 0.0:
        valid &= cnt_m == 0
    elif params.p_m == 0.5:
        pass  # all meas patterns equally likely
    else:
        logw += cnt_m * math.log(params.p_m / (1.0 - params.p_m))
    if not valid.any():
        raise InconsistentBoundary("record incompatible with zero-rate slots")
    elements = elements[valid]
    logw = logw[valid]
    sector = np.zeros(len(elements), dtype=np.int64)
    for j, lmask in enumerate(_logical_slot_masks(code, params)):
        par = gf2.popcount(elements & np.uint64(lmask)).astype(np.int64) & 1
        sector |= par << j
    return elements, logw, sector


def _sector_tuple(bits: int, k: int) -> tuple[int, ...]:
    return tuple(-1 if bits >> j & 1 else 1 for j in range(k))


@dataclass(frozen=True)
class MlResult:
    sector_log_probs: dict[tuple[int, ...], float]
    predictions: tuple[int, ...]
    tie_flag: bool


def ml_decode_all(code: CssCode, params: NoiseParams, s: SyndromeHistory) -> MlResult:
    """Posterior over all joint logical classes by direct class enumeration."""
    if slot_count(code, params) > ML_ENUM_SLOTS:
        raise UnsupportedSize(
            f"class enumeration capped at {ML_ENUM_SLOTS} slots, "
            f"got {slot_count(code, params)}")
    _, logw, sector = _coset_table(code, params, s)
    k = code.num_logicals
    total = logsumexp(logw)
    log_probs = {}
    for bits in range(1 << k):
        sel = sector == bits
        val = float(logsumexp(logw[sel]) - total) if sel.any() else -math.inf
        log_probs[_sector_tuple(bits, k)] = val
    ranked = sorted(log_probs.items(),
                    key=lambda kv: (-kv[1], tuple(0 if v == 1 else 1 for v in kv[0])))
    best_key, best_val = ranked[0]
    tie = len(ranked) > 1 and ranked[1][1] > best_val - TIE_MARGIN
    return MlResult(sector_log_probs=log_probs, predictions=best_key, tie_flag=tie)


def ml_decode_logical(code: CssCode, params: NoiseParams, s: SyndromeHistory,
                      j: int) -> tuple[int, bool]:
    """Most probable sign of one logical, marginalized over the others."""
    result = ml_decode_all(code, params, s)
    plus = [v for key, v in result.sector_log_probs.items() if key[j] == 1]
    minus = [v for key, v in result.sector_log_probs.items() if key[j] == -1]
    lp = logsumexp(plus) if plus else -math.inf
    lm = logsumexp(minus) if minus else -math.inf
    if abs(lp - lm) <= TIE_MARGIN:
        return 1, True
    return (1 if lp > lm else -1), False


def ml_sector_log_probs_via_order_parameter(
        code: CssCode, params: NoiseParams,
        s: SyndromeHistory) -> dict[tuple[int, ...], float]:
    """Same posterior as `ml_decode_all`, read off the layered model instead.

    The partition sum of the record's model weighs whole degeneracy
    classes at once, so the class posterior is carried by the final-layer
    logical observables: the probability of a joint class is the
    symmetrized combination of every logical-product expectation.  A
    representative history (the particular solution, run through the
    gauge-extended model so spatial redundancy moves are summed) anchors
    which class is which.
    """
    particular, _ = _syndrome_solution(code, params, s)
    e_rep = slots_to_error(code, params, particular)
    ell_rep = true_logical(code, e_rep)
    c = couplings_from_params(params)
    model = build_gauge_model(code, e_rep, c)
    k = code.num_logicals
    spin_sets = [frozenset(final_layer_logical_spins(code, params.t_f, j))
                 for j in range(k)]
    exps = {0: 1.0}
    for bits in range(1, 1 << k):
        spins: set[int] = set()
        sign = 1
        for j in range(k):
            if bits >> j & 1:
                spins ^= spin_sets[j]
                sign *= int(ell_rep[j])
        exps[bits] = sign * exact_expectation(model, tuple(sorted(spins)))
    out = {}
    for sec_bits in range(1 << k):
        eps = _sector_tuple(sec_bits, k)
        p = 0.0
        for bits in range(1 << k):
            chi = 1
            for j in range(k):
                if bits >> j & 1:
                    chi *= eps[j]
            p += chi * exps[bits]
        p = max(p / (1 << k), 0.0)
        out[eps] = math.log(p) if p > 0.0 else -math.inf
    return out


@dataclass(frozen=True)
class MwResult:
    predictions: tuple[int, ...]
    weight: float
    tie_flag: bool
    correction: ErrorPattern


def mw_decode(code: CssCode, params: NoiseParams, s: SyndromeHistory,
              weighted: bool = False) -> MwResult:
    """Single best history: fewest slots, or most probable when weighted."""
    particular, kernel = _syndrome_solution(code, params, s)
    if len(kernel) > MW_ENUM_KERNEL:
        raise UnsupportedSize(f"kernel enumeration capped at {MW_ENUM_KERNEL} dims")
    elements, logw, sector = _coset_table(code, params, s)
    if weighted:
        cost = -logw
    else:
        cost = gf2.popcount(elements).astype(np.float64)
    best = cost.min()
    at_min = np.nonzero(cost <= best + TIE_MARGIN)[0]
    n_slots = slot_count(code, params)

    def lex_key(mask: int) -> int:
        rev = 0
        for i in range(n_slots):
            if mask >> i & 1:
                rev |= 1 << (n_slots - 1 - i)
        return rev

    chosen = min((int(elements[i]) for i in at_min), key=lex_key)
    chosen_idx = int(np.nonzero(elements == np.uint64(chosen))[0][0])
    k = code.num_logicals
    predictions = _sector_tuple(int(sector[chosen_idx]), k)
    tie = bool(len({int(sector[i]) for i in at_min}) > 1)
    return MwResult(predictions=predictions, weight=float(best), tie_flag=tie,
                    correction=slots_to_error(code, params, chosen))


# ---------------------------------------------------------------------------
# matching decoder for ring codes


@dataclass(frozen=True)
class RingLayout:
    checks: tuple[int, ...]   # check ids in ring order
    qubits: tuple[int, ...]   # qubits[i] joins checks[i] and checks[i+1]
    position: tuple[int, ...]  # position[check_id] = index in `checks`


def ring_layout(code: CssCode) -> RingLayout:
    """Ring order of a repetition-style code; raises for anything else."""
    c = code.num_z_checks
    if c != code.n_qubits or c < 3:
        raise UnsupportedCode("matching decoder needs a ring with >= 3 checks")
    if any(len(s) != 2 for s in code.z_checks):
        raise UnsupportedCode("matching decoder needs weight-2 checks")
    qubit_checks: dict[int, list[int]] = {}
    for i, sup in enumerate(code.z_checks):
        for q in sup:
            qubit_checks.setdefault(q, []).append(i)
    if any(len(v) != 2 for v in qubit_checks.values()) or len(qubit_checks) != c:
        raise UnsupportedCode("matching decoder needs each qubit in exactly 2 checks")
    order = [0]
    link = []
    cur = 0
    q = min(code.z_checks[0])
    while True:
        link.append(q)
        nxt = [i for i in qubit_checks[q] if i != cur]
        if len(nxt) != 1:
            raise UnsupportedCode("checks do not form a single ring")
        if nxt[0] == 0:
            break
        cur = nxt[0]
        order.append(cur)
        if len(order) > c:
            raise UnsupportedCode("checks do not form a single ring")
        q = [qq for qq in code.z_checks[cur] if qq != q][0]
    if len(order) != c or len(set(link)) != c:
        raise UnsupportedCode("checks do not form a single ring")
    position = [0] * c
    for idx, ck in enumerate(order):
        position[ck] = idx
    return RingLayout(checks=tuple(order), qubits=tuple(link), position=tuple(position))


@dataclass(frozen=True)
class MwpmResult:
    predictions: tuple[int, ...]
    weight: float
    pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    defects: tuple[tuple[int, int], ...]
    correction: ErrorPattern


def _arc_qubits(layout: RingLayout, pos_a: int, pos_b: int) -> list[int]:
    """Qubits along the shorter arc between ring positions; ties go clockwise
    from the lower position."""
    c = len(layout.checks)
    fwd = (pos_b - pos_a) % c
    bwd = (pos_a - pos_b) % c
    if fwd < bwd or (fwd == bwd and pos_a <= pos_b):
        return [layout.qubits[(pos_a + i) % c] for i in range(fwd)]
    return [layout.qubits[(pos_b + i) % c] for i in range(bwd)]


_RING_SPAN = 4


def _ring_candidates(pos: np.ndarray, tim: np.ndarray, c: int):
    """Edges likely to enter the optimal defect matching.

    Consecutive defects within a ring column, plus time-bracketing defects
    in columns up to `_RING_SPAN` ring steps away.  Purely a performance
    hint for the matcher; its certificate keeps the result exact.
    """
    m = pos.size
    if m <= SPARSE_CUTOFF:
        return None
    mask = np.zeros((m, m), dtype=bool)
    order: dict[int, np.ndarray] = {}
    for col in np.unique(pos):
        idx = np.nonzero(pos == col)[0]
        idx = idx[np.argsort(tim[idx], kind="stable")]
        order[int(col)] = idx
        mask[idx[:-1], idx[1:]] = True
        if idx.size > 2:
            mask[idx[:-2], idx[2:]] = True
    for col, idx in order.items():
        tcol = tim[idx]
        seen = {col}
        for off in range(1, _RING_SPAN + 1):
            for col2 in ((col + off) % c, (col - off) % c):
                if col2 in seen:
                    continue
                seen.add(col2)
                other = order.get(col2)
                if other is None:
                    continue
                ins = np.searchsorted(tim[other], tcol)
                mask[idx, other[np.clip(ins - 1, 0, other.size - 1)]] = True
                mask[idx, other[np.clip(ins, 0, other.size - 1)]] = True
    return mask


def mwpm_repetition(code: CssCode, params: NoiseParams,
                    s: SyndromeHistory) -> MwpmResult:
    """Minimum weight matching of defect events on the ring times the interval.

    Weights are the log odds of one qubit flip per space step and one
    readout error per time step.  Zero-rate directions split the problem
    into independent finite subproblems instead of infinite weights.
    """
    layout = ring_layout(code)
    if code.num_logicals != 1:
        raise UnsupportedCode("ring matching expects a single logical")
    events = detection_events(s)
    c = len(layout.checks)
    defects = [(layout.position[ck], t + 1)
               for ck in range(c) for t in range(s.t_f) if events[ck, t]]
    defects.sort(key=lambda d: (d[1], d[0]))
    if len(defects) % 2 != 0:
        raise InvalidInput("odd defect count; record is not a valid history")
    w_h = math.log((1 - params.p_bf) / params.p_bf) if params.p_bf > 0 else math.inf
    w_v = math.log((1 - params.p_m) / params.p_m) if params.p_m > 0 else math.inf

    if params.p_m == 0.0:
        groups = sorted({t for _, t in defects})
        buckets = [[d for d in defects if d[1] == t] for t in groups]
    elif params.p_bf == 0.0:
        groups = sorted({x for x, _ in defects})
        buckets = [[d for d in defects if d[0] == x] for x in groups]
    else:
        buckets = [defects]
    pairs = []
    total = 0.0
    for bucket in buckets:
        if len(bucket) % 2 != 0:
            raise InvalidInput("record incompatible with zero-rate direction")
        if not bucket:
            continue
        m = len(bucket)
        pos = np.fromiter((p for p, _ in bucket), dtype=np.int64, count=m)
        tim = np.fromiter((t for _, t in bucket), dtype=np.int64, count=m)
        dx = np.abs(pos[:, None] - pos[None, :])
        np.minimum(dx, c - dx, out=dx)
        dt = np.abs(tim[:, None] - tim[None, :])
        d_mat = np.zeros((m, m))
        if dx.any():
            d_mat += dx * w_h
        if dt.any():
            d_mat += dt * w_v
        chosen, wsum = min_weight_perfect_matching(
            d_mat, candidates=_ring_candidates(pos, tim, c))
        total += wsum
        pairs.extend((bucket[i], bucket[jj]) for i, jj in chosen)

    n, t_f = code.n_qubits, params.t_f
    bitflips = np.zeros((n, t_f), dtype=bool)
    meas = np.zeros((code.num_z_checks, params.num_meas_rounds), dtype=bool)
    for a, b in pairs:
        if a[1] > b[1]:
            a, b = b, a
        (pa, t1), (pb, t2) = a, b
        for q in _arc_qubits(layout, pa, pb):
            bitflips[q, t1 - 1] ^= True
        check_id = layout.checks[pb]
        for t in range(t1, t2):
            meas[check_id, t - 1] ^= True
    correction = ErrorPattern(bitflips=bitflips, meas_errors=meas)
    predictions = tuple(int(v) for v in true_logical(code, correction))
    return MwpmResult(predictions=predictions, weight=total,
                      pairs=tuple(pairs), defects=tuple(defects),
                      correction=correction)


def majority_vote_region(decomposition, s: SyndromeHistory) -> int:
    """Majority over rounds of the product of the listed check signs; ties +1."""
    votes = 0
    for t in range(s.t_f):
        prod = 1
        for ck in decomposition:
            prod *= int(s.signs[ck, t])
        votes += prod
    return 1 if votes >= 0 else -1


# ---------------------------------------------------------------------------
# batch runs


def decode_batch(code: CssCode, params: NoiseParams, syndromes,
                 decoder: str = "mwpm") -> list[dict]:
    """Decode a sequence of records into plain dict rows for serialization."""
    rows = []
    for i, s in enumerate(syndromes):
        if decoder == "mwpm":
            res = mwpm_repetition(code, params, s)
            rows.append({"instance_id": i,
                         "predictions": [int(v) for v in res.predictions],
                         "tie_flag": False, "weight": res.weight})
        elif decoder == "mw":
            res = mw_decode(code, params, s, weighted=True)
            rows.append({"instance_id": i,
                         "predictions": [int(v) for v in res.predictions],
                         "tie_flag": res.tie_flag, "weight": res.weight})
        elif decoder == "ml":
            res = ml_decode_all(code, params, s)
            rows.append({"instance_id": i,
                         "predictions": [int(v) for v in res.predictions],
                         "tie_flag": res.tie_flag, "weight": None})
        else:
            raise InvalidInput(f"unknown decoder {decoder!r}")
    return rows
