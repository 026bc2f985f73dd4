"""Rigorous failure bounds from counting connected undetectable clusters.

The record of a run is a linear function of the error slots, so
undetectable slot patterns are the kernel of a sparse parity-check graph:
bits are the bitflip slots (r, t) and the noisy-round measurement slots
(S, t), checks are the detector cells.  A check touches at most w + 2
bits, w being the largest stabilizer weight.  Any failure needs a closed
(all checks even) connected cluster spanning a code- or time-scale
distance, and the number of clusters of size ell through a fixed bit
grows at most like (w + 1)^(ell - 1).  Summing the cluster activity
q_tilde = 2 sqrt(q (1 - q)) over that tree bound gives geometric-series
failure envelopes with ratio x = (w + 1) q_tilde.

`enumerate_irreducible_clusters` performs the same search exactly on
small graphs, so the counting and the closed forms can be validated
against brute force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .codes import CssCode, compute_distance_bruteforce
from .errors import InvalidParameter, UnsupportedSize
from .noise import NoiseParams


@dataclass(frozen=True)
class ClassicalCodeGraph:
    """Bit/check incidence of the spacetime decoding problem."""

    bit_labels: tuple[tuple, ...]
    check_labels: tuple[tuple, ...]
    check_to_bits: tuple[tuple[int, ...], ...]
    bit_to_checks: tuple[tuple[int, ...], ...]

    @property
    def n_bits(self) -> int:
        return len(self.bit_labels)

    @property
    def max_check_degree(self) -> int:
        return max((len(b) for b in self.check_to_bits), default=0)


def build_classical_graph(code: CssCode, params: NoiseParams) -> ClassicalCodeGraph:
    """Slots as bits, detector cells as checks, for the given run length."""
    n, t_f = code.n_qubits, params.t_f
    c = code.num_z_checks
    bit_labels = []
    bit_index = {}
    for t in range(t_f):
        for r in range(n):
            bit_index[("flip", r, t)] = len(bit_labels)
            bit_labels.append(("flip", r, t))
    for t in range(1, params.num_meas_rounds + 1):
        for s_i in range(c):
            bit_index[("meas", s_i, t)] = len(bit_labels)
            bit_labels.append(("meas", s_i, t))
    check_labels = []
    check_to_bits = []
    for t in range(t_f):
        for s_i, support in enumerate(code.z_checks):
            bits = [bit_index[("flip", r, t)] for r in support]
            if ("meas", s_i, t) in bit_index:
                bits.append(bit_index[("meas", s_i, t)])
            if ("meas", s_i, t + 1) in bit_index:
                bits.append(bit_index[("meas", s_i, t + 1)])
            check_labels.append(("det", s_i, t + 1))
            check_to_bits.append(tuple(sorted(bits)))
    bit_to_checks = [[] for _ in bit_labels]
    for ci, bits in enumerate(check_to_bits):
        for b in bits:
            bit_to_checks[b].append(ci)
    return ClassicalCodeGraph(
        bit_labels=tuple(bit_labels),
        check_labels=tuple(check_labels),
        check_to_bits=tuple(check_to_bits),
        bit_to_checks=tuple(tuple(v) for v in bit_to_checks),
    )


MAX_LISTING_SIZE = 16


def enumerate_irreducible_clusters(graph: ClassicalCodeGraph, max_size: int,
                                   anchors=None, list_clusters: bool = True):
    """All irreducible closed clusters up to `max_size` bits, plus nodes explored.

    The search grows a cluster one bit at a time, always through the first
    violated check in label order, so the tree fanout never exceeds the
    check degree minus one.  Closed clusters that strictly contain a
    smaller closed cluster are dropped afterwards.

    Beyond MAX_LISTING_SIZE only the explored-state count is available;
    pass list_clusters=False and the cluster list comes back as None.
    """
    if list_clusters and max_size > MAX_LISTING_SIZE:
        raise UnsupportedSize(f"cluster listing capped at size {MAX_LISTING_SIZE}")
    if anchors is None:
        anchors = range(graph.n_bits)
    explored = 0
    closed: set[frozenset[int]] = set()

    def violated_checks(cluster):
        counts = {}
        for b in cluster:
            for ci in graph.bit_to_checks[b]:
                counts[ci] = counts.get(ci, 0) + 1
        return sorted(ci for ci, k in counts.items() if k % 2 == 1)

    def grow(cluster):
        nonlocal explored
        explored += 1
        bad = violated_checks(cluster)
        if not bad:
            if list_clusters:
                closed.add(frozenset(cluster))
            return
        if len(cluster) >= max_size:
            return
        first = bad[0]
        for b in graph.check_to_bits[first]:
            if b not in cluster:
                cluster.add(b)
                grow(cluster)
                cluster.remove(b)

    for a in anchors:
        grow({a})
    if not list_clusters:
        return None, explored
    keep = []
    for cl in sorted(closed, key=lambda c: (len(c), sorted(c))):
        if not any(other < cl for other in closed):
            keep.append(cl)
    return keep, explored


# ---------------------------------------------------------------------------
# closed-form envelopes


@dataclass(frozen=True)
class BoundResult:
    epsilon: float
    x: float
    q_tilde: float
    ell_min: int
    prefactor: float
    diverged: bool
    xi_inv: float


def cluster_activity(params: NoiseParams) -> float:
    """Largest per-bit activity 2 sqrt(q (1 - q)) over the slot classes."""
    vals = [2.0 * math.sqrt(params.p_bf * (1.0 - params.p_bf))]
    if params.num_meas_rounds > 0:
        vals.append(2.0 * math.sqrt(params.p_m * (1.0 - params.p_m)))
    return max(vals)


def branching_factor(code: CssCode) -> int:
    return max(len(s) for s in code.z_checks) + 1


def _tail(prefactor: float, ells: tuple[int, ...], x: float, fanout: int) -> BoundResult:
    ell_min = min(ells)
    q_tilde = x / fanout
    xi_inv = math.inf if x == 0.0 else -math.log(x)
    if x >= 1.0:
        return BoundResult(epsilon=math.inf, x=x, q_tilde=q_tilde, ell_min=ell_min,
                           prefactor=prefactor, diverged=True, xi_inv=xi_inv)
    eps = prefactor * sum(x ** l for l in ells) / ((1.0 - x) * fanout)
    return BoundResult(epsilon=eps, x=x, q_tilde=q_tilde, ell_min=ell_min,
                       prefactor=prefactor, diverged=False, xi_inv=xi_inv)


def _x(code: CssCode, params: NoiseParams) -> tuple[float, int]:
    fanout = branching_factor(code)
    return fanout * cluster_activity(params), fanout


def memory_failure_bound(code: CssCode, params: NoiseParams,
                         distance: int | None = None) -> BoundResult:
    """Envelope on the logical failure probability of a length-t_f run."""
    if distance is None:
        distance = compute_distance_bruteforce(code)
    if distance < 1:
        raise InvalidParameter("distance must be positive")
    x, fanout = _x(code, params)
    return _tail(code.n_qubits * params.t_f, (distance,), x, fanout)


def hardwall_stability_bound(code: CssCode, params: NoiseParams,
                             wall_area: int) -> BoundResult:
    """Envelope on flipping a conserved wall observable: clusters must span time."""
    if wall_area < 1:
        raise InvalidParameter("wall area must be positive")
    x, fanout = _x(code, params)
    return _tail(float(wall_area), (params.t_f,), x, fanout)


def two_puncture_bound(code: CssCode, params: NoiseParams) -> BoundResult:
    """Envelope on the deviation of a two-puncture observable from its clean value."""
    x, fanout = _x(code, params)
    return _tail(1.0, (params.t_f,), x, fanout)


def single_flux_bound(code: CssCode, params: NoiseParams) -> BoundResult:
    """Envelope on reading a threaded flux wrongly from one anchor worldline."""
    x, fanout = _x(code, params)
    return _tail(1.0, (params.t_f,), x, fanout)


def double_flux_bound(code: CssCode, params: NoiseParams,
                      distance: int | None = None) -> BoundResult:
    """Envelope for a far-separated flux pair: time, space, or mixed excursions."""
    if distance is None:
        distance = compute_distance_bruteforce(code)
    x, fanout = _x(code, params)
    ells = (2 * params.t_f, 2 * distance, 2 * distance + 2 * params.t_f)
    return _tail(1.0, ells, x, fanout)
