"""Experiment drivers: memory runs, wall stability, punctures, flux threading.

Every driver draws its trials from generators keyed by (master_seed,
trial index), so a run reduces to the same numbers no matter how the
trials are scheduled.  At enumerable sizes the drivers are backed by an
exact layer: the full error distribution fits in a table, giving
closed-form success probabilities and order-parameter averages that the
sampled paths can be checked against.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import gf2
from .bounds import double_flux_bound, single_flux_bound
from .codes import CssCode
from .decoders import (
    ML_ENUM_SLOTS,
    majority_vote_region,
    ml_decode_all,
    mw_decode,
    mwpm_repetition,
    slot_count,
    slots_to_error,
)
from .errors import InvalidInput, InvalidParameter, UnsupportedCode, UnsupportedSize, ValidationError
from .noise import (
    FROZEN,
    Couplings,
    NoiseParams,
    SyndromeHistory,
    couplings_from_params,
    cumulative_signs,
    sample_error,
    syndrome_of,
    true_logical,
)
from .rng import trial_generator
from .statmech import (
    StatMechModel,
    Term,
    build_syndrome_model,
    exact_expectation,
    final_layer_logical_spins,
    qubit_spin,
)
from .transfer import quantum_hamiltonian

DENSE_REPORT_CUTOFF = 12
"""Largest block size for the dense two-puncture correlation report."""


def _scatter_trials(block, args: tuple, n_trials: int, threads: int) -> tuple:
    """Run a per-trial block over [0, n_trials) in contiguous chunks.

    Every trial seeds its own generator from (master seed, trial index),
    so chunk boundaries cannot touch the numbers: the concatenated
    outputs are identical for any worker count.  Blocks return tuples of
    arrays with the trial axis first.
    """
    if threads <= 1:
        return block(*args, 0, n_trials)
    edges = np.linspace(0, n_trials, threads + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(edges, edges[1:]) if b > a]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=len(spans), mp_context=ctx) as pool:
        parts = [pool.submit(block, *args, a, b) for a, b in spans]
        parts = [p.result() for p in parts]
    return tuple(np.concatenate(cols, axis=0) for cols in zip(*parts))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Score interval for a binomial rate; stays inside [0, 1] near the edges."""
    if trials <= 0:
        raise InvalidParameter("trials must be positive")
    if not 0 <= successes <= trials:
        raise InvalidParameter("successes must lie in [0, trials]")
    ph = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = ph + z2 / (2.0 * trials)
    half = z * math.sqrt(ph * (1.0 - ph) / trials + z2 / (4.0 * trials * trials))
    # At the boundary the centre and half-width cancel exactly in real
    # arithmetic; snap them so rounding cannot push the interval past the rate.
    lo = 0.0 if successes == 0 else max((centre - half) / denom, 0.0)
    hi = 1.0 if successes == trials else min((centre + half) / denom, 1.0)
    return lo, hi


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class LogicalTally:
    """Success count for one requested logical product."""

    logicals: tuple[int, ...]
    successes: int
    rate: float
    err_low: float
    err_high: float

    @property
    def order_parameter(self) -> float:
        """2 P - 1, the decoding estimate of the ordering strength."""
        return 2.0 * self.rate - 1.0


@dataclass(frozen=True)
class ExperimentResult:
    trials: int
    successes: int
    success_rate: float
    err_low: float
    err_high: float
    per_logical: tuple[LogicalTally, ...] = ()
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise InvalidParameter("successes must lie in [0, trials]")

    @property
    def order_parameter(self) -> float:
        return 2.0 * self.success_rate - 1.0


def _tally(logicals, successes: int, trials: int) -> LogicalTally:
    lo, hi = wilson_interval(successes, trials)
    return LogicalTally(logicals=tuple(logicals), successes=successes,
                        rate=successes / trials, err_low=lo, err_high=hi)


def _result(trials: int, successes: int, per_logical=(), details=None) -> ExperimentResult:
    lo, hi = wilson_interval(successes, trials)
    return ExperimentResult(trials=trials, successes=successes,
                            success_rate=successes / trials,
                            err_low=lo, err_high=hi,
                            per_logical=tuple(per_logical),
                            details=dict(details or {}))


# ---------------------------------------------------------------------------
# regions and experiment configs


@dataclass(frozen=True)
class StabilizerRegion:
    """A product of z checks: its qubit support and the check indices used."""

    support: tuple[int, ...]
    decomposition: tuple[int, ...]

    @property
    def area(self) -> int:
        return len(self.decomposition)


def stabilizer_region(code: CssCode, decomposition) -> StabilizerRegion:
    """Region built from z-check indices; the support is their GF(2) sum."""
    decomposition = tuple(int(i) for i in decomposition)
    if not decomposition or len(set(decomposition)) != len(decomposition):
        raise InvalidParameter("decomposition must be a nonempty list of distinct check indices")
    m = 0
    for i in decomposition:
        if not 0 <= i < code.num_z_checks:
            raise InvalidParameter(f"check index {i} out of range")
        m ^= code.z_check_masks[i]
    if m == 0:
        raise InvalidParameter("chosen checks multiply to identity; the region is empty")
    support = tuple(q for q in range(code.n_qubits) if m >> q & 1)
    return StabilizerRegion(support=support, decomposition=decomposition)


def validate_region(code: CssCode, region: StabilizerRegion) -> None:
    """Raise unless the decomposition really multiplies to the stated support."""
    m = 0
    for i in region.decomposition:
        if not 0 <= i < code.num_z_checks:
            raise ValidationError(f"check index {i} out of range")
        m ^= code.z_check_masks[i]
    want = 0
    for q in region.support:
        want |= 1 << q
    if m != want:
        raise ValidationError("decomposition does not multiply to the region support")


def default_region(code: CssCode) -> StabilizerRegion:
    """Product of ceil(sqrt(n)) independent z checks, picked front to back."""
    want = math.isqrt(code.n_qubits)
    if want * want < code.n_qubits:
        want += 1
    picked = gf2.independent_subset(code.z_check_masks)
    return stabilizer_region(code, picked[:min(want, len(picked))])


@dataclass(frozen=True)
class PunctureConfig:
    """Wall region with one qubit exposed to bitflips at two chosen times."""

    region: StabilizerRegion
    puncture_qubit: int
    p0: float
    t_f: int

    def __post_init__(self):
        if self.puncture_qubit not in self.region.support:
            raise InvalidParameter("puncture qubit must lie inside the region support")
        if not 0.0 < self.p0 < 0.5:
            raise InvalidParameter(f"p0 must lie in (0, 1/2), got {self.p0}")
        if int(self.t_f) != self.t_f or self.t_f < 1:
            raise InvalidParameter(f"t_f must be a positive integer, got {self.t_f}")

    @property
    def tanh_coupling(self) -> float:
        """tanh of the puncture coupling, p0 / (1 - p0)."""
        return self.p0 / (1.0 - self.p0)


@dataclass(frozen=True)
class FluxThreadingConfig:
    mode: str
    anchor_checks: tuple[int, ...]
    separation: int = 0

    def __post_init__(self):
        if self.mode not in ("single", "double"):
            raise InvalidParameter(f"mode must be 'single' or 'double', got {self.mode!r}")
        object.__setattr__(self, "anchor_checks", tuple(int(a) for a in self.anchor_checks))
        want = 1 if self.mode == "single" else 2
        if len(self.anchor_checks) != want:
            raise InvalidParameter(f"{self.mode} mode takes exactly {want} anchor check(s)")
        if self.mode == "double" and self.anchor_checks[0] == self.anchor_checks[1]:
            raise InvalidParameter("double mode needs two distinct anchors")


# ---------------------------------------------------------------------------
# memory experiment


def _marginal_sign(sector_log_probs: dict, subset) -> int:
    plus, minus = [], []
    for key, v in sector_log_probs.items():
        prod = 1
        for j in subset:
            prod *= key[j]
        (plus if prod == 1 else minus).append(v)
    lp = logsumexp(plus) if plus else -math.inf
    lm = logsumexp(minus) if minus else -math.inf
    return 1 if lp >= lm else -1


def _memory_block(code, params, decoder, js, master_seed, start, stop):
    k = code.num_logicals
    joint = np.zeros(stop - start, dtype=bool)
    per = np.zeros((stop - start, len(js)), dtype=bool)
    for i in range(start, stop):
        rng = trial_generator(master_seed, i)
        e = sample_error(code, params, rng)
        truth = true_logical(code, e)
        s = syndrome_of(code, e, params)
        marginals = None
        if decoder == "mwpm":
            pred = mwpm_repetition(code, params, s).predictions
        elif decoder == "mw":
            pred = mw_decode(code, params, s, weighted=True).predictions
        else:
            res = ml_decode_all(code, params, s)
            pred = res.predictions
            marginals = res.sector_log_probs
        joint[i - start] = all(int(pred[j]) == int(truth[j]) for j in range(k))
        for a, subset in enumerate(js):
            target = 1
            for j in subset:
                target *= int(truth[j])
            if marginals is None:
                guess = 1
                for j in subset:
                    guess *= int(pred[j])
            else:
                guess = _marginal_sign(marginals, subset)
            per[i - start, a] = guess == target
    return joint, per


def run_memory_experiment(code: CssCode, params: NoiseParams, decoder: str = "mwpm",
                          n_trials: int = 1000, master_seed: int = 0,
                          js=None, threads: int = 1) -> ExperimentResult:
    """Sample histories, decode each record, and score joint and per-set success.

    The joint score asks for every logical at once; each entry of `js`
    (defaulting to the single logicals) is scored on the sign of the
    product over that subset.  The likelihood decoder scores subsets
    through the marginalized posterior rather than its joint argmax.
    """
    if js is None:
        js = [(j,) for j in range(code.num_logicals)]
    js = tuple(tuple(int(j) for j in subset) for subset in js)
    if n_trials <= 0:
        raise InvalidParameter("n_trials must be positive")
    if decoder not in ("mwpm", "mw", "ml"):
        raise InvalidInput(f"unknown decoder {decoder!r}")
    joint, per = _scatter_trials(_memory_block, (code, params, decoder, js, master_seed),
                                 n_trials, threads)
    tallies = [_tally(subset, int(per[:, a].sum()), n_trials)
               for a, subset in enumerate(js)]
    return _result(n_trials, int(joint.sum()), tallies,
                   {"decoder": decoder, "master_seed": master_seed})


# ---------------------------------------------------------------------------
# exact layer: the full error distribution at enumerable size


@dataclass(frozen=True)
class DisorderTable:
    """Joint law of (record, true logical sector) summed over every history.

    probs[key, bits] is the probability that the record equals the sign
    pattern encoded by `key` while the true logical signs equal the
    sector encoded by `bits` (bit j set means logical j reads -1).  Keys
    pack signs[check, round] with the round index fastest.
    """

    probs: np.ndarray
    num_checks: int
    t_f: int
    num_logicals: int

    def reachable_keys(self) -> np.ndarray:
        return np.nonzero(self.probs.sum(axis=1) > 0.0)[0]

    def record(self, key: int) -> SyndromeHistory:
        cells = self.num_checks * self.t_f
        bits = (key >> np.arange(cells)) & 1
        signs = (1 - 2 * bits).astype(np.int8).reshape(self.num_checks, self.t_f)
        return SyndromeHistory(signs=signs)

    def subset_split(self, subset) -> tuple[np.ndarray, np.ndarray]:
        """Mass with the product over `subset` reading +1 and -1, per key."""
        k = self.num_logicals
        sel = np.zeros(1 << k, dtype=bool)
        for bits in range(1 << k):
            par = 0
            for j in subset:
                par ^= bits >> j & 1
            sel[bits] = par == 1
        return self.probs[:, ~sel].sum(axis=1), self.probs[:, sel].sum(axis=1)


def _class_log_mass(count: np.ndarray, total: int, p: float) -> np.ndarray:
    if total == 0:
        return np.zeros_like(count, dtype=np.float64)
    if p == 0.0:
        return np.where(count > 0, -np.inf, 0.0)
    return count * math.log(p) + (total - count) * math.log1p(-p)


def enumerate_error_distribution(code: CssCode, params: NoiseParams) -> DisorderTable:
    """Exact joint distribution of record and true sector over all histories."""
    ns = slot_count(code, params)
    if ns > ML_ENUM_SLOTS:
        raise UnsupportedSize(
            f"history enumeration capped at {ML_ENUM_SLOTS} slots, got {ns}")
    c, t_f, k = code.num_z_checks, params.t_f, code.num_logicals
    cells = c * t_f
    syn_masks = [0] * cells
    log_masks = [0] * k
    bf_mask = 0
    for i in range(ns):
        e = slots_to_error(code, params, 1 << i)
        if e.bitflips.any():
            bf_mask |= 1 << i
        flipped = syndrome_of(code, e, params).signs.reshape(-1) == -1
        for cell in np.nonzero(flipped)[0]:
            syn_masks[cell] |= 1 << i
        for j in np.nonzero(true_logical(code, e) == -1)[0]:
            log_masks[j] |= 1 << i
    ks = np.arange(1 << ns, dtype=np.uint64)
    n_bf = int(bin(bf_mask).count("1"))
    count_bf = np.bitwise_count(ks & np.uint64(bf_mask)).astype(np.int64)
    count_m = np.bitwise_count(ks & np.uint64(((1 << ns) - 1) ^ bf_mask)).astype(np.int64)
    logp = (_class_log_mass(count_bf, n_bf, params.p_bf)
            + _class_log_mass(count_m, ns - n_bf, params.p_m))
    with np.errstate(under="ignore"):
        mass = np.exp(logp)
    key = np.zeros(ks.shape, dtype=np.int64)
    for cell in range(cells):
        par = np.bitwise_count(ks & np.uint64(syn_masks[cell])).astype(np.int64) & 1
        key |= par << cell
    sector = np.zeros(ks.shape, dtype=np.int64)
    for j in range(k):
        par = np.bitwise_count(ks & np.uint64(log_masks[j])).astype(np.int64) & 1
        sector |= par << j
    flat = np.bincount(key << k | sector, weights=mass, minlength=1 << (cells + k))
    return DisorderTable(probs=flat.reshape(1 << cells, 1 << k),
                         num_checks=c, t_f=t_f, num_logicals=k)


@dataclass(frozen=True)
class ExactSuccess:
    """Closed-form success probabilities read off the disorder table."""

    all_logicals: float
    per_logical: dict


def exact_success_probabilities(code: CssCode, params: NoiseParams, js=None,
                                decoder: str = "ml") -> ExactSuccess:
    """Exact joint and per-subset success rates for a decoder.

    The likelihood decoder is scored straight off the table (its rule is
    the per-record argmax, so its success mass is the row maximum); any
    other decoder is run once per reachable record.
    """
    if js is None:
        js = [(j,) for j in range(code.num_logicals)]
    js = [tuple(int(j) for j in subset) for subset in js]
    table = enumerate_error_distribution(code, params)
    k = code.num_logicals
    if decoder == "ml":
        p_all = float(table.probs.max(axis=1).sum())
        per = {}
        for subset in js:
            p_plus, p_minus = table.subset_split(subset)
            per[subset] = float(np.maximum(p_plus, p_minus).sum())
        return ExactSuccess(all_logicals=p_all, per_logical=per)
    splits = {subset: table.subset_split(subset) for subset in js}
    p_all = 0.0
    per = {subset: 0.0 for subset in js}
    for key in table.reachable_keys():
        s = table.record(int(key))
        if decoder == "mw":
            pred = mw_decode(code, params, s, weighted=True).predictions
        elif decoder == "mwpm":
            pred = mwpm_repetition(code, params, s).predictions
        else:
            raise InvalidInput(f"unknown decoder {decoder!r}")
        bits = 0
        for j in range(k):
            if pred[j] == -1:
                bits |= 1 << j
        p_all += float(table.probs[key, bits])
        for subset in js:
            guess = 1
            for j in subset:
                guess *= int(pred[j])
            p_plus, p_minus = splits[subset]
            per[subset] += float(p_plus[key] if guess == 1 else p_minus[key])
    return ExactSuccess(all_logicals=p_all, per_logical=per)


# ---------------------------------------------------------------------------
# order parameter scan


@dataclass(frozen=True)
class OrderParameterEstimate:
    """One logical subset's ordering strength measured along every route."""

    logicals: tuple[int, ...]
    success_prob: float
    decode_route: float
    syndrome_route: float
    disorder_route: float
    sign_route: float
    on_matched_line: bool
    identity_checked: bool
    max_deviation: float


def _scaled_couplings(params: NoiseParams, scale: float) -> Couplings:
    if scale <= 0.0:
        raise InvalidParameter("coupling scale must be positive")
    c = couplings_from_params(params)
    return Couplings(k_bf=c.k_bf * scale, k_m=c.k_m * scale)


def _subset_spins(code: CssCode, t_f: int, subset) -> tuple[int, ...]:
    spins: set[int] = set()
    for j in subset:
        spins ^= set(final_layer_logical_spins(code, t_f, j))
    return tuple(sorted(spins))


def order_parameter_scan(code: CssCode, params: NoiseParams, js=None,
                         mode: str = "exact-enumeration",
                         coupling_scale: float = 1.0) -> list[OrderParameterEstimate]:
    """Measure each requested logical product's ordering along every route.

    Routes: the optimal-prediction success probability (folded to
    2P - 1), the record-averaged absolute posterior mean, the
    history-averaged absolute thermal expectation, and the
    history-averaged thermal sign.  A history's thermal value carries
    its true logical sign on top of the record's expectation, so the
    sign route rewards agreement between the thermal sign and the
    truth.  On the matched line (couplings equal to the rates,
    `coupling_scale` 1) all four agree; a detuned scale turns the
    identity flag off and the routes are merely reported.
    """
    if mode not in ("exact-enumeration", "decode-identity"):
        raise InvalidInput(f"unknown mode {mode!r}")
    if js is None:
        js = [(j,) for j in range(code.num_logicals)]
    js = [tuple(int(j) for j in subset) for subset in js]
    table = enumerate_error_distribution(code, params)
    keys = table.reachable_keys()
    c = _scaled_couplings(params, coupling_scale)
    on_line = coupling_scale == 1.0
    thermal: dict[tuple, list] = {subset: [] for subset in js}
    p_key = table.probs.sum(axis=1)
    decoded = {}
    for key in keys:
        record = table.record(int(key))
        model = build_syndrome_model(code, record, c,
                                     final_round_perfect=params.final_round_perfect)
        for subset in js:
            val = exact_expectation(model, _subset_spins(code, params.t_f, subset))
            thermal[subset].append(val)
        if mode == "decode-identity":
            decoded[int(key)] = ml_decode_all(code, params, record).sector_log_probs
    out = []
    for subset in js:
        p_plus, p_minus = table.subset_split(subset)
        if mode == "exact-enumeration":
            p_succ = float(np.maximum(p_plus, p_minus)[keys].sum())
        else:
            p_succ = 0.0
            for key in keys:
                guess = _marginal_sign(decoded[int(key)], subset)
                p_succ += float((p_plus if guess == 1 else p_minus)[key])
        syndrome_route = float(np.abs(p_plus - p_minus)[keys].sum())
        vals = np.array(thermal[subset])
        disorder_route = float(np.sum(p_key[keys] * np.abs(vals)))
        sign_route = float(np.sum((p_plus - p_minus)[keys] * np.sign(vals)))
        routes = [2.0 * p_succ - 1.0, syndrome_route, disorder_route, sign_route]
        dev = max(routes) - min(routes)
        out.append(OrderParameterEstimate(
            logicals=subset, success_prob=p_succ, decode_route=routes[0],
            syndrome_route=syndrome_route, disorder_route=disorder_route,
            sign_route=sign_route, on_matched_line=on_line,
            identity_checked=on_line, max_deviation=dev))
    return out


# ---------------------------------------------------------------------------
# hard wall stability


def _window_bounds(t_f: int) -> tuple[int, int]:
    """Wall window inside the padded run: 3 t_f equilibration rounds each side."""
    pad = 3 * t_f
    return pad, pad + t_f


def _freeze_window_bonds(model: StatMechModel, code: CssCode, region: StabilizerRegion,
                         lo: int, hi: int) -> StatMechModel:
    n = code.n_qubits
    frozen_pairs = {
        (qubit_spin(n, r, t), qubit_spin(n, r, t + 1))
        for r in region.support for t in range(lo, hi)
    }
    terms = [Term(spins=t.spins, k=FROZEN, sign=t.sign)
             if len(t.spins) == 2 and t.spins in frozen_pairs else t
             for t in model.terms]
    meta = dict(model.meta)
    meta["kind"] = "hardwall"
    return StatMechModel(num_spins=model.num_spins, terms=terms,
                         frozen=dict(model.frozen), labels=model.labels, meta=meta)


def _stability_ml(code: CssCode, region: StabilizerRegion, run: NoiseParams,
                  s: SyndromeHistory, lo: int, hi: int) -> int:
    """Posterior sign of the conserved window value given the whole record."""
    model = build_syndrome_model(code, s, couplings_from_params(run))
    model = _freeze_window_bonds(model, code, region, lo, hi)
    spins = tuple(qubit_spin(code.n_qubits, r, hi) for r in region.support)
    val = exact_expectation(model, spins)
    return 1 if val >= 0 else -1


def _stability_block(code, region, run, decoder, lo, hi, seed, start, stop):
    qubits = list(region.support)
    hits = np.zeros(stop - start, dtype=bool)
    for i in range(start, stop):
        rng = trial_generator(seed, i)
        e = sample_error(code, run, rng)
        e.bitflips[np.ix_(qubits, range(lo, hi))] = False
        window_vals = cumulative_signs(e)[qubits, lo:hi + 1].prod(axis=0)
        if not (window_vals == window_vals[0]).all():
            raise ValidationError("region product changed inside the frozen window")
        target = int(window_vals[0])
        s = syndrome_of(code, e, run)
        if decoder == "majority":
            window = SyndromeHistory(signs=s.signs[:, lo:hi])
            guess = majority_vote_region(region.decomposition, window)
        else:
            guess = _stability_ml(code, region, run, s, lo, hi)
        hits[i - start] = guess == target
    return (hits,)


def run_stability_hardwall(code: CssCode, region: StabilizerRegion, params: NoiseParams,
                           t_f: int, n_trials: int = 1000, seed: int = 0,
                           decoder: str = "majority", threads: int = 1) -> ExperimentResult:
    """Freeze bitflips on the region for a window and predict its conserved product.

    The window of t_f rounds sits between equilibration margins of 3 t_f
    noisy rounds on each side; the run's first and last rounds stay
    perfect, standing in for arbitrarily long clean padding.  Inside the
    window the region product cannot change, and the decoder reads it
    from the noisy record (per-round check products with a majority
    vote, or the exact posterior at enumerable size).
    """
    validate_region(code, region)
    if n_trials <= 0:
        raise InvalidParameter("n_trials must be positive")
    if decoder not in ("majority", "ml"):
        raise InvalidInput(f"unknown decoder {decoder!r}")
    lo, hi = _window_bounds(t_f)
    run = NoiseParams(p_bf=params.p_bf, p_m=params.p_m, t_f=hi + 3 * t_f)
    (hits,) = _scatter_trials(_stability_block,
                              (code, region, run, decoder, lo, hi, seed),
                              n_trials, threads)
    return _result(n_trials, int(hits.sum()), (),
                   {"decoder": decoder, "window_rounds": t_f,
                    "pad_rounds": 3 * t_f, "area": region.area})


# ---------------------------------------------------------------------------
# hard wall with two punctures


@dataclass(frozen=True)
class CorrelationReport:
    """Dense spectral data of the wall generator and the value it implies.

    correlation is the imaginary-time autocorrelation of the bit flip
    operator at the puncture across the window; region_expectation is
    the implied stationary region value; bound is its linearized upper
    envelope; gap and matrix_element describe the lowest excitation that
    flips the region sign.
    """

    correlation: float
    tanh_coupling: float
    region_expectation: float
    bound: float
    gap: float
    matrix_element: float


@dataclass(frozen=True)
class TwoPunctureResult:
    experiment: ExperimentResult
    report: CorrelationReport | None


def two_puncture_correlation(code: CssCode, cfg: PunctureConfig, h: float) -> CorrelationReport:
    """Exact correlation report from the dense wall generator.

    The generator is the transverse-field code Hamiltonian with the
    field removed on the region, so the region product is conserved.
    The correlation divides the ground-projected trace of
    X0 exp(-H t_f) X0 by the projected trace of exp(-H t_f).
    """
    n = code.n_qubits
    if n > DENSE_REPORT_CUTOFF:
        raise UnsupportedSize(
            f"dense correlation report capped at {DENSE_REPORT_CUTOFF} qubits, got {n}")
    validate_region(code, cfg.region)
    ham = quantum_hamiltonian(code, h)
    dim = 1 << n
    idx = np.arange(dim)
    for r in cfg.region.support:
        ham[idx ^ (1 << r), idx] += h
    evals, evecs = np.linalg.eigh(ham)
    e0 = float(evals[0])
    ground = evals - e0 <= 1e-9 * max(1.0, abs(e0))
    flip = idx ^ (1 << cfg.puncture_qubit)
    weights = np.exp(-(evals - e0) * cfg.t_f)
    # amp[m, g] = <m| X0 |g> over the ground space columns
    amp = evecs.T @ evecs[flip][:, ground]
    corr = float((amp ** 2 * weights[:, None]).sum() / ground.sum())
    tl = cfg.tanh_coupling
    region_exp = (1.0 - tl * tl * corr) / (1.0 + tl * tl * corr)
    bound = 1.0 - tl * tl * corr
    wmask = 0
    for q in cfg.region.support:
        wmask |= 1 << q
    odd = np.nonzero(np.bitwise_count(idx & wmask) & 1 == 1)[0]
    odd_vals, odd_vecs = np.linalg.eigh(ham[np.ix_(odd, odd)])
    gap = float(odd_vals[0]) - e0
    lowest = np.zeros(dim)
    lowest[odd] = odd_vecs[:, 0]
    me = float((lowest @ evecs[flip][:, ground]) @ (lowest @ evecs[flip][:, ground]))
    return CorrelationReport(correlation=corr, tanh_coupling=tl,
                             region_expectation=region_exp, bound=bound,
                             gap=gap, matrix_element=me)


def _puncture_block(code, cfg, run, lo, hi, seed, start, stop):
    qubits = list(cfg.region.support)
    q0 = cfg.puncture_qubit
    hits = np.zeros(stop - start, dtype=bool)
    for i in range(start, stop):
        rng = trial_generator(seed, i)
        e = sample_error(code, run, rng)
        e.bitflips[qubits, :] = False
        flips = rng.random(2) < cfg.p0
        e.bitflips[q0, lo] = flips[0]
        e.bitflips[q0, hi] = flips[1]
        target = -1 if flips[0] != flips[1] else 1
        s = syndrome_of(code, e, run)
        late = SyndromeHistory(signs=s.signs[:, hi:])
        guess = majority_vote_region(cfg.region.decomposition, late)
        hits[i - start] = guess == target
    return (hits,)


def run_two_puncture(code: CssCode, cfg: PunctureConfig, params: NoiseParams,
                     n_trials: int = 1000, seed: int = 0,
                     threads: int = 1) -> TwoPunctureResult:
    """Wall run with the puncture qubit exposed at the window edges.

    Bitflips stay off on the whole region for the whole padded run,
    except that the puncture qubit may flip just before the window and
    just after it, each with probability p0.  The decoder majority-reads
    the region product from the rounds after the second puncture; a
    trial succeeds when it recovers the true late value.  At dense size
    the spectral report is attached, relating the exact stationary value
    to the puncture autocorrelation; its linearized bound also upper
    bounds the exact value.
    """
    validate_region(code, cfg.region)
    if n_trials <= 0:
        raise InvalidParameter("n_trials must be positive")
    lo, hi = _window_bounds(cfg.t_f)
    run = NoiseParams(p_bf=params.p_bf, p_m=params.p_m, t_f=hi + 3 * cfg.t_f)
    (hits,) = _scatter_trials(_puncture_block, (code, cfg, run, lo, hi, seed),
                              n_trials, threads)
    report = None
    if code.n_qubits <= DENSE_REPORT_CUTOFF:
        h = params.p_bf / (1.0 - params.p_bf)
        report = two_puncture_correlation(code, cfg, h)
    details = {"p0": cfg.p0, "window_rounds": cfg.t_f, "area": cfg.region.area}
    return TwoPunctureResult(experiment=_result(n_trials, int(hits.sum()), (), details),
                             report=report)


# ---------------------------------------------------------------------------
# flux threading


def _require_global_redundancy(code: CssCode) -> None:
    m = 0
    for cm in code.z_check_masks:
        m ^= cm
    if m != 0:
        raise UnsupportedCode(
            "flux threading needs the z checks to multiply to identity "
            "(toric-style global redundancy)")


def exact_flux_failure(q: float, rounds: int) -> float:
    """Failure of a pooled majority over noisy readouts, ties broken to +1."""
    if not 0.0 <= q <= 0.5:
        raise InvalidParameter(f"readout error rate must lie in [0, 1/2], got {q}")
    total = 0.0
    for k in range(rounds + 1):
        pk = math.comb(rounds, k) * q ** k * (1.0 - q) ** (rounds - k)
        if 2 * k > rounds:
            total += pk
        elif 2 * k == rounds:
            total += 0.5 * pk
    return total


def _flux_block(code, cfg, q, t_f, anchors, seed, start, stop):
    hits = np.zeros(stop - start, dtype=bool)
    baseline_hits = np.zeros(stop - start, dtype=bool)
    for i in range(start, stop):
        rng = trial_generator(seed, i)
        hidden = -1 if rng.random() < 0.5 else 1
        outcomes = np.where(rng.random((code.num_z_checks, t_f)) < q, -1, 1)
        outcomes[anchors, :] *= hidden
        guess = 1 if outcomes[anchors, :].sum() >= 0 else -1
        hits[i - start] = guess == hidden
        if cfg.mode == "single":
            per_round = outcomes.prod(axis=0)
        else:
            per_round = outcomes[anchors[0], :]
        baseline = 1 if per_round.sum() >= 0 else -1
        baseline_hits[i - start] = baseline == hidden
    return hits, baseline_hits


def run_flux_threading(code: CssCode, cfg: FluxThreadingConfig, params: NoiseParams,
                       t_f: int, n_trials: int = 1000, seed: int = 0,
                       threads: int = 1) -> ExperimentResult:
    """Thread a hidden sign through the anchor check readouts and recover it.

    Each round, every check readout carries independent noise and the
    anchors are additionally multiplied by the hidden sign.  With
    bitflips off, the likelihood rule is a majority over the anchor
    readouts, pooled over both anchors in double mode.  The baseline
    multiplies all readouts of a round (single mode, using that the
    checks multiply to identity) or reads a single anchor (double mode,
    where the full product cancels the sign).
    """
    _require_global_redundancy(code)
    if params.p_bf != 0.0:
        raise InvalidParameter("flux threading runs with bitflips off (p_bf = 0)")
    if t_f < 1:
        raise InvalidParameter("t_f must be a positive integer")
    if n_trials <= 0:
        raise InvalidParameter("n_trials must be positive")
    anchors = list(cfg.anchor_checks)
    for a in anchors:
        if not 0 <= a < code.num_z_checks:
            raise InvalidParameter(f"anchor check {a} out of range")
    q = params.p_m
    hits, baseline_hits = _scatter_trials(
        _flux_block, (code, cfg, q, t_f, anchors, seed), n_trials, threads)
    successes = int(hits.sum())
    baseline_successes = int(baseline_hits.sum())
    bound_params = NoiseParams(p_bf=0.0, p_m=q, t_f=t_f, final_round_perfect=False)
    if cfg.mode == "single":
        bound = single_flux_bound(code, bound_params)
    else:
        bound = double_flux_bound(code, bound_params,
                                  distance=cfg.separation if cfg.separation > 0 else None)
    pooled_rounds = t_f * len(anchors)
    details = {
        "mode": cfg.mode,
        "baseline_rate": baseline_successes / n_trials,
        "bound_epsilon": bound.epsilon,
        "bound_diverged": bound.diverged,
        "exact_failure": exact_flux_failure(q, pooled_rounds),
    }
    return _result(n_trials, successes, (), details)
