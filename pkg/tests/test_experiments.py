import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from statqec.codes import CssCode, build_repetition_code, build_toric_code
from statqec.decoders import slot_count, slots_to_error
from statqec.errors import (
    InvalidInput,
    InvalidParameter,
    UnsupportedCode,
    ValidationError,
)
from statqec.experiments import (
    DisorderTable,
    ExperimentResult,
    FluxThreadingConfig,
    PunctureConfig,
    StabilizerRegion,
    default_region,
    enumerate_error_distribution,
    exact_flux_failure,
    exact_success_probabilities,
    order_parameter_scan,
    run_flux_threading,
    run_memory_experiment,
    run_stability_hardwall,
    run_two_puncture,
    stabilizer_region,
    two_puncture_correlation,
    validate_region,
    wilson_interval,
)
from statqec.bounds import hardwall_stability_bound
from statqec.noise import (
    NoiseParams,
    couplings_from_params,
    log_probability,
    syndrome_of,
    true_logical,
)
from statqec.statmech import build_clean_model, exact_expectation, final_layer_logical_spins
from statqec.transfer import quantum_hamiltonian

REP3 = build_repetition_code(3)
REP4 = build_repetition_code(4)
REP5 = build_repetition_code(5)
TORIC2 = build_toric_code(2)


# ---------------------------------------------------------------------------
# oracles


def distribution_oracle(code, params):
    """Brute-force joint law of (record bytes, sector bits) over all histories."""
    out = {}
    for mask in range(1 << slot_count(code, params)):
        e = slots_to_error(code, params, mask)
        lp = log_probability(e, params)
        if lp == -math.inf:
            continue
        s = syndrome_of(code, e, params)
        bits = 0
        for j, v in enumerate(true_logical(code, e)):
            if v == -1:
                bits |= 1 << j
        key = (s.signs.tobytes(), bits)
        out[key] = out.get(key, 0.0) + math.exp(lp)
    return out


def flux_majority_oracle(q, rounds):
    """Failure of the pooled majority by enumerating every noise string."""
    fail = 0.0
    for mask in range(1 << rounds):
        k = bin(mask).count("1")
        pk = q ** k * (1 - q) ** (rounds - k)
        for hidden in (1, -1):
            readouts = sum(hidden * (-1 if mask >> t & 1 else 1) for t in range(rounds))
            guess = 1 if readouts >= 0 else -1
            if guess != hidden:
                fail += 0.5 * pk
    return fail


def wall_expectation_oracle(code, region, puncture_qubit, p0, t_f, h):
    """Stationary region value of the punctured wall by direct dense algebra."""
    n = code.n_qubits
    dim = 1 << n
    idx = np.arange(dim)
    ham = quantum_hamiltonian(code, h)
    for r in region.support:
        ham[idx ^ (1 << r), idx] += h
    evals, evecs = np.linalg.eigh(ham)
    keep = evals - evals[0] <= 1e-9 * max(1.0, abs(evals[0]))
    proj = evecs[:, keep] @ evecs[:, keep].T
    lam = math.atanh(p0 / (1 - p0))
    x0 = np.zeros((dim, dim))
    x0[idx ^ (1 << puncture_qubit), idx] = 1.0
    insertion = math.cosh(lam) * np.eye(dim) - math.sinh(lam) * x0
    decay = expm(-(ham - evals[0] * np.eye(dim)) * t_f)
    wmask = 0
    for q in region.support:
        wmask |= 1 << q
    region_op = np.diag(1.0 - 2.0 * (np.bitwise_count(idx & wmask) & 1))
    num = np.trace(proj @ insertion @ decay @ region_op @ insertion)
    den = np.trace(proj @ insertion @ decay @ insertion)
    return num / den


# ---------------------------------------------------------------------------
# result containers and helpers


class TestWilsonInterval:
    def test_brackets_the_point_estimate(self):
        lo, hi = wilson_interval(7, 10)
        assert 0.0 <= lo <= 0.7 <= hi <= 1.0

    def test_edges_stay_inside_unit_interval(self):
        assert wilson_interval(0, 5)[0] == 0.0
        assert wilson_interval(5, 5)[1] == 1.0
        assert wilson_interval(0, 5)[1] > 0.0
        assert wilson_interval(5, 5)[0] < 1.0

    @given(st.integers(1, 500), st.data())
    @settings(max_examples=50, deadline=None)
    def test_ordering_property(self, trials, data):
        successes = data.draw(st.integers(0, trials))
        lo, hi = wilson_interval(successes, trials)
        assert 0.0 <= lo <= successes / trials <= hi <= 1.0

    def test_rejects_empty_and_overfull(self):
        with pytest.raises(InvalidParameter):
            wilson_interval(0, 0)
        with pytest.raises(InvalidParameter):
            wilson_interval(3, 2)


def test_experiment_result_validates_counts():
    with pytest.raises(InvalidParameter):
        ExperimentResult(trials=5, successes=6, success_rate=1.2,
                         err_low=0.0, err_high=1.0)


# ---------------------------------------------------------------------------
# regions and configs


class TestStabilizerRegion:
    def test_support_is_xor_of_check_supports(self):
        region = stabilizer_region(REP5, [1, 2])
        assert region.support == (1, 3)
        assert region.area == 2
        validate_region(REP5, region)

    def test_adjacent_checks_leave_interior(self):
        region = stabilizer_region(REP4, [1])
        assert region.support == (1, 2)

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(InvalidParameter):
            stabilizer_region(REP5, [])
        with pytest.raises(InvalidParameter):
            stabilizer_region(REP5, [1, 1])
        with pytest.raises(InvalidParameter):
            stabilizer_region(REP5, [99])

    def test_rejects_identity_product(self):
        with pytest.raises(InvalidParameter):
            stabilizer_region(REP3, [0, 1, 2])

    def test_validate_catches_corruption(self):
        bad = StabilizerRegion(support=(0,), decomposition=(1, 2))
        with pytest.raises(ValidationError):
            validate_region(REP5, bad)

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_region_operator_is_stabilizer_product(self, data):
        code = data.draw(st.sampled_from([REP3, REP4, REP5, TORIC2]))
        size = data.draw(st.integers(1, min(3, code.num_z_checks)))
        picked = data.draw(st.lists(st.integers(0, code.num_z_checks - 1),
                                    min_size=size, max_size=size, unique=True))
        mask = 0
        for i in picked:
            mask ^= code.z_check_masks[i]
        if mask == 0:
            with pytest.raises(InvalidParameter):
                stabilizer_region(code, picked)
            return
        region = stabilizer_region(code, picked)
        got = 0
        for q in region.support:
            got |= 1 << q
        assert got == mask

    def test_default_region_size(self):
        region = default_region(REP5)
        assert region.area == 3  # ceil(sqrt(5))
        validate_region(REP5, region)
        toric = default_region(TORIC2)
        assert toric.area == 3  # ceil(sqrt(8))
        validate_region(TORIC2, toric)


class TestConfigs:
    def test_puncture_must_sit_inside_region(self):
        region = stabilizer_region(REP4, [1])
        with pytest.raises(InvalidParameter):
            PunctureConfig(region=region, puncture_qubit=0, p0=0.1, t_f=2)
        cfg = PunctureConfig(region=region, puncture_qubit=1, p0=0.1, t_f=2)
        assert cfg.tanh_coupling == pytest.approx(0.1 / 0.9)

    def test_puncture_rate_bounds(self):
        region = stabilizer_region(REP4, [1])
        for bad in (0.0, 0.5, 0.7):
            with pytest.raises(InvalidParameter):
                PunctureConfig(region=region, puncture_qubit=1, p0=bad, t_f=2)

    def test_flux_config_modes(self):
        FluxThreadingConfig(mode="single", anchor_checks=(0,))
        FluxThreadingConfig(mode="double", anchor_checks=(0, 3), separation=2)
        with pytest.raises(InvalidParameter):
            FluxThreadingConfig(mode="triple", anchor_checks=(0,))
        with pytest.raises(InvalidParameter):
            FluxThreadingConfig(mode="single", anchor_checks=(0, 1))
        with pytest.raises(InvalidParameter):
            FluxThreadingConfig(mode="double", anchor_checks=(2, 2))


# ---------------------------------------------------------------------------
# exact layer


class TestDisorderTable:
    @pytest.mark.parametrize("params", [
        NoiseParams(0.05, 0.05, 2),
        NoiseParams(0.12, 0.3, 2),
        NoiseParams(0.2, 0.0, 2),
    ])
    def test_matches_brute_force_distribution(self, params):
        table = enumerate_error_distribution(REP3, params)
        oracle = distribution_oracle(REP3, params)
        assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)
        for key in table.reachable_keys():
            record = table.record(int(key))
            for bits in range(1 << REP3.num_logicals):
                want = oracle.get((record.signs.tobytes(), bits), 0.0)
                assert table.probs[key, bits] == pytest.approx(want, abs=1e-13)

    def test_record_roundtrip(self):
        params = NoiseParams(0.1, 0.1, 2)
        table = enumerate_error_distribution(REP3, params)
        key = int(table.reachable_keys()[5])
        record = table.record(key)
        assert record.signs.shape == (REP3.num_z_checks, params.t_f)
        assert set(np.unique(record.signs)) <= {-1, 1}


class TestExactSuccess:
    def test_optimal_rule_dominates_single_history_rule(self):
        params = NoiseParams(0.08, 0.08, 2)
        p_ml = exact_success_probabilities(REP3, params, decoder="ml")
        p_mw = exact_success_probabilities(REP3, params, decoder="mw")
        p_mwpm = exact_success_probabilities(REP3, params, decoder="mwpm")
        assert p_mw.all_logicals <= p_ml.all_logicals + 1e-12
        assert p_mwpm.all_logicals <= p_ml.all_logicals + 1e-12
        assert p_ml.all_logicals <= p_ml.per_logical[(0,)] + 1e-12

    def test_matches_posterior_mass_oracle(self):
        params = NoiseParams(0.07, 0.11, 2)
        oracle = distribution_oracle(REP3, params)
        by_record = {}
        for (rec, bits), p in oracle.items():
            by_record.setdefault(rec, {})[bits] = p
        want = sum(max(sector.values()) for sector in by_record.values())
        got = exact_success_probabilities(REP3, params, decoder="ml").all_logicals
        assert got == pytest.approx(want, abs=1e-12)

    def test_unknown_decoder(self):
        with pytest.raises(InvalidInput):
            exact_success_probabilities(REP3, NoiseParams(0.1, 0.1, 1), decoder="nope")


# ---------------------------------------------------------------------------
# memory experiment


class TestMemoryExperiment:
    def test_zero_noise_always_succeeds(self):
        for code, decoder in ((REP5, "mwpm"), (REP3, "ml"), (TORIC2, "mw")):
            res = run_memory_experiment(code, NoiseParams(0.0, 0.0, 2),
                                        decoder=decoder, n_trials=40, master_seed=5)
            assert res.success_rate == 1.0
            assert all(t.rate == 1.0 for t in res.per_logical)

    def test_monte_carlo_matches_exact_within_three_sigma(self):
        params = NoiseParams(0.05, 0.05, 2)
        exact = exact_success_probabilities(REP3, params, decoder="ml").all_logicals
        res = run_memory_experiment(REP3, params, decoder="ml",
                                    n_trials=2000, master_seed=7)
        sigma = math.sqrt(exact * (1 - exact) / res.trials)
        assert abs(res.success_rate - exact) <= 3 * sigma

    def test_matching_route_matches_its_exact_rate(self):
        params = NoiseParams(0.12, 0.1, 2)
        exact = exact_success_probabilities(REP3, params, decoder="mwpm").all_logicals
        res = run_memory_experiment(REP3, params, decoder="mwpm",
                                    n_trials=2000, master_seed=21)
        sigma = math.sqrt(exact * (1 - exact) / res.trials)
        assert abs(res.success_rate - exact) <= 3 * sigma

    def test_deterministic_given_master_seed(self):
        params = NoiseParams(0.1, 0.1, 2)
        a = run_memory_experiment(REP4, params, decoder="mw", n_trials=60, master_seed=3)
        b = run_memory_experiment(REP4, params, decoder="mw", n_trials=60, master_seed=3)
        assert a == b

    def test_joint_success_never_beats_subset_success(self):
        res = run_memory_experiment(TORIC2, NoiseParams(0.08, 0.08, 1),
                                    decoder="ml", n_trials=150, master_seed=9)
        for tally in res.per_logical:
            assert res.successes <= tally.successes

    def test_wilson_bars_bracket_rate(self):
        res = run_memory_experiment(REP3, NoiseParams(0.15, 0.1, 2),
                                    decoder="ml", n_trials=200, master_seed=2)
        assert res.err_low <= res.success_rate <= res.err_high

    def test_unknown_decoder(self):
        with pytest.raises(InvalidInput):
            run_memory_experiment(REP3, NoiseParams(0.1, 0.1, 1),
                                  decoder="magic", n_trials=5)

    def test_smaller_size_fails_more_below_threshold(self):
        params = NoiseParams(0.3, 0.0, 1)
        small = run_memory_experiment(build_repetition_code(11), params,
                                      n_trials=1500, master_seed=13)
        large = run_memory_experiment(build_repetition_code(21), params,
                                      n_trials=1500, master_seed=13)
        assert large.success_rate > small.success_rate


# ---------------------------------------------------------------------------
# order parameter scan


class TestOrderParameterScan:
    def test_near_zero_noise_all_routes_reach_one(self):
        for est in order_parameter_scan(REP3, NoiseParams(1e-4, 1e-4, 2)):
            for route in (est.decode_route, est.syndrome_route,
                          est.disorder_route, est.sign_route):
                assert route == pytest.approx(1.0, abs=1e-3)

    def test_three_way_identity_on_matched_line(self):
        for est in order_parameter_scan(REP3, NoiseParams(0.05, 0.05, 2)):
            assert est.identity_checked
            assert est.max_deviation < 1e-10

    def test_decode_identity_mode_agrees(self):
        for est in order_parameter_scan(REP3, NoiseParams(0.05, 0.05, 2),
                                        mode="decode-identity"):
            assert est.max_deviation < 1e-10

    @pytest.mark.parametrize("code,params", [
        (REP3, NoiseParams(0.04, 0.2, 2)),
        (REP3, NoiseParams(0.25, 0.08, 3)),
        (REP4, NoiseParams(0.1, 0.1, 2)),
        (REP5, NoiseParams(0.15, 0.3, 2)),
        (build_repetition_code(7), NoiseParams(0.3, 0.0, 1)),
        (TORIC2, NoiseParams(0.08, 0.12, 2)),
    ])
    def test_identity_across_instances(self, code, params):
        for est in order_parameter_scan(code, params):
            assert est.max_deviation < 1e-10

    def test_detuned_couplings_flagged_and_deviating(self):
        est = order_parameter_scan(REP3, NoiseParams(0.15, 0.15, 2),
                                   coupling_scale=2.0)[0]
        assert not est.identity_checked
        assert not est.on_matched_line
        assert est.max_deviation > 1e-6

    def test_disorder_route_bounded_by_joint_success(self):
        params = NoiseParams(0.07, 0.13, 2)
        p_all = exact_success_probabilities(REP3, params, decoder="ml").all_logicals
        for est in order_parameter_scan(REP3, params):
            assert est.disorder_route >= 2 * p_all - 1 - 1e-12

    def test_disorder_route_bounded_by_clean_expectation(self):
        params = NoiseParams(0.07, 0.13, 2)
        clean = build_clean_model(REP3, couplings_from_params(params), params.t_f)
        for est in order_parameter_scan(REP3, params):
            spins = final_layer_logical_spins(REP3, params.t_f, est.logicals[0])
            ceiling = exact_expectation(clean, spins)
            assert est.disorder_route <= ceiling + 1e-12

    def test_unknown_mode(self):
        with pytest.raises(InvalidInput):
            order_parameter_scan(REP3, NoiseParams(0.1, 0.1, 1), mode="guess")


# ---------------------------------------------------------------------------
# hard wall stability


class TestStabilityHardwall:
    REGION = stabilizer_region(REP5, [1, 2])

    def test_zero_noise_succeeds(self):
        res = run_stability_hardwall(REP5, self.REGION, NoiseParams(0.0, 0.0, 1),
                                     t_f=2, n_trials=30, seed=1)
        assert res.success_rate == 1.0

    def test_perfect_readout_succeeds_despite_bitflips(self):
        # the window product is read exactly from any single clean round
        res = run_stability_hardwall(REP5, self.REGION, NoiseParams(0.3, 0.0, 1),
                                     t_f=2, n_trials=200, seed=4)
        assert res.success_rate == 1.0

    def test_success_decreases_with_readout_noise(self):
        rates = []
        for p_m in (0.05, 0.15, 0.25, 0.35):
            res = run_stability_hardwall(REP5, self.REGION,
                                         NoiseParams(0.05, p_m, 1),
                                         t_f=3, n_trials=3000, seed=11)
            rates.append(res.success_rate)
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_failure_within_bound_envelope(self):
        params = NoiseParams(0.01, 0.01, 3)
        res = run_stability_hardwall(REP5, self.REGION, params,
                                     t_f=3, n_trials=4000, seed=5)
        bound = hardwall_stability_bound(REP5, params, wall_area=self.REGION.area)
        assert not bound.diverged
        assert 2 * (1 - res.success_rate) <= 2 * bound.epsilon

    def test_posterior_decoder_at_tiny_scale(self):
        region = stabilizer_region(REP3, [0, 1])
        maj = run_stability_hardwall(REP3, region, NoiseParams(0.08, 0.2, 1),
                                     t_f=1, n_trials=6, seed=3, decoder="majority")
        ml = run_stability_hardwall(REP3, region, NoiseParams(0.08, 0.2, 1),
                                    t_f=1, n_trials=6, seed=3, decoder="ml")
        assert 0.0 <= ml.success_rate <= 1.0
        assert ml.details["decoder"] == "ml"
        assert maj.trials == ml.trials

    def test_rejects_bad_region_and_decoder(self):
        bad = StabilizerRegion(support=(0,), decomposition=(1, 2))
        with pytest.raises(ValidationError):
            run_stability_hardwall(REP5, bad, NoiseParams(0.1, 0.1, 1),
                                   t_f=1, n_trials=5, seed=0)
        with pytest.raises(InvalidInput):
            run_stability_hardwall(REP5, self.REGION, NoiseParams(0.1, 0.1, 1),
                                   t_f=1, n_trials=5, seed=0, decoder="nope")


# ---------------------------------------------------------------------------
# two punctures


class TestTwoPuncture:
    REGION = stabilizer_region(REP4, [1])
    CFG = PunctureConfig(region=REGION, puncture_qubit=1, p0=0.1, t_f=2)

    @pytest.mark.parametrize("h,p0,t_f", [
        (0.3, 0.1, 2), (0.2, 0.25, 1), (0.45, 0.05, 3),
    ])
    def test_report_matches_dense_oracle(self, h, p0, t_f):
        cfg = PunctureConfig(region=self.REGION, puncture_qubit=1, p0=p0, t_f=t_f)
        report = two_puncture_correlation(REP4, cfg, h)
        want = wall_expectation_oracle(REP4, self.REGION, 1, p0, t_f, h)
        assert report.region_expectation == pytest.approx(want, abs=1e-10)

    def test_linearized_bound_dominates(self):
        for h in (0.1, 0.3, 0.6):
            report = two_puncture_correlation(REP4, self.CFG, h)
            assert report.correlation >= 0.0
            assert report.region_expectation <= report.bound + 1e-12
            assert report.gap > 0.0

    def test_correlation_decays_in_window_length(self):
        values = []
        for t_f in (1, 2, 3, 4):
            cfg = PunctureConfig(region=self.REGION, puncture_qubit=1, p0=0.1, t_f=t_f)
            values.append(two_puncture_correlation(REP4, cfg, 0.2).correlation)
        assert all(a > b > 0.0 for a, b in zip(values, values[1:]))

    def test_vanishing_puncture_rate_recovers_unity(self):
        cfg = PunctureConfig(region=self.REGION, puncture_qubit=1, p0=1e-5, t_f=2)
        out = run_two_puncture(REP4, cfg, NoiseParams(0.02, 0.02, 1),
                               n_trials=300, seed=3)
        assert out.report is not None
        assert out.report.region_expectation == pytest.approx(1.0, abs=1e-6)
        assert out.experiment.success_rate == pytest.approx(1.0, abs=0.02)

    def test_sampled_run_is_deterministic(self):
        a = run_two_puncture(REP4, self.CFG, NoiseParams(0.05, 0.05, 1),
                             n_trials=100, seed=8)
        b = run_two_puncture(REP4, self.CFG, NoiseParams(0.05, 0.05, 1),
                             n_trials=100, seed=8)
        assert a.experiment == b.experiment

    def test_large_blocks_skip_the_dense_report(self):
        code = build_repetition_code(13)
        region = stabilizer_region(code, [1])
        cfg = PunctureConfig(region=region, puncture_qubit=1, p0=0.1, t_f=1)
        out = run_two_puncture(code, cfg, NoiseParams(0.05, 0.05, 1),
                               n_trials=20, seed=1)
        assert out.report is None
        assert out.experiment.trials == 20


# ---------------------------------------------------------------------------
# flux threading


def open_chain_code():
    """Three qubits on a line: checks do not multiply to identity."""
    return CssCode(n_qubits=3, z_checks=((0, 1), (1, 2)),
                   x_checks=(), logical_z=((0,),), logical_x=((0, 1, 2),))


class TestFluxThreading:
    SINGLE = FluxThreadingConfig(mode="single", anchor_checks=(0,))
    DOUBLE = FluxThreadingConfig(mode="double", anchor_checks=(0, 3), separation=2)

    def test_perfect_readout_recovers_every_trial(self):
        res = run_flux_threading(TORIC2, self.SINGLE, NoiseParams(0.0, 0.0, 1),
                                 t_f=4, n_trials=200, seed=1)
        assert res.success_rate == 1.0
        assert res.details["baseline_rate"] == 1.0

    def test_failure_decays_log_linearly(self):
        fails = []
        for t_f in (3, 5, 7, 9):
            res = run_flux_threading(TORIC2, self.SINGLE, NoiseParams(0.0, 0.2, 1),
                                     t_f=t_f, n_trials=10_000, seed=42)
            fails.append(1 - res.success_rate)
        slope = np.polyfit([3, 5, 7, 9], np.log(fails), 1)[0]
        assert slope < 0.0

    def test_monte_carlo_matches_exact_failure(self):
        res = run_flux_threading(TORIC2, self.DOUBLE, NoiseParams(0.0, 0.25, 1),
                                 t_f=3, n_trials=20_000, seed=9)
        exact = res.details["exact_failure"]
        sigma = math.sqrt(exact * (1 - exact) / res.trials)
        assert abs((1 - res.success_rate) - exact) <= 3 * sigma

    @pytest.mark.parametrize("q,rounds", [(0.1, 3), (0.2, 4), (0.3, 5), (0.15, 6)])
    def test_exact_failure_matches_enumeration(self, q, rounds):
        assert exact_flux_failure(q, rounds) == pytest.approx(
            flux_majority_oracle(q, rounds), abs=1e-13)

    def test_double_failure_squares_the_single_exponent(self):
        single = exact_flux_failure(0.05, 4)
        double = exact_flux_failure(0.05, 8)
        assert abs(math.log10(double) - 2 * math.log10(single)) < 1.0

    def test_pooling_beats_one_anchor_baseline(self):
        res = run_flux_threading(TORIC2, self.DOUBLE, NoiseParams(0.0, 0.2, 1),
                                 t_f=5, n_trials=5000, seed=17)
        assert res.success_rate > res.details["baseline_rate"]

    def test_requires_global_redundancy(self):
        with pytest.raises(UnsupportedCode):
            run_flux_threading(open_chain_code(), self.SINGLE,
                               NoiseParams(0.0, 0.1, 1), t_f=2, n_trials=5, seed=0)

    def test_requires_bitflips_off(self):
        with pytest.raises(InvalidParameter):
            run_flux_threading(TORIC2, self.SINGLE, NoiseParams(0.1, 0.1, 1),
                               t_f=2, n_trials=5, seed=0)

    def test_anchor_range_checked(self):
        cfg = FluxThreadingConfig(mode="single", anchor_checks=(99,))
        with pytest.raises(InvalidParameter):
            run_flux_threading(TORIC2, cfg, NoiseParams(0.0, 0.1, 1),
                               t_f=2, n_trials=5, seed=0)
