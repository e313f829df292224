import numpy as np
import pytest

from sparsestab import certificate as cert_mod
from sparsestab import dictionary as dict_mod
from sparsestab import solvers as solvers_mod
from sparsestab import stability
from sparsestab.errors import EmptyInput, ValidationError
from sparsestab.stability import (
    CoefficientDistribution,
    TrialSpec,
    aggregate_report,
    build_difference_witness,
    build_instance,
    gen_noise,
    gen_sparse_signal,
    run_trial,
    verify_proof_chain,
    verify_theorem4,
    verify_theorem5,
    verify_uniqueness,
)

DIST = CoefficientDistribution()


@pytest.fixture(scope="module")
def gauss8x12():
    d = dict_mod.random_gaussian(8, 12, seed=2024)
    return d, cert_mod.certify(d)


class TestGenerators:
    def test_signal_k0(self):
        d = dict_mod.random_gaussian(4, 6, seed=1)
        s0, x0 = gen_sparse_signal(d, 0, DIST, seed=9)
        assert not np.any(s0) and not np.any(x0)

    def test_signal_deterministic(self):
        d = dict_mod.random_gaussian(4, 6, seed=1)
        a = gen_sparse_signal(d, 2, DIST, seed=9)
        b = gen_sparse_signal(d, 2, DIST, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_signal_full_support(self):
        d = dict_mod.random_gaussian(4, 6, seed=1)
        s0, _ = gen_sparse_signal(d, 6, DIST, seed=3)
        assert np.count_nonzero(s0) == 6

    def test_signal_magnitude_floor(self):
        d = dict_mod.random_gaussian(4, 6, seed=1)
        for seed in range(10):
            s0, _ = gen_sparse_signal(d, 3, DIST, seed=seed)
            nz = np.abs(s0[s0 != 0])
            assert np.all((nz >= 0.5) & (nz <= 1.5))

    def test_signal_k_out_of_range(self):
        d = dict_mod.random_gaussian(4, 6, seed=1)
        with pytest.raises(ValidationError):
            gen_sparse_signal(d, 7, DIST, seed=0)

    def test_noise_zero_epsilon(self):
        assert not np.any(gen_noise(8, 0.0, seed=4))

    def test_noise_exact_norm(self):
        for eps in (0.1, 1e-3, 2.5):
            n = gen_noise(8, eps, seed=11)
            assert np.linalg.norm(n) == pytest.approx(eps, rel=1e-14)

    def test_noise_deterministic(self):
        assert np.array_equal(gen_noise(8, 0.1, seed=5), gen_noise(8, 0.1, seed=5))

    def test_instance_invariants(self):
        d = dict_mod.random_gaussian(6, 9, seed=2)
        inst = build_instance(d, 2, 0.01, seed=77)
        assert np.array_equal(inst.noisy_signal, inst.clean_signal + inst.noise)
        assert np.allclose(inst.clean_signal, d.entries @ inst.ground_truth, atol=1e-12)
        norm = np.linalg.norm(inst.noise)
        assert abs(norm - inst.epsilon) <= 1e-12 * inst.epsilon
        assert inst.k == 2


class TestDifferenceWitness:
    def test_factorization(self, gauss8x12):
        d, _ = gauss8x12
        rng = np.random.default_rng(3)
        s0 = np.zeros(12)
        s0[[1, 4]] = [1.0, -0.7]
        s_hat = np.zeros(12)
        s_hat[[1, 6]] = [0.9, 0.3]
        w = build_difference_witness(d, s0, s_hat)
        assert w.diff_support == (1, 4, 6)
        assert w.ell_actual == 3
        assert np.linalg.norm(w.b_matrix @ w.v - d.entries @ (s0 - s_hat)) <= 1e-12
        assert w.ell_actual <= np.count_nonzero(s0) + np.count_nonzero(s_hat)

    def test_identical_vectors(self, gauss8x12):
        d, _ = gauss8x12
        s0 = np.zeros(12)
        s0[0] = 1.0
        w = build_difference_witness(d, s0, s0)
        assert w.ell_actual == 0 and w.diff_support == ()


def run_single(d, cert, k, eps, delta, solvers, seed):
    spec = TrialSpec(dictionary=d, k=k, epsilon=eps, delta=delta,
                     solvers=tuple((s, None) for s in solvers), seed=seed)
    return run_trial(spec, cert, trial_id=0)


class TestRunTrial:
    def test_noiseless_exact_recovery(self, gauss8x12):
        d, cert = gauss8x12
        result = run_single(d, cert, k=2, eps=0.0, delta=0.0,
                            solvers=["exhaustive-p0"], seed=5)
        rec = result.solver_records[0]
        assert rec.error <= 1e-9

    def test_solver_failure_recorded_not_fatal(self, gauss8x12):
        d, cert = gauss8x12
        cfg = solvers_mod.SolverConfig(budget=3)
        spec = TrialSpec(dictionary=d, k=2, epsilon=0.0, delta=0.0,
                         solvers=(("exhaustive-p0-delta", cfg),), seed=5)
        result = run_trial(spec, cert)
        rec = result.solver_records[0]
        assert rec.solution is None
        assert "BudgetExceeded" in rec.failure
        assert not rec.eq8.applicable

    def test_deterministic_records(self, gauss8x12):
        d, cert = gauss8x12
        a = run_single(d, cert, 2, 0.01, 0.02, ["exhaustive-p0-delta", "omp"], seed=8)
        b = run_single(d, cert, 2, 0.01, 0.02, ["exhaustive-p0-delta", "omp"], seed=8)
        for ra, rb in zip(a.solver_records, b.solver_records):
            assert ra.error == rb.error
            assert np.array_equal(ra.solution.coefficients, rb.solution.coefficients)

    def test_theorem4_bound_hand_example(self):
        # 2x3 dictionary, k=1, eps=0.01, delta=0.02:
        # bound = 0.03 / sigma_min(2) = 0.03 / 0.5411961... ~ 0.0554
        d = dict_mod.from_entries([[1.0, 0.0, 2 ** -0.5], [0.0, 1.0, 2 ** -0.5]])
        cert = cert_mod.certify(d)
        result = run_single(d, cert, k=1, eps=0.01, delta=0.02,
                            solvers=["exhaustive-p0-delta"], seed=3)
        rec = result.solver_records[0]
        assert rec.eq8.applicable
        assert rec.eq8.bound == pytest.approx(0.03 / 0.54119610014619690, rel=1e-9)
        assert rec.eq8.error <= rec.eq8.bound
        assert rec.eq8.satisfied


class TestTheorem4Gate:
    def test_delta_below_epsilon_not_applicable(self, gauss8x12):
        d, cert = gauss8x12
        result = run_single(d, cert, 2, 0.1, 0.05, ["exhaustive-p0-delta"], seed=4)
        rec = result.solver_records[0]
        assert not rec.eq8.applicable
        assert rec.eq8.reason == "delta < epsilon"
        assert rec.eq8.satisfied is None

    def test_2k_above_spark_not_applicable(self):
        d = dict_mod.dirac_hadamard(4)  # spark 4
        cert = cert_mod.certify(d)
        result = run_single(d, cert, 2, 0.01, 0.02, ["exhaustive-p0-delta"], seed=4)
        rec = result.solver_records[0]
        assert not rec.eq8.applicable
        assert rec.eq8.reason == "2k >= spark"

    def test_wrong_solver_not_applicable(self, gauss8x12):
        d, cert = gauss8x12
        result = run_single(d, cert, 2, 0.01, 0.02, ["omp"], seed=4)
        assert not result.solver_records[0].eq8.applicable

    def test_zero_noise_zero_bound(self, gauss8x12):
        d, cert = gauss8x12
        result = run_single(d, cert, 2, 0.0, 0.0, ["exhaustive-p0-delta"], seed=4)
        rec = result.solver_records[0]
        assert rec.eq8.applicable
        assert rec.eq8.bound == 0.0
        assert rec.eq8.error <= 1e-9
        assert rec.eq8.satisfied


class TestTheorem5:
    def test_magic_guess_applicable_iff_eps_le_delta(self, gauss8x12):
        # the ground truth itself is a feasible estimate exactly when its
        # residual ||noise|| = eps fits the slack
        d, cert = gauss8x12
        inst = build_instance(d, 2, 0.05, seed=21)
        sol = solvers_mod.SparseSolution(
            "magic-guess", inst.ground_truth, tuple(np.flatnonzero(inst.ground_truth)),
            float(np.linalg.norm(inst.noisy_signal - d.entries @ inst.ground_truth)),
            0, True)
        yes = verify_theorem5(d, cert, inst, 0.05, sol)
        assert yes.applicable and yes.error == 0.0 and yes.satisfied
        no = verify_theorem5(d, cert, inst, 0.02, sol)
        assert not no.applicable and no.reason == "residual exceeds delta"

    def test_dense_estimate_gated_out(self, gauss8x12):
        d, cert = gauss8x12
        inst = build_instance(d, 2, 0.05, seed=22)
        dense = np.linalg.lstsq(d.entries, inst.noisy_signal, rcond=None)[0]
        sol = solvers_mod.SparseSolution(
            "dense", dense, tuple(range(12)),
            float(np.linalg.norm(inst.noisy_signal - d.entries @ dense)), 0, True)
        check = verify_theorem5(d, cert, inst, 1.0, sol)
        assert not check.applicable
        assert check.reason == "estimate l0 not below spark/2"

    def test_delta_below_epsilon_still_allowed(self, gauss8x12):
        # the solver-agnostic bound does not require delta >= epsilon
        d, cert = gauss8x12
        eps = 0.1
        delta = eps / 2
        applicable = 0
        for seed in range(30):
            inst = build_instance(d, 2, eps, seed=seed)
            try:
                sol = solvers_mod.robust_sl0(d, inst.noisy_signal, delta)
            except Exception:
                continue
            check = verify_theorem5(d, cert, inst, delta, sol)
            if check.applicable:
                applicable += 1
                assert check.satisfied
        assert applicable > 0

    def test_batch_all_solvers_zero_violations(self, gauss8x12):
        d, cert = gauss8x12
        solvers = ["omp", "sl0", "robust-sl0", "l1-delta"]
        applicable = 0
        for seed in range(25):
            result = run_single(d, cert, k=(seed % 3) + 1, eps=0.01, delta=0.02,
                                solvers=solvers, seed=seed)
            for rec in result.solver_records:
                if rec.eq14.applicable:
                    applicable += 1
                    assert rec.eq14.satisfied, (seed, rec.solver_name)
        assert applicable > 40


class TestProofChain:
    def test_identical_solution_vacuous(self, gauss8x12):
        d, cert = gauss8x12
        inst = build_instance(d, 2, 0.0, seed=31)
        sol = solvers_mod.exhaustive_p0(d, inst.noisy_signal)
        chain = verify_proof_chain(d, cert, inst, 0.0, sol)
        assert chain.applicable and chain.satisfied

    def test_chain_on_noisy_batch(self, gauss8x12):
        d, cert = gauss8x12
        for seed in range(20):
            inst = build_instance(d, 2, 0.01, seed=seed)
            sol = solvers_mod.exhaustive_p0_delta(d, inst.noisy_signal, 0.02)
            chain = verify_proof_chain(d, cert, inst, 0.02, sol)
            assert chain.applicable
            assert chain.upper_ok and chain.factorization_ok and chain.lower_ok
            assert chain.ell_actual <= 2 * inst.k

    def test_chain_not_applicable_above_q(self, gauss8x12):
        d, cert = gauss8x12
        inst = build_instance(d, 5, 0.05, seed=35)
        dense = np.linalg.lstsq(d.entries, inst.noisy_signal, rcond=None)[0]
        sol = solvers_mod.SparseSolution(
            "dense", dense, tuple(range(12)),
            float(np.linalg.norm(inst.noisy_signal - d.entries @ dense)), 0, True)
        chain = verify_proof_chain(d, cert, inst, 1.0, sol)
        assert not chain.applicable


class TestUniqueness:
    def test_dirac_hadamard_k1_unique(self):
        d = dict_mod.dirac_hadamard(4)
        s0 = np.zeros(8)
        s0[0] = 1.0
        rec = verify_uniqueness(d, s0)
        assert rec.unique

    def test_dirac_hadamard_e1_e3_not_unique(self):
        # e1 + e3 equals h1 + h2 after normalization: two distinct 2-sparse
        # representations at k = spark/2
        d = dict_mod.dirac_hadamard(4)
        s0 = np.zeros(8)
        s0[[0, 2]] = 1.0
        rec = verify_uniqueness(d, s0)
        assert not rec.unique
        assert rec.alternative_support is not None
        alt = np.zeros(8)
        alt[list(rec.alternative_support)] = rec.alternative_coefficients
        x0 = d.entries @ s0
        assert np.linalg.norm(d.entries @ alt - x0) <= 1e-10 * np.linalg.norm(x0)
        assert np.count_nonzero(alt) <= 2

    def test_k0_trivially_unique(self):
        d = dict_mod.dirac_hadamard(4)
        rec = verify_uniqueness(d, np.zeros(8))
        assert rec.unique and rec.k == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_below_half_spark_unique(self, seed):
        d = dict_mod.random_gaussian(8, 12, seed=300 + seed)
        s0, _ = gen_sparse_signal(d, 3, DIST, seed=seed)
        assert verify_uniqueness(d, s0).unique


class TestAggregate:
    def test_single_trial_aggregates(self, gauss8x12):
        d, cert = gauss8x12
        result = run_single(d, cert, 2, 0.01, 0.02, ["exhaustive-p0-delta"], seed=41)
        report = aggregate_report([result], cert)
        agg = report.solver_aggregates[0]
        assert agg.trials == 1
        assert agg.eq8.applicable == 1
        assert agg.eq8.violations == 0
        rec = result.solver_records[0]
        assert agg.eq8.ratio_min == pytest.approx(rec.eq8.error / rec.eq8.bound)
        assert agg.eq8.ratio_min == agg.eq8.ratio_max == agg.eq8.ratio_median

    def test_violations_reported_when_zero(self, gauss8x12):
        d, cert = gauss8x12
        results = [run_single(d, cert, 1, 0.01, 0.02, ["exhaustive-p0-delta"], seed=s)
                   for s in range(5)]
        report = aggregate_report(results, cert)
        assert report.total_violations == 0
        assert report.solver_aggregates[0].eq8.violations == 0

    def test_ratio_stats_within_unit_interval(self, gauss8x12):
        d, cert = gauss8x12
        results = [run_single(d, cert, 2, 0.01, 0.02, ["exhaustive-p0-delta"], seed=s)
                   for s in range(10)]
        report = aggregate_report(results, cert)
        agg = report.solver_aggregates[0].eq8
        assert 0.0 <= agg.ratio_min <= agg.ratio_median <= agg.ratio_max <= 1.0

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            aggregate_report([])


def test_bound_monotone_in_sparsity(gauss8x12):
    # the guarantee improves (or stays) as the ground truth gets sparser,
    # directly from profile monotonicity
    d, cert = gauss8x12
    eps, delta = 0.01, 0.02
    bounds = [(delta + eps) / cert.sigma_min(2 * k)
              for k in range(1, cert.kruskal_rank // 2 + 1)]
    assert bounds == sorted(bounds)
