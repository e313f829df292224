import itertools

import numpy as np
import pytest

from sparsestab import certificate as cert_mod
from sparsestab import dictionary as dict_mod
from sparsestab import solvers as solvers_mod
from sparsestab.errors import (
    BudgetExceeded,
    DimensionMismatch,
    SupportTooLarge,
    ValidationError,
)
from sparsestab.solvers import (
    SolverConfig,
    exhaustive_p0,
    exhaustive_p0_delta,
    l0_count,
    l1_delta,
    l1_eq,
    l1_vertex_oracle,
    least_squares_on_support,
    omp,
    robust_sl0,
    sl0,
)

SQRT2 = np.sqrt(2.0)


def e1_e2_u():
    return dict_mod.from_entries([[1.0, 0.0, 1 / SQRT2], [0.0, 1.0, 1 / SQRT2]])


def random_instance(n, m, k, seed, epsilon=0.0):
    d = dict_mod.random_gaussian(n, m, seed=seed)
    rng = np.random.default_rng(10_000 + seed)
    s0 = np.zeros(m)
    support = np.sort(rng.choice(m, size=k, replace=False))
    s0[support] = rng.uniform(0.5, 1.5, size=k) * rng.choice([-1.0, 1.0], size=k)
    x = d.entries @ s0
    if epsilon > 0:
        g = rng.standard_normal(n)
        x = x + g * (epsilon / np.linalg.norm(g))
    return d, s0, x


def check_solution_invariants(d, x, sol):
    offsupport = np.delete(sol.coefficients, list(sol.support))
    assert not np.any(offsupport)
    assert sol.l0() == np.count_nonzero(sol.coefficients)
    recomputed = np.linalg.norm(x - d.entries @ sol.coefficients)
    assert abs(recomputed - sol.residual_norm) <= 1e-10


class TestL0Count:
    def test_basic(self):
        assert l0_count([0.0, 0.0, 3.1], 1e-6) == 1

    def test_all_zero(self):
        assert l0_count(np.zeros(5), 1e-6) == 0

    def test_threshold(self):
        assert l0_count([1e-9, 0.5], 1e-6) == 1

    def test_negative_eta(self):
        with pytest.raises(ValidationError):
            l0_count([1.0], -1.0)


class TestLeastSquares:
    def test_single_atom(self):
        d = e1_e2_u()
        c = least_squares_on_support(d, [2], d.entries[:, 2])
        assert c == pytest.approx([1.0], abs=1e-12)

    def test_orthonormal_pair_projection(self):
        d = e1_e2_u()
        x = np.array([0.25, -0.75])
        c = least_squares_on_support(d, [0, 1], x)
        assert c == pytest.approx([0.25, -0.75], abs=1e-14)

    def test_u_on_e1_e2(self):
        d = e1_e2_u()
        c = least_squares_on_support(d, [0, 1], d.entries[:, 2])
        assert c == pytest.approx([1 / SQRT2, 1 / SQRT2], abs=1e-12)

    def test_empty_support(self):
        d = e1_e2_u()
        assert least_squares_on_support(d, [], np.array([1.0, 0.0])).size == 0

    def test_too_wide(self):
        d = e1_e2_u()
        with pytest.raises(SupportTooLarge):
            least_squares_on_support(d, [0, 1, 2], np.array([1.0, 0.0]))

    def test_dependent_columns(self):
        d = dict_mod.from_entries([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(SupportTooLarge):
            least_squares_on_support(d, [0, 1], np.array([1.0, 0.0]))

    def test_bad_indices(self):
        d = e1_e2_u()
        with pytest.raises(ValidationError):
            least_squares_on_support(d, [0, 0], np.array([1.0, 0.0]))
        with pytest.raises(ValidationError):
            least_squares_on_support(d, [5], np.array([1.0, 0.0]))


class TestExhaustiveP0:
    def test_u_signal(self):
        d = e1_e2_u()
        sol = exhaustive_p0(d, d.entries[:, 2])
        assert sol.support == (2,)
        check_solution_invariants(d, d.entries[:, 2], sol)

    def test_e1_plus_e2_prefers_u(self):
        # e1 + e2 = sqrt(2) u, so the 1-sparse answer beats (1, 1, 0)
        d = e1_e2_u()
        sol = exhaustive_p0(d, np.array([1.0, 1.0]))
        assert sol.support == (2,)
        assert sol.coefficients[2] == pytest.approx(SQRT2, abs=1e-12)

    def test_zero_signal(self):
        d = e1_e2_u()
        sol = exhaustive_p0(d, np.zeros(2))
        assert sol.support == ()
        assert sol.l0() == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            exhaustive_p0(e1_e2_u(), np.zeros(3))

    def test_budget(self):
        d = dict_mod.random_gaussian(6, 12, seed=0)
        x = d.entries @ np.ones(12)
        with pytest.raises(BudgetExceeded):
            exhaustive_p0(d, x, budget=5)

    @pytest.mark.parametrize("seed", range(8))
    def test_minimality_against_full_reenumeration(self, seed):
        d, s0, x = random_instance(5, 9, k=2, seed=seed)
        sol = exhaustive_p0(d, x)
        tol = 1e-10 * np.linalg.norm(x)
        for j in range(sol.l0()):
            for subset in itertools.combinations(range(d.m), j):
                if j == 0:
                    resid = np.linalg.norm(x)
                else:
                    c, *_ = np.linalg.lstsq(d.entries[:, subset], x, rcond=None)
                    resid = np.linalg.norm(x - d.entries[:, subset] @ c)
                assert resid > tol, f"sparser solution {subset} exists"


class TestExhaustiveP0Delta:
    def test_large_delta_gives_zero(self):
        d, s0, x = random_instance(4, 6, k=2, seed=1)
        sol = exhaustive_p0_delta(d, x, delta=np.linalg.norm(x) + 0.1)
        assert sol.support == ()

    def test_noisy_single_atom(self):
        d = e1_e2_u()
        rng = np.random.default_rng(0)
        noise = rng.standard_normal(2)
        noise *= 0.01 / np.linalg.norm(noise)
        x = d.entries[:, 2] + noise
        sol = exhaustive_p0_delta(d, x, delta=0.02)
        assert sol.support == (2,)
        assert sol.residual_norm <= 0.02

    def test_delta_zero_matches_p0(self):
        d, s0, x = random_instance(5, 8, k=2, seed=3)
        a = exhaustive_p0(d, x)
        b = exhaustive_p0_delta(d, x, delta=0.0)
        assert a.support == b.support
        assert np.allclose(a.coefficients, b.coefficients, atol=1e-14)

    def test_support_size_monotone_in_delta(self):
        d, s0, x = random_instance(6, 10, k=3, seed=5, epsilon=0.05)
        sizes = [exhaustive_p0_delta(d, x, delta).l0()
                 for delta in (0.05, 0.1, 0.3, 1.0, 5.0)]
        assert sizes == sorted(sizes, reverse=True)

    @pytest.mark.parametrize("seed", range(6))
    def test_optimality_no_smaller_feasible_support(self, seed):
        d, s0, x = random_instance(5, 9, k=3, seed=20 + seed, epsilon=0.02)
        delta = 0.04
        sol = exhaustive_p0_delta(d, x, delta)
        for j in range(sol.l0()):
            for subset in itertools.combinations(range(d.m), j):
                if j == 0:
                    resid = np.linalg.norm(x)
                else:
                    c, *_ = np.linalg.lstsq(d.entries[:, subset], x, rcond=None)
                    resid = np.linalg.norm(x - d.entries[:, subset] @ c)
                assert resid > delta

    def test_uniqueness_cross_check(self):
        # below spark/2 the sparsest exact solution is the only one
        for seed in range(5):
            d, s0, x = random_instance(6, 9, k=2, seed=40 + seed)
            cert = cert_mod.certify(d)
            sol = exhaustive_p0(d, x)
            if 2 * sol.l0() < cert.spark:
                tol = 1e-10 * np.linalg.norm(x)
                hits = []
                for j in range(sol.l0() + 1):
                    for subset in itertools.combinations(range(d.m), j):
                        if j == 0:
                            resid = np.linalg.norm(x)
                            c = np.zeros(0)
                        else:
                            c, *_ = np.linalg.lstsq(d.entries[:, subset], x, rcond=None)
                            resid = np.linalg.norm(x - d.entries[:, subset] @ c)
                        if resid <= tol:
                            full = np.zeros(d.m)
                            if j:
                                full[list(subset)] = c
                            hits.append(full)
                assert all(np.allclose(h, sol.coefficients, atol=1e-8) for h in hits)


class TestL1:
    def test_orthonormal_basis_case(self):
        d = dict_mod.from_entries(np.eye(3).tolist())
        x = np.array([0.3, -1.2, 0.0])
        sol = l1_eq(d, x)
        assert sol.coefficients == pytest.approx(x, abs=1e-9)

    def test_u_beats_pair(self):
        d = e1_e2_u()
        sol = l1_eq(d, d.entries[:, 2])
        assert sol.support == (2,)
        assert sol.coefficients[2] == pytest.approx(1.0, abs=1e-9)

    def test_vertex_oracle_u(self):
        d = e1_e2_u()
        sol = l1_vertex_oracle(d, d.entries[:, 2])
        assert sol.support == (2,)
        assert np.abs(sol.coefficients).sum() == pytest.approx(1.0, abs=1e-12)

    def test_vertex_oracle_zero(self):
        d = e1_e2_u()
        assert l1_vertex_oracle(d, np.zeros(2)).support == ()

    def test_vertex_oracle_budget(self):
        d = dict_mod.random_gaussian(5, 10, seed=1)
        with pytest.raises(BudgetExceeded):
            l1_vertex_oracle(d, np.zeros(5), budget=10)

    @pytest.mark.parametrize("seed", range(10))
    def test_l1_eq_matches_vertex_oracle(self, seed):
        d, s0, x = random_instance(4, 6, k=2, seed=60 + seed)
        a = l1_eq(d, x)
        b = l1_vertex_oracle(d, x)
        va, vb = np.abs(a.coefficients).sum(), np.abs(b.coefficients).sum()
        assert abs(va - vb) <= 1e-6 * max(vb, 1e-30)

    @pytest.mark.parametrize("seed", range(6))
    def test_equivalence_range_support_recovery(self, seed):
        # k = 1 is always inside the l0/l1 equivalence range for distinct atoms
        d, s0, x = random_instance(5, 8, k=1, seed=80 + seed)
        cert = cert_mod.certify(d)
        assert 1 <= cert_mod.equivalence_threshold(cert.coherence)
        assert l1_eq(d, x).support == exhaustive_p0(d, x).support

    def test_l1_delta_feasible_and_truncated(self):
        d, s0, x = random_instance(8, 12, k=2, seed=90, epsilon=0.01)
        sol = l1_delta(d, x, delta=0.02)
        assert sol.residual_norm <= 0.02 + 1e-8
        assert np.all((np.abs(sol.coefficients) > 1e-6)
                      | (sol.coefficients == 0.0))
        check_solution_invariants(d, x, sol)

    def test_l1_delta_zero_equals_l1_eq(self):
        d, s0, x = random_instance(4, 6, k=1, seed=91)
        a = l1_delta(d, x, delta=0.0)
        b = l1_eq(d, x)
        assert a.support == b.support

    def test_l1_delta_objective_not_above_truth(self):
        # s0 is feasible for the slack problem, so the optimum cannot exceed it
        d, s0, x = random_instance(8, 12, k=2, seed=92, epsilon=0.01)
        sol = l1_delta(d, x, delta=0.02)
        assert np.abs(sol.coefficients).sum() <= np.abs(s0).sum() + 1e-6


class TestOmp:
    def test_single_atom(self):
        d, _, _ = random_instance(5, 8, k=1, seed=7)
        x = d.entries[:, 3].copy()
        sol = omp(d, x)
        assert sol.support == (3,)
        assert sol.iterations == 1
        assert sol.residual_norm <= 1e-12

    def test_zero_signal(self):
        d = e1_e2_u()
        sol = omp(d, np.zeros(2))
        assert sol.support == ()

    def test_dirac_hadamard_greedy_trace(self):
        # correlations with e1, e2, h1 all equal 1; lowest index wins, then
        # the residual is e2 and the pursuit finishes exactly
        d = dict_mod.dirac_hadamard(4)
        x = np.array([1.0, 1.0, 0.0, 0.0])
        sol = omp(d, x, residual_target=1e-10)
        assert set(sol.support) <= {0, 1}
        assert sol.coefficients[[0, 1]] == pytest.approx([1.0, 1.0], abs=1e-12)
        assert sol.converged

    def test_max_atoms_validation(self):
        d = e1_e2_u()
        with pytest.raises(ValidationError):
            omp(d, np.array([1.0, 0.0]), max_atoms=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_recovers_well_separated(self, seed):
        d, s0, x = random_instance(8, 12, k=2, seed=110 + seed)
        sol = omp(d, x, residual_target=1e-10)
        assert sol.converged
        assert sol.residual_norm <= 1e-10 * max(1.0, np.linalg.norm(x))


class TestSl0:
    def test_orthonormal_unique_representation(self):
        d = dict_mod.from_entries(np.eye(3).tolist())
        sol = sl0(d, d.entries[:, 1])
        assert np.allclose(sol.coefficients, [0.0, 1.0, 0.0], atol=1e-6)

    def test_zero_signal(self):
        d = e1_e2_u()
        sol = sl0(d, np.zeros(2))
        assert sol.support == ()

    def test_feasibility_contract(self):
        d, s0, x = random_instance(8, 12, k=3, seed=120)
        sol = sl0(d, x)
        assert sol.residual_norm <= 1e-8
        check_solution_invariants(d, x, sol)

    def test_support_recovery_rate_against_p0(self):
        # empirical cross-check on exactly sparse instances; the pass rate
        # threshold is a harness choice, not a theorem
        hits = 0
        trials = 200
        for t in range(trials):
            d, s0, x = random_instance(8, 12, k=2, seed=5000 + t)
            sol = sl0(d, x)
            if sol.support == exhaustive_p0(d, x).support:
                hits += 1
        assert hits >= 0.95 * trials, f"support recovery {hits}/{trials}"

    def test_robust_large_delta_returns_zero(self):
        d, s0, x = random_instance(6, 9, k=2, seed=130, epsilon=0.05)
        delta = np.linalg.norm(x) * 1.5
        sol = robust_sl0(d, x, delta)
        assert sol.l0() == 0
        oracle = exhaustive_p0_delta(d, x, delta)
        assert oracle.support == sol.support == ()

    def test_robust_feasibility_contract(self):
        for seed in range(5):
            d, s0, x = random_instance(8, 12, k=2, seed=140 + seed, epsilon=0.01)
            sol = robust_sl0(d, x, delta=0.02)
            assert sol.residual_norm <= 0.02 + 1e-8
            check_solution_invariants(d, x, sol)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SolverConfig(sl0_sigma_decay=1.5)
        with pytest.raises(ValidationError):
            SolverConfig(zero_threshold=0.0)
        with pytest.raises(ValidationError):
            SolverConfig(delta=-0.1)


class TestSolutionSerialization:
    def test_to_dict_round_values(self):
        d = e1_e2_u()
        sol = exhaustive_p0(d, d.entries[:, 2])
        data = sol.to_dict()
        assert data["solver_name"] == "exhaustive-p0"
        assert data["support"] == [2]
        assert data["coefficients"] == {"2": pytest.approx(1.0)}
        assert data["converged"] is True

    def test_registry_rejects_unknown(self):
        with pytest.raises(ValidationError):
            solvers_mod.solve_with("magic", e1_e2_u(), np.zeros(2), 0.0)
