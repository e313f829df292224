"""Noisy sparse instances and trial-by-trial verification of the recovery
stability guarantees.

Each trial draws a sparse ground truth and a noise vector of exact norm
epsilon from seeded, reproducible streams, runs the configured solvers on
the noisy signal, and evaluates every applicable error bound together with
the inequality chain underlying the main bound.  Trials whose hypotheses
fail are recorded as not applicable, never as violations.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import solvers as solvers_mod
from .certificate import DictionaryCertificate
from .errors import BudgetExceeded, EmptyInput, SparseStabError, ValidationError
from .solvers import SparseSolution, SolverConfig, l0_count

#: Additive tolerance for `error <= bound` comparisons.
BOUND_TOL = 1e-9

#: Slack for residual-vs-delta gates, matching the iterative solvers'
#: declared feasibility tolerance so contract-feasible outputs pass.
GATE_RESIDUAL_SLACK = 1e-8


@dataclass(frozen=True)
class CoefficientDistribution:
    """Nonzero magnitudes are uniform in [min, max] with the given signs.

    Magnitudes bounded away from zero keep "small coefficient" and "noise"
    distinguishable when judging support recovery.
    """

    min_magnitude: float = 0.5
    max_magnitude: float = 1.5
    signs: str = "random"    # "random" or "positive"

    def __post_init__(self):
        if not 0 < self.min_magnitude <= self.max_magnitude:
            raise ValidationError(
                f"need 0 < min <= max, got [{self.min_magnitude}, {self.max_magnitude}]")
        if self.signs not in ("random", "positive"):
            raise ValidationError(f"unknown sign scheme {self.signs!r}")


DEFAULT_DISTRIBUTION = CoefficientDistribution()


def _rng(seed):
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence(tuple(int(v) for v in seed)))
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def gen_sparse_signal(dictionary, k, dist, seed):
    """Draw (s0, x0 = A s0) with a uniformly random size-k support.

    Draw order (fixed for reproducibility): support, magnitudes, signs.
    """
    if not 0 <= k <= dictionary.m:
        raise ValidationError(f"k must lie in [0, {dictionary.m}], got {k}")
    rng = _rng(seed)
    s0 = np.zeros(dictionary.m)
    if k > 0:
        support = np.sort(rng.choice(dictionary.m, size=k, replace=False))
        magnitudes = rng.uniform(dist.min_magnitude, dist.max_magnitude, size=k)
        if dist.signs == "random":
            magnitudes = magnitudes * rng.choice(np.array([-1.0, 1.0]), size=k)
        s0[support] = magnitudes
    return s0, dictionary.entries @ s0


def gen_noise(dimension, epsilon, seed):
    """A vector drawn uniformly on the radius-epsilon sphere (exact norm)."""
    if epsilon < 0 or not np.isfinite(epsilon):
        raise ValidationError(f"epsilon must be finite and >= 0, got {epsilon!r}")
    if dimension < 1:
        raise ValidationError(f"dimension must be >= 1, got {dimension}")
    if epsilon == 0.0:
        return np.zeros(dimension)
    rng = _rng(seed)
    g = rng.standard_normal(dimension)
    norm = float(np.linalg.norm(g))
    while norm == 0.0:   # probability zero, guarded anyway
        g = rng.standard_normal(dimension)
        norm = float(np.linalg.norm(g))
    return g * (epsilon / norm)


@dataclass(frozen=True)
class NoisyInstance:
    ground_truth: np.ndarray
    support: tuple
    k: int
    clean_signal: np.ndarray
    noise: np.ndarray
    noisy_signal: np.ndarray
    epsilon: float
    seed: object


def build_instance(dictionary, k, epsilon, seed, dist=DEFAULT_DISTRIBUTION):
    """Assemble a NoisyInstance; sub-streams are (seed..., 0) for the signal
    and (seed..., 1) for the noise."""
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    s0, x0 = gen_sparse_signal(dictionary, k, dist, base + (0,))
    noise = gen_noise(dictionary.n, epsilon, base + (1,))
    return NoisyInstance(
        ground_truth=s0,
        support=tuple(int(i) for i in np.flatnonzero(s0)),
        k=int(np.count_nonzero(s0)),
        clean_signal=x0,
        noise=noise,
        noisy_signal=x0 + noise,
        epsilon=float(epsilon),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Theorem checks


@dataclass(frozen=True)
class TheoremCheck:
    applicable: bool
    reason: Optional[str]
    error: Optional[float]
    bound: Optional[float]
    satisfied: Optional[bool]

    def to_dict(self):
        return {
            "applicable": self.applicable,
            "reason": self.reason,
            "error": self.error,
            "bound": self.bound,
            "satisfied": self.satisfied,
        }


def _not_applicable(reason, error=None, bound=None):
    return TheoremCheck(False, reason, error, bound, None)


def _spark_value(certificate):
    # all-columns-independent dictionaries behave as spark = m + 1 in gates
    return certificate.spark if certificate.spark is not None else certificate.kruskal_rank + 1


def check_coherence_bound(certificate, instance, delta, solution):
    """Coherence-based stability of the l0 slack minimizer:
    error <= (eps + delta) / sqrt(1 - M(2k - 1)), gated on the coherence
    sparsity condition k < (1 + 1/M)/2, delta >= epsilon, and the solver
    being the exhaustive slack oracle."""
    if solution is None:
        return _not_applicable("solver failed")
    if solution.solver_name != "exhaustive-p0-delta":
        return _not_applicable("solver is not exhaustive-p0-delta")
    if delta < instance.epsilon:
        return _not_applicable("delta < epsilon")
    m_coh = certificate.coherence
    if m_coh > 0 and not instance.k < (1.0 + 1.0 / m_coh) / 2.0:
        return _not_applicable("k not below (1 + 1/M)/2")
    error = float(np.linalg.norm(solution.coefficients - instance.ground_truth))
    bound = (instance.epsilon + delta) / float(
        np.sqrt(1.0 - m_coh * (2 * instance.k - 1)))
    return TheoremCheck(True, None, error, bound, bool(error <= bound + BOUND_TOL))


def verify_theorem4(certificate, instance, delta, solution):
    """Spark-range stability of the l0 slack minimizer:
    error <= (delta + eps) / sigma_min(2k), gated on delta >= epsilon and
    2k < spark and the solver being the exhaustive slack oracle."""
    if solution is None:
        return _not_applicable("solver failed")
    if solution.solver_name != "exhaustive-p0-delta":
        return _not_applicable("solver is not exhaustive-p0-delta")
    if delta < instance.epsilon:
        return _not_applicable("delta < epsilon")
    if not 2 * instance.k < _spark_value(certificate):
        return _not_applicable("2k >= spark")
    error = float(np.linalg.norm(solution.coefficients - instance.ground_truth))
    bound = (delta + instance.epsilon) / certificate.sigma_min(2 * instance.k)
    return TheoremCheck(True, None, error, bound, bool(error <= bound + BOUND_TOL))


def check_looser_bound(certificate, instance, delta, solution):
    """The k-free variant of the spark-range bound for the slack oracle:
    error <= (delta + eps) / sigma_min(q) under the same gates."""
    gate = verify_theorem4(certificate, instance, delta, solution)
    if not gate.applicable:
        return gate
    bound = (delta + instance.epsilon) / certificate.sigma_min(certificate.kruskal_rank)
    return TheoremCheck(True, None, gate.error, bound,
                        bool(gate.error <= bound + BOUND_TOL))


def verify_theorem5(dictionary, certificate, instance, delta, solution, eta=None):
    """Stability of any sparse-enough feasible estimate, solver-agnostic:
    error <= (delta + eps) / sigma_min(q).

    Gates: the ground truth lies in the uniqueness range, the eta-truncated
    estimate has l0 < spark/2, and its recomputed residual is within delta.
    delta >= epsilon is not required here.  The truncated vector is both the
    gated and the bounded object.
    """
    if eta is None:
        eta = solvers_mod.ZERO_THRESHOLD_DEFAULT
    return _verify_theorem5_bound(dictionary, certificate, instance, delta,
                                  solution, eta)


@dataclass(frozen=True)
class ChainCheck:
    applicable: bool
    reason: Optional[str]
    ell_actual: Optional[int]
    signal_gap: Optional[float]        # ||x0 - A s_hat||
    signal_gap_bound: Optional[float]  # delta + epsilon
    upper_ok: Optional[bool]
    factorization_ok: Optional[bool]
    lower_margin: Optional[float]      # ||B v|| - sigma_min(ell) ||v||
    lower_ok: Optional[bool]
    satisfied: Optional[bool]

    def to_dict(self):
        return {
            "applicable": self.applicable,
            "reason": self.reason,
            "ell_actual": self.ell_actual,
            "signal_gap": self.signal_gap,
            "signal_gap_bound": self.signal_gap_bound,
            "upper_ok": self.upper_ok,
            "factorization_ok": self.factorization_ok,
            "lower_margin": self.lower_margin,
            "lower_ok": self.lower_ok,
            "satisfied": self.satisfied,
        }


@dataclass(frozen=True)
class DifferenceWitness:
    """The difference vector s0 - s_hat restricted to its support, together
    with the matching column submatrix."""

    diff_support: tuple
    v: np.ndarray
    b_matrix: np.ndarray
    ell_actual: int


def build_difference_witness(dictionary, s0, s_hat):
    diff = np.asarray(s0, dtype=float) - np.asarray(s_hat, dtype=float)
    support = tuple(int(i) for i in np.flatnonzero(diff))
    return DifferenceWitness(
        diff_support=support,
        v=diff[list(support)],
        b_matrix=dictionary.entries[:, list(support)],
        ell_actual=len(support),
    )


def verify_proof_chain(dictionary, certificate, instance, delta, solution):
    """Check the inequality chain behind the spark-range bound on one trial:

    (a) ||x0 - A s_hat|| <= delta + eps whenever the residual is within delta,
    (b) the difference factorizes through its support submatrix, B v = A (s0 - s_hat),
    (c) ||B v|| >= sigma_min(ell) ||v|| with ell the actual difference support size.

    Not applicable when ell exceeds the Kruskal rank.
    """
    if solution is None:
        return ChainCheck(False, "solver failed", None, None, None, None, None,
                          None, None, None)
    witness = build_difference_witness(dictionary, instance.ground_truth,
                                       solution.coefficients)
    ell = witness.ell_actual
    if ell > certificate.kruskal_rank:
        return ChainCheck(False, "difference support exceeds the Kruskal rank",
                          ell, None, None, None, None, None, None, None)
    a = dictionary.entries
    s_hat = solution.coefficients
    x_hat = a @ s_hat
    signal_gap = float(np.linalg.norm(instance.clean_signal - x_hat))
    gap_bound = delta + instance.epsilon
    slack = GATE_RESIDUAL_SLACK * max(1.0, float(np.linalg.norm(instance.noisy_signal)))
    residual_within = solution.residual_norm <= delta + slack
    upper_ok = signal_gap <= gap_bound + BOUND_TOL if residual_within else None

    if ell == 0:
        return ChainCheck(True, None, 0, signal_gap, gap_bound, upper_ok,
                          True, 0.0, True,
                          bool(upper_ok is not False))

    bv = witness.b_matrix @ witness.v
    diff_image = a @ (instance.ground_truth - s_hat)
    factorization_ok = bool(np.linalg.norm(bv - diff_image) <= BOUND_TOL)
    lower_margin = float(np.linalg.norm(bv)
                         - certificate.sigma_min(ell) * np.linalg.norm(witness.v))
    lower_ok = bool(lower_margin >= -BOUND_TOL)
    satisfied = bool((upper_ok is not False) and factorization_ok and lower_ok)
    return ChainCheck(True, None, ell, signal_gap, gap_bound, upper_ok,
                      factorization_ok, lower_margin, lower_ok, satisfied)


# ---------------------------------------------------------------------------
# Uniqueness by brute force


@dataclass(frozen=True)
class UniquenessRecord:
    unique: bool
    k: int
    searched: int
    alternative_support: Optional[tuple]
    alternative_coefficients: Optional[np.ndarray]


def verify_uniqueness(dictionary, s0, zero_tol=None,
                      budget=solvers_mod.SUBSET_BUDGET_DEFAULT):
    """Search every support of size <= ||s0||_0 for exact alternative
    representations of x0 = A s0.

    Returns unique = True iff every exact solution found coincides with s0.
    """
    import itertools
    import math

    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (dictionary.m,):
        raise ValidationError(f"s0 has shape {s0.shape}, expected ({dictionary.m},)")
    x0 = dictionary.entries @ s0
    k = int(np.count_nonzero(s0))
    if zero_tol is None:
        zero_tol = 1e-10 * float(np.linalg.norm(x0))
    required = sum(math.comb(dictionary.m, j) for j in range(0, k + 1))
    if required > budget:
        raise BudgetExceeded(required, budget)

    searched = 0
    for j in range(0, k + 1):
        for support in itertools.combinations(range(dictionary.m), j):
            searched += 1
            if j == 0:
                coeffs = np.zeros(0)
                residual = float(np.linalg.norm(x0))
            else:
                sub = dictionary.entries[:, list(support)]
                coeffs, _, _, _ = np.linalg.lstsq(sub, x0, rcond=None)
                residual = float(np.linalg.norm(x0 - sub @ coeffs))
            if residual > zero_tol:
                continue
            candidate = np.zeros(dictionary.m)
            if j:
                candidate[list(support)] = coeffs
            if float(np.max(np.abs(candidate - s0), initial=0.0)) > 1e-8:
                return UniquenessRecord(False, k, searched, support, coeffs)
    return UniquenessRecord(True, k, searched, None, None)


# ---------------------------------------------------------------------------
# Trials


@dataclass(frozen=True)
class TrialSpec:
    """Everything needed to reproduce one trial deterministically."""

    dictionary: object
    k: int
    epsilon: float
    delta: float
    solvers: tuple           # of (name, SolverConfig or None)
    seed: object
    dist: CoefficientDistribution = DEFAULT_DISTRIBUTION

    def __post_init__(self):
        if self.epsilon < 0 or self.delta < 0:
            raise ValidationError("epsilon and delta must be >= 0")
        if self.k < 0:
            raise ValidationError("k must be >= 0")


@dataclass(frozen=True)
class SolverTrialRecord:
    solver_name: str
    delta: float
    solution: Optional[SparseSolution]
    failure: Optional[str]
    error: Optional[float]
    eq5: TheoremCheck
    eq8: TheoremCheck
    eq13: TheoremCheck
    eq14: TheoremCheck
    chain: ChainCheck


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    k: int
    epsilon: float
    delta: float
    seed: object
    dictionary_label: str
    solver_records: tuple


def run_trial(spec, certificate, trial_id=0):
    """Build the instance, run every configured solver, evaluate all bounds.

    A solver failure is recorded in its own record and never aborts the
    trial.  The result is a pure function of (spec, certificate, trial_id).
    """
    dictionary = spec.dictionary
    instance = build_instance(dictionary, spec.k, spec.epsilon, spec.seed, spec.dist)
    records = []
    for name, config in spec.solvers:
        cfg = config or solvers_mod.DEFAULT_CONFIG
        delta = cfg.delta if cfg.delta > 0 else spec.delta
        solution = None
        failure = None
        try:
            solution = solvers_mod.solve_with(name, dictionary, instance.noisy_signal,
                                              delta, cfg)
        except SparseStabError as exc:
            failure = f"{exc.code}: {exc}"
        error = None
        if solution is not None:
            error = float(np.linalg.norm(solution.coefficients - instance.ground_truth))
        records.append(SolverTrialRecord(
            solver_name=name,
            delta=delta,
            solution=solution,
            failure=failure,
            error=error,
            eq5=check_coherence_bound(certificate, instance, delta, solution),
            eq8=verify_theorem4(certificate, instance, delta, solution),
            eq13=check_looser_bound(certificate, instance, delta, solution),
            eq14=_verify_theorem5_bound(dictionary, certificate, instance, delta,
                                        solution, cfg.zero_threshold),
            chain=verify_proof_chain(dictionary, certificate, instance, delta,
                                     solution),
        ))
    return TrialResult(
        trial_id=trial_id,
        k=instance.k,
        epsilon=instance.epsilon,
        delta=spec.delta,
        seed=spec.seed,
        dictionary_label=dictionary.label,
        solver_records=tuple(records),
    )


def _verify_theorem5_bound(dictionary, certificate, instance, delta, solution, eta):
    if solution is None:
        return _not_applicable("solver failed")
    spark = _spark_value(certificate)
    if not 2 * instance.k < spark:
        return _not_applicable("ground truth not in the uniqueness range")
    truncated = solution.coefficients.copy()
    truncated[np.abs(truncated) <= eta] = 0.0
    if not 2 * int(np.count_nonzero(truncated)) < spark:
        return _not_applicable("estimate l0 not below spark/2")
    residual = float(np.linalg.norm(instance.noisy_signal
                                    - dictionary.entries @ truncated))
    slack = GATE_RESIDUAL_SLACK * max(1.0, float(np.linalg.norm(instance.noisy_signal)))
    if residual > delta + slack:
        return _not_applicable("residual exceeds delta")
    error = float(np.linalg.norm(truncated - instance.ground_truth))
    bound = (delta + instance.epsilon) / certificate.sigma_min(certificate.kruskal_rank)
    return TheoremCheck(True, None, error, bound, bool(error <= bound + BOUND_TOL))


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class CheckAggregate:
    applicable: int
    violations: int
    ratio_count: int
    ratio_min: Optional[float]
    ratio_median: Optional[float]
    ratio_max: Optional[float]

    def to_dict(self):
        return {
            "applicable": self.applicable,
            "violations": self.violations,
            "ratio_count": self.ratio_count,
            "ratio_min": self.ratio_min,
            "ratio_median": self.ratio_median,
            "ratio_max": self.ratio_max,
        }


@dataclass(frozen=True)
class SolverAggregate:
    solver_name: str
    trials: int
    failures: int
    eq5: CheckAggregate
    eq8: CheckAggregate
    eq13: CheckAggregate
    eq14: CheckAggregate
    chain_applicable: int
    chain_failures: int


@dataclass(frozen=True)
class ExperimentReport:
    trials: int
    solver_aggregates: tuple
    total_violations: int
    tightness: tuple


def _aggregate_check(checks):
    applicable = [c for c in checks if c.applicable]
    violations = sum(1 for c in applicable if c.satisfied is False)
    ratios = sorted(c.error / c.bound for c in applicable if c.bound and c.bound > 0)
    if ratios:
        median = float(np.median(ratios))
        return CheckAggregate(len(applicable), violations, len(ratios),
                              ratios[0], median, ratios[-1])
    return CheckAggregate(len(applicable), violations, 0, None, None, None)


def aggregate_report(results, certificate=None):
    """Fold trial results into per-solver aggregates in solver order.

    Violation counts are always reported, including zeros.  When a
    certificate is supplied, the per-cardinality tightness diagnostics are
    attached as well.
    """
    from .certificate import tightness_records

    results = list(results)
    if not results:
        raise EmptyInput("no trial results to aggregate")
    by_solver = {}
    order = []
    for result in results:
        for record in result.solver_records:
            if record.solver_name not in by_solver:
                by_solver[record.solver_name] = []
                order.append(record.solver_name)
            by_solver[record.solver_name].append(record)

    aggregates = []
    total_violations = 0
    for name in order:
        records = by_solver[name]
        failures = sum(1 for r in records if r.failure is not None)
        eqs = {}
        for tag in ("eq5", "eq8", "eq13", "eq14"):
            eqs[tag] = _aggregate_check([getattr(r, tag) for r in records])
            total_violations += eqs[tag].violations
        chains = [r.chain for r in records if r.chain.applicable]
        chain_failures = sum(1 for c in chains if c.satisfied is False)
        total_violations += chain_failures
        aggregates.append(SolverAggregate(
            solver_name=name, trials=len(records), failures=failures,
            eq5=eqs["eq5"], eq8=eqs["eq8"], eq13=eqs["eq13"], eq14=eqs["eq14"],
            chain_applicable=len(chains), chain_failures=chain_failures,
        ))
    tightness = ()
    if certificate is not None:
        tightness = tuple(tightness_records(certificate, certificate.coherence))
    return ExperimentReport(
        trials=len(results),
        solver_aggregates=tuple(aggregates),
        total_violations=total_violations,
        tightness=tightness,
    )
