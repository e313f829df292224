"""Sparse solvers for x = A s and its slack variant ||x - A s|| <= delta.

Two families:

* exact combinatorial oracles (`exhaustive_p0`, `exhaustive_p0_delta`,
  `l1_vertex_oracle`) that enumerate supports and serve as ground truth;
* practical iterative methods (`omp`, `l1_eq`, `l1_delta`, `sl0`,
  `robust_sl0`) whose outputs are contract-checked (declared feasibility
  re-verified by recomputation) rather than algorithm-specified.

All least-squares fits go through orthogonal factorizations (SVD); normal
equations would square the conditioning of submatrices near the spark
boundary.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    NoSolutionWithinBudget,
    NotConverged,
    SupportTooLarge,
    ValidationError,
)

ZERO_THRESHOLD_DEFAULT = 1e-6
L1_FEASIBILITY_TOL = 1e-8
L1_OBJECTIVE_REL_TOL = 1e-6
VERTEX_BUDGET_DEFAULT = 100_000
SUBSET_BUDGET_DEFAULT = 10_000_000

_CHUNK = 16384


@dataclass(frozen=True)
class SparseSolution:
    """A coefficient vector with an explicit support.

    Coefficients are exactly zero off the declared support, and the stored
    residual norm is recomputed from the coefficients at construction time.
    """

    solver_name: str
    coefficients: np.ndarray
    support: tuple
    residual_norm: float
    iterations: int
    converged: bool

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).copy()
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))

    def l0(self):
        return len(self.support)

    def to_dict(self):
        return {
            "solver_name": self.solver_name,
            "support": list(self.support),
            "coefficients": {str(i): float(self.coefficients[i]) for i in self.support},
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class SolverConfig:
    """Shared knob bag for the practical solvers.

    ``zero_threshold`` (eta) is the magnitude below which iterative solvers
    truncate output coefficients to exact zero; the combinatorial oracles
    carry explicit supports and never threshold.
    """

    delta: float = 0.0
    max_support: Optional[int] = None
    zero_threshold: float = ZERO_THRESHOLD_DEFAULT
    budget: int = SUBSET_BUDGET_DEFAULT
    max_atoms: Optional[int] = None
    residual_target: Optional[float] = None
    sl0_sigma0_scale: float = 2.0
    sl0_sigma_decay: float = 0.7
    sl0_sigma_floor: float = 1e-4
    sl0_inner_steps: int = 3
    sl0_step_scale: float = 2.0
    l1_feasibility_tol: float = L1_FEASIBILITY_TOL
    l1_objective_rel_tol: float = L1_OBJECTIVE_REL_TOL

    def __post_init__(self):
        if self.delta < 0 or not np.isfinite(self.delta):
            raise ValidationError(f"delta must be finite and >= 0, got {self.delta!r}")
        if self.zero_threshold <= 0:
            raise ValidationError(
                f"zero_threshold must be positive, got {self.zero_threshold!r}")
        for name in ("max_support", "max_atoms"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} must be >= 1, got {v!r}")
        if self.residual_target is not None and self.residual_target < 0:
            raise ValidationError(
                f"residual_target must be >= 0, got {self.residual_target!r}")
        if self.budget < 1:
            raise ValidationError(f"budget must be >= 1, got {self.budget!r}")
        if not 0 < self.sl0_sigma_decay < 1:
            raise ValidationError(
                f"sl0_sigma_decay must lie in (0, 1), got {self.sl0_sigma_decay!r}")
        if self.sl0_inner_steps < 1:
            raise ValidationError(
                f"sl0_inner_steps must be >= 1, got {self.sl0_inner_steps!r}")


DEFAULT_CONFIG = SolverConfig()


def l0_count(vector, eta):
    """Number of entries with magnitude strictly above eta."""
    if eta < 0:
        raise ValidationError(f"eta must be >= 0, got {eta!r}")
    return int(np.count_nonzero(np.abs(np.asarray(vector, dtype=float)) > eta))


def _check_signal(dictionary, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (dictionary.n,):
        raise DimensionMismatch(
            f"signal has shape {x.shape}, dictionary expects ({dictionary.n},)")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite values")
    return x


def _package(solver_name, dictionary, x, coefficients, iterations, converged):
    c = np.asarray(coefficients, dtype=float)
    support = tuple(int(i) for i in np.flatnonzero(c))
    residual = float(np.linalg.norm(x - dictionary.entries @ c))
    return SparseSolution(solver_name, c, support, residual, int(iterations),
                          bool(converged))


def least_squares_on_support(dictionary, support, x, rank_tolerance=1e-10):
    """Minimize ||x - A_S c|| over coefficients supported on S (SVD-based).

    The minimizer is unique only when the submatrix has full column rank,
    which holds exactly when |S| does not exceed the Kruskal rank; a
    rank-deficient or wider-than-n submatrix raises SupportTooLarge.
    """
    x = _check_signal(dictionary, x)
    support = [int(i) for i in support]
    if len(set(support)) != len(support):
        raise ValidationError(f"support has repeated indices: {support}")
    if any(i < 0 or i >= dictionary.m for i in support):
        raise ValidationError(f"support index out of range: {support}")
    if len(support) > dictionary.n:
        raise SupportTooLarge(
            f"support size {len(support)} exceeds the signal dimension {dictionary.n}")
    if not support:
        return np.zeros(0)
    sub = dictionary.entries[:, support]
    coeffs, _, rank, _ = np.linalg.lstsq(sub, x, rcond=rank_tolerance)
    if rank < len(support):
        raise SupportTooLarge(
            f"columns {support} are linearly dependent (rank {rank}); "
            "the least-squares minimizer is not unique")
    return coeffs


def _batched_least_squares(at, idx, x, rank_tolerance):
    """Solve min ||x - A_S c|| for a batch of supports (rows of idx).

    Returns (coeffs, residual_norms, full_rank_mask); SVD-based.
    """
    sub = at[idx]              # (b, j, n): rows are the selected atoms
    u, sv, vt = np.linalg.svd(sub.transpose(0, 2, 1), full_matrices=False)
    full_rank = sv[:, -1] > rank_tolerance * sv[:, 0]
    inv = np.zeros_like(sv)
    np.divide(1.0, sv, out=inv, where=sv > 0)
    # c = V diag(1/s) U^T x
    utx = np.einsum("bnj,n->bj", u, x)
    coeffs = np.einsum("bjk,bj->bk", vt, inv * utx)
    resid = np.linalg.norm(x[None, :] - np.einsum("bjn,bj->bn", sub, coeffs), axis=1)
    return coeffs, resid, full_rank


def _exhaustive(solver_name, dictionary, x, tol, max_support, budget, rank_tolerance):
    n, m = dictionary.n, dictionary.m
    cap = min(n, m) if max_support is None else min(max_support, n, m)
    if float(np.linalg.norm(x)) <= tol:
        return _package(solver_name, dictionary, x, np.zeros(m), 0, True)
    at = np.ascontiguousarray(dictionary.entries.T)
    visited = 0
    for j in range(1, cap + 1):
        combos = itertools.combinations(range(m), j)
        best_support = None
        best_coeffs = None
        best_resid = np.inf
        while True:
            flat = np.fromiter(
                itertools.chain.from_iterable(itertools.islice(combos, _CHUNK)),
                dtype=np.intp)
            if flat.size == 0:
                break
            idx = flat.reshape(-1, j)
            visited += idx.shape[0]
            if visited > budget:
                raise BudgetExceeded(visited, budget)
            coeffs, resid, full_rank = _batched_least_squares(at, idx, x, rank_tolerance)
            # dependent subsets never improve on their own sub-supports,
            # which were already scanned at smaller sizes
            feasible = (resid <= tol) & full_rank
            if feasible.any():
                rr = np.where(feasible, resid, np.inf)
                pick = int(np.argmin(rr))     # lexicographic first on exact ties
                if rr[pick] < best_resid:
                    best_resid = float(rr[pick])
                    best_support = idx[pick]
                    best_coeffs = coeffs[pick]
        if best_support is not None:
            s = np.zeros(m)
            s[best_support] = best_coeffs
            return _package(solver_name, dictionary, x, s, visited, True)
    raise NoSolutionWithinBudget(
        f"no support of size <= {cap} reaches residual <= {tol!r}")


def exhaustive_p0(dictionary, x, zero_tol=None, max_support=None,
                  budget=SUBSET_BUDGET_DEFAULT, rank_tolerance=1e-10):
    """Global l0 minimizer subject to ||x - A s|| <= zero_tol.

    Supports are enumerated by increasing size, lexicographic within size;
    among feasible supports of the winning size the smallest residual is
    returned, ties broken by lexicographically smallest support.
    """
    x = _check_signal(dictionary, x)
    if zero_tol is None:
        zero_tol = 1e-10 * float(np.linalg.norm(x))
    if zero_tol < 0:
        raise ValidationError(f"zero_tol must be >= 0, got {zero_tol!r}")
    return _exhaustive("exhaustive-p0", dictionary, x, zero_tol, max_support,
                       budget, rank_tolerance)


def exhaustive_p0_delta(dictionary, x, delta, max_support=None,
                        budget=SUBSET_BUDGET_DEFAULT, rank_tolerance=1e-10):
    """Global l0 minimizer subject to ||x - A s|| <= delta.

    delta = 0 falls back to the exact-equality tolerance of exhaustive_p0.
    """
    x = _check_signal(dictionary, x)
    if delta < 0 or not np.isfinite(delta):
        raise ValidationError(f"delta must be finite and >= 0, got {delta!r}")
    tol = delta if delta > 0 else 1e-10 * float(np.linalg.norm(x))
    return _exhaustive("exhaustive-p0-delta", dictionary, x, tol, max_support,
                       budget, rank_tolerance)


# ---------------------------------------------------------------------------
# l1 minimization


def _truncate(coefficients, eta):
    out = np.asarray(coefficients, dtype=float).copy()
    out[np.abs(out) <= eta] = 0.0
    return out


def _l1_equality_lp(dictionary, x):
    """min ||s||_1 s.t. A s = x via the split-variable LP (HiGHS)."""
    from scipy.optimize import linprog

    m = dictionary.m
    a = dictionary.entries
    res = linprog(np.ones(2 * m), A_eq=np.hstack([a, -a]), b_eq=x,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise NotConverged(f"linear program failed: {res.message}")
    return res.x[:m] - res.x[m:], int(res.nit)


def l1_eq(dictionary, x, config=None):
    """min ||s||_1 subject to A s = x.

    Contract: residual <= l1_feasibility_tol, objective within
    l1_objective_rel_tol of the optimum (cross-checked against
    l1_vertex_oracle in the test suite), coefficients below zero_threshold
    truncated; the truncated vector must stay feasible within twice the
    tolerance.
    """
    cfg = config or DEFAULT_CONFIG
    x = _check_signal(dictionary, x)
    s, nit = _l1_equality_lp(dictionary, x)
    return _finish_l1("l1-eq", dictionary, x, s, nit, cfg, cfg.l1_feasibility_tol)


def l1_delta(dictionary, x, delta, config=None):
    """min ||s||_1 subject to ||x - A s|| <= delta (second-order cone program).

    delta = 0 reduces to the equality-constrained linear program.
    """
    cfg = config or DEFAULT_CONFIG
    x = _check_signal(dictionary, x)
    if delta < 0 or not np.isfinite(delta):
        raise ValidationError(f"delta must be finite and >= 0, got {delta!r}")
    if delta == 0.0:
        s, nit = _l1_equality_lp(dictionary, x)
    else:
        s, nit = _l1_ball_socp(dictionary, x, delta)
    return _finish_l1("l1-delta", dictionary, x, s, nit, cfg,
                      delta + cfg.l1_feasibility_tol)


def _l1_ball_socp(dictionary, x, delta):
    import cvxpy as cp

    s = cp.Variable(dictionary.m)
    problem = cp.Problem(cp.Minimize(cp.norm1(s)),
                         [cp.norm2(x - dictionary.entries @ s) <= delta])
    problem.solve(solver=cp.CLARABEL, tol_feas=1e-10, tol_gap_abs=1e-10,
                  tol_gap_rel=1e-10)
    if problem.status != "optimal" or s.value is None:
        raise NotConverged(f"cone solver returned status {problem.status!r}")
    stats = problem.solver_stats
    nit = int(stats.num_iters) if stats and stats.num_iters is not None else 0
    return np.asarray(s.value, dtype=float), nit


def _finish_l1(name, dictionary, x, s, nit, cfg, tol):
    resid = float(np.linalg.norm(x - dictionary.entries @ s))
    if resid > tol:
        raise NotConverged(f"{name} residual {resid!r} exceeds tolerance {tol!r}")
    truncated = _truncate(s, cfg.zero_threshold)
    resid_t = float(np.linalg.norm(x - dictionary.entries @ truncated))
    if resid_t > 2.0 * tol:
        raise NotConverged(
            f"{name} output infeasible after truncation: {resid_t!r} > {2.0 * tol!r}")
    return _package(name, dictionary, x, truncated, nit, True)


def l1_vertex_oracle(dictionary, x, budget=VERTEX_BUDGET_DEFAULT):
    """Independent l1 oracle: enumerate all n-column basic solutions.

    An l1 minimizer of the equality-constrained program is attained at a
    basic solution, so the feasible basic solution with smallest l1 norm is
    a global optimum.  Requires rank(A) = n and C(m, n) within budget.
    """
    x = _check_signal(dictionary, x)
    n, m = dictionary.n, dictionary.m
    required = math.comb(m, n)
    if required > budget:
        raise BudgetExceeded(required, budget)
    if np.linalg.matrix_rank(dictionary.entries) < n:
        raise ValidationError("oracle requires a full row-rank dictionary")
    if float(np.linalg.norm(x)) == 0.0:
        return _package("l1-vertex-oracle", dictionary, x, np.zeros(m), 0, True)
    feas_tol = 1e-8 * (1.0 + float(np.linalg.norm(x)))
    best = None
    best_val = np.inf
    examined = 0
    for subset in itertools.combinations(range(m), n):
        examined += 1
        sub = dictionary.entries[:, subset]
        sv = np.linalg.svd(sub, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            continue
        c = np.linalg.solve(sub, x)
        if float(np.linalg.norm(x - sub @ c)) > feas_tol:
            continue
        val = float(np.abs(c).sum())
        if val < best_val - 1e-12:   # ties keep the lexicographically first basis
            best_val = val
            best = (subset, c)
    if best is None:
        raise NoSolutionWithinBudget("no feasible basic solution found")
    s = np.zeros(m)
    s[list(best[0])] = best[1]
    return _package("l1-vertex-oracle", dictionary, x, s, examined, True)


# ---------------------------------------------------------------------------
# Orthogonal matching pursuit


def omp(dictionary, x, max_atoms=None, residual_target=None, config=None):
    """Greedy pursuit: pick the atom most correlated with the residual
    (lowest index on ties), refit by least squares on the support, repeat
    until the residual target or the atom cap is reached."""
    cfg = config or DEFAULT_CONFIG
    x = _check_signal(dictionary, x)
    if max_atoms is None:
        max_atoms = cfg.max_atoms if cfg.max_atoms is not None else min(
            dictionary.n, dictionary.m)
    if residual_target is None:
        residual_target = (cfg.residual_target if cfg.residual_target is not None
                           else 1e-10 * float(np.linalg.norm(x)))
    if max_atoms < 1:
        raise ValidationError(f"max_atoms must be >= 1, got {max_atoms!r}")
    if residual_target < 0:
        raise ValidationError(f"residual_target must be >= 0, got {residual_target!r}")
    max_atoms = min(max_atoms, dictionary.n, dictionary.m)

    a = dictionary.entries
    support = []
    coeffs = np.zeros(0)
    residual = x.copy()
    iterations = 0
    while len(support) < max_atoms and float(np.linalg.norm(residual)) > residual_target:
        pick = int(np.argmax(np.abs(a.T @ residual)))
        if pick in support:
            break   # residual already orthogonal to the span; stalled
        support.append(pick)
        coeffs = least_squares_on_support(dictionary, support, x)
        residual = x - a[:, support] @ coeffs
        iterations += 1
    s = np.zeros(dictionary.m)
    if support:
        s[support] = coeffs
    converged = float(np.linalg.norm(residual)) <= residual_target
    return _package("omp", dictionary, x, s, iterations, converged)


# ---------------------------------------------------------------------------
# Smoothed-l0 (graduated non-convexity on a Gaussian surrogate of the l0 norm)


def _sl0_core(dictionary, x, delta, cfg):
    a = dictionary.entries
    pinv = np.linalg.pinv(a)
    s = pinv @ x
    norm_x = float(np.linalg.norm(x))
    if not np.any(np.abs(s) > 0):
        return s, 0.0, 0
    sigma = cfg.sl0_sigma0_scale * float(np.abs(s).max())
    sigma_stop = max(cfg.sl0_sigma_floor, delta / max(norm_x, 1e-300))
    sigma_last = sigma
    iterations = 0
    while sigma >= sigma_stop:
        for _ in range(cfg.sl0_inner_steps):
            s = s - cfg.sl0_step_scale * s * np.exp(-s * s / (2.0 * sigma * sigma))
            if delta == 0.0:
                s = s - pinv @ (a @ s - x)
            else:
                r = x - a @ s
                nr = float(np.linalg.norm(r))
                if nr > delta:
                    s = s + pinv @ r * (1.0 - delta / nr)
            iterations += 1
        sigma_last = sigma
        sigma *= cfg.sl0_sigma_decay
    return s, sigma_last, iterations


def _refit_on(dictionary, x, s, threshold):
    """Zero entries at or below threshold, then least-squares refit on the
    surviving support (minimum-norm fit when the support is wider than n)."""
    support = np.flatnonzero(np.abs(s) > threshold)
    out = np.zeros_like(s)
    if support.size:
        coeffs, _, _, _ = np.linalg.lstsq(dictionary.entries[:, support], x, rcond=None)
        out[support] = coeffs
    return out


def _sl0_finish(name, dictionary, x, s, sigma_last, iterations, eta, tol):
    """Support detection and polish for the graduated scheme.

    Entries below the final smoothing width are numerical dust of the
    method (measured around half that width), so detection first cuts at
    max(eta, 2 * sigma_last) and refits; if that support cannot meet the
    feasibility contract, it falls back to the eta-level support of the raw
    iterate, which is feasible up to refit whenever the iterate was.
    """
    for threshold in (max(eta, 2.0 * sigma_last), eta):
        candidate = _refit_on(dictionary, x, s, threshold)
        candidate = _refit_on(dictionary, x, candidate, eta)
        resid = float(np.linalg.norm(x - dictionary.entries @ candidate))
        if resid <= tol:
            return _package(name, dictionary, x, candidate, iterations, True)
    raise NotConverged(f"{name} residual {resid!r} exceeds tolerance {tol!r}")


def sl0(dictionary, x, config=None):
    """Smoothed-l0 solver for the exact-equality feasible set."""
    cfg = config or DEFAULT_CONFIG
    x = _check_signal(dictionary, x)
    s, sigma_last, iterations = _sl0_core(dictionary, x, 0.0, cfg)
    return _sl0_finish("sl0", dictionary, x, s, sigma_last, iterations,
                       cfg.zero_threshold, 1e-8)


def robust_sl0(dictionary, x, delta, config=None):
    """Smoothed-l0 solver projected onto the ||x - A s|| <= delta ball."""
    cfg = config or DEFAULT_CONFIG
    x = _check_signal(dictionary, x)
    if delta < 0 or not np.isfinite(delta):
        raise ValidationError(f"delta must be finite and >= 0, got {delta!r}")
    s, sigma_last, iterations = _sl0_core(dictionary, x, delta, cfg)
    return _sl0_finish("robust-sl0", dictionary, x, s, sigma_last, iterations,
                       cfg.zero_threshold, delta + 1e-8)


# ---------------------------------------------------------------------------
# Registry used by the lab and the CLI


def solve_with(name, dictionary, x, delta, config=None):
    """Dispatch a solver by its registry name with the trial's delta."""
    cfg = config or DEFAULT_CONFIG
    if name == "exhaustive-p0":
        return exhaustive_p0(dictionary, x, max_support=cfg.max_support,
                             budget=cfg.budget)
    if name == "exhaustive-p0-delta":
        return exhaustive_p0_delta(dictionary, x, delta,
                                   max_support=cfg.max_support, budget=cfg.budget)
    if name == "l1-eq":
        return l1_eq(dictionary, x, cfg)
    if name == "l1-delta":
        return l1_delta(dictionary, x, delta, cfg)
    if name == "omp":
        target = cfg.residual_target
        if target is None:
            target = delta if delta > 0 else None
        return omp(dictionary, x, max_atoms=cfg.max_atoms, residual_target=target,
                   config=cfg)
    if name == "sl0":
        return sl0(dictionary, x, cfg)
    if name == "robust-sl0":
        return robust_sl0(dictionary, x, delta, cfg)
    raise ValidationError(f"unknown solver {name!r}; known: {sorted(SOLVER_NAMES)}")


SOLVER_NAMES = ("exhaustive-p0", "exhaustive-p0-delta", "l1-eq", "l1-delta",
                "omp", "sl0", "robust-sl0")
