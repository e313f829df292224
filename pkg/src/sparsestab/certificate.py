"""Dictionary-level certificates: coherence, spark, Kruskal rank, the
per-cardinality minimum-singular-value profile, and the closed-form sparsity
thresholds and recovery-error bounds computed from them.

Spark and the sigma profile come from one exhaustive sweep over column
subsets in ascending size, lexicographic within each size.  A subset is
declared linearly dependent when its smallest singular value is at most
``rank_tolerance`` times its largest.  Enumeration is guarded by an explicit
subset budget so oversize inputs fail loudly instead of hanging.
"""

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _jsonio
from .errors import (
    BudgetExceeded,
    IoFailure,
    ParseFailure,
    PreconditionViolated,
    ValidationError,
)

RANK_TOLERANCE_DEFAULT = 1e-10
SUBSET_BUDGET_DEFAULT = 10_000_000
TIGHTNESS_TOL = 1e-9

#: Sentinel returned by threshold calculators when coherence is zero
#: (orthonormal dictionary): every sparsity level is admissible.
UNBOUNDED = math.inf

_CHUNK = 65536


@dataclass(frozen=True)
class DictionaryCertificate:
    """Computed invariants of one dictionary.

    ``spark`` is None when all m columns are linearly independent (only
    possible for m <= n); the Kruskal rank is then m.  ``sigma_profile[j-1]``
    is the minimum over all j-column submatrices of the smallest singular
    value, for 1 <= j <= kruskal_rank.
    """

    coherence: float
    spark: Optional[int]
    kruskal_rank: int
    sigma_profile: np.ndarray
    rank_tolerance: float
    dictionary_label: str

    def __post_init__(self):
        prof = np.asarray(self.sigma_profile, dtype=float).copy()
        prof.setflags(write=False)
        object.__setattr__(self, "sigma_profile", prof)

    def sigma_min(self, j):
        """sigma_min(j) with the convention sigma_min(0) = 1."""
        if j == 0:
            return 1.0
        if j < 0 or j > self.kruskal_rank:
            raise PreconditionViolated(
                f"sigma_min({j}) undefined: profile covers 1..{self.kruskal_rank}")
        return float(self.sigma_profile[j - 1])


@dataclass(frozen=True)
class BoundInputs:
    """Sparsity k of the ground truth, noise budget epsilon, slack delta."""

    k: int
    epsilon: float
    delta: float

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 0:
            raise ValidationError(f"k must be a non-negative integer, got {self.k!r}")
        for name, v in (("epsilon", self.epsilon), ("delta", self.delta)):
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")


class SparkResult(NamedTuple):
    spark: Optional[int]
    witness: Optional[tuple]


def coherence(dictionary):
    """Largest absolute inner product between two distinct atoms."""
    if dictionary.m < 2:
        warnings.warn("coherence is undefined for a single-atom dictionary; returning 0",
                      stacklevel=2)
        return 0.0
    g = dictionary.entries.T @ dictionary.entries
    np.fill_diagonal(g, 0.0)
    return float(np.max(np.abs(g)))


def _check_rank_tolerance(tol):
    if not (0.0 < tol <= 1e-3):
        raise ValidationError(f"rank_tolerance must lie in (0, 1e-3], got {tol!r}")


def _subset_count(m, sizes):
    return sum(math.comb(m, j) for j in sizes)


def _sweep(entries, rank_tolerance, budget=None, max_size=None):
    """Scan column subsets by ascending size, lexicographic within size.

    Returns (spark, witness, profile, visited).  ``profile[j-1]`` holds the
    minimum smallest singular value over size-j subsets for every fully
    scanned size below the spark.  Stops at the first dependent subset; if
    none is found and m > n, the size cap n+1 forces spark = n+1.
    """
    n, m = entries.shape
    cap = min(m, n) if max_size is None else min(max_size, m, n)
    at = np.ascontiguousarray(entries.T)
    profile = []
    visited = 0
    for j in range(1, cap + 1):
        combos = itertools.combinations(range(m), j)
        size_min = np.inf
        while True:
            flat = np.fromiter(
                itertools.chain.from_iterable(itertools.islice(combos, _CHUNK)),
                dtype=np.intp)
            if flat.size == 0:
                break
            idx = flat.reshape(-1, j)
            visited += idx.shape[0]
            if budget is not None and visited > budget:
                raise BudgetExceeded(visited, budget)
            sv = np.linalg.svd(at[idx], compute_uv=False)
            smin = sv[:, -1]
            if j >= 2:
                dep = smin <= rank_tolerance * sv[:, 0]
                if dep.any():
                    first = int(np.argmax(dep))
                    return j, tuple(int(v) for v in idx[first]), profile, visited
            size_min = min(size_min, float(smin.min()))
        profile.append(size_min)
    if m > n and cap == n:
        # any n+1 columns in n dimensions are dependent
        return n + 1, tuple(range(n + 1)), profile, visited
    return None, None, profile, visited


def spark_exact(dictionary, rank_tolerance=RANK_TOLERANCE_DEFAULT):
    """Smallest number of linearly dependent columns, with one witness subset.

    Returns SparkResult(None, None) when every subset of the m <= n columns
    is independent.
    """
    _check_rank_tolerance(rank_tolerance)
    spark, witness, _, _ = _sweep(dictionary.entries, rank_tolerance)
    return SparkResult(spark, witness)


def kruskal_rank(dictionary, rank_tolerance=RANK_TOLERANCE_DEFAULT):
    """Largest q such that every q columns are linearly independent."""
    spark, _ = spark_exact(dictionary, rank_tolerance)
    return dictionary.m if spark is None else spark - 1


def sigma_min_profile(dictionary, q=None, rank_tolerance=RANK_TOLERANCE_DEFAULT,
                      budget=SUBSET_BUDGET_DEFAULT):
    """Array of sigma_min(j) for j = 1..q (exhaustive over all subsets).

    The total subset count across sizes must fit the budget; the required
    count is reported otherwise.
    """
    _check_rank_tolerance(rank_tolerance)
    if q is None:
        q = kruskal_rank(dictionary, rank_tolerance)
    required = _subset_count(dictionary.m, range(1, q + 1))
    if budget is not None and required > budget:
        raise BudgetExceeded(required, budget)
    _, _, profile, _ = _sweep(dictionary.entries, rank_tolerance, max_size=q)
    if len(profile) < q:
        raise ValidationError(f"q={q} exceeds the actual Kruskal rank {len(profile)}")
    return np.array(profile[:q])


def certify(dictionary, rank_tolerance=RANK_TOLERANCE_DEFAULT,
            budget=SUBSET_BUDGET_DEFAULT):
    """Compute the full certificate in a single subset sweep."""
    _check_rank_tolerance(rank_tolerance)
    spark, _, profile, _ = _sweep(dictionary.entries, rank_tolerance, budget=budget)
    q = dictionary.m if spark is None else spark - 1
    return DictionaryCertificate(
        coherence=coherence(dictionary),
        spark=spark,
        kruskal_rank=q,
        sigma_profile=np.array(profile[:q]),
        rank_tolerance=rank_tolerance,
        dictionary_label=dictionary.label,
    )


# ---------------------------------------------------------------------------
# Closed-form sparsity thresholds


def _largest_integer_below(x):
    return math.ceil(x) - 1


def uniqueness_threshold(spark):
    """Largest k with k < spark/2 (sparsest-solution uniqueness)."""
    if spark is None or spark < 2:
        raise ValidationError(f"spark must be a finite integer >= 2, got {spark!r}")
    return _largest_integer_below(spark / 2.0)


def equivalence_threshold(m_coherence):
    """Largest k with k < (1 + 1/M)/2, the l0/l1 equivalence range.

    Returns UNBOUNDED for M = 0 (orthonormal dictionary).
    """
    _check_coherence(m_coherence)
    if m_coherence == 0.0:
        return UNBOUNDED
    return _largest_integer_below((1.0 + 1.0 / m_coherence) / 2.0)


def l1_stability_threshold(m_coherence):
    """Largest k with k < (1 + 1/M)/4, the noise-aware l1 stability range."""
    _check_coherence(m_coherence)
    if m_coherence == 0.0:
        return UNBOUNDED
    return _largest_integer_below((1.0 + 1.0 / m_coherence) / 4.0)


def _check_coherence(m_coherence):
    if not np.isfinite(m_coherence) or m_coherence < 0 or m_coherence > 1 + 1e-9:
        raise ValidationError(f"coherence must lie in [0, 1], got {m_coherence!r}")


# ---------------------------------------------------------------------------
# Recovery-error bounds


def donoho_stability_bound(inputs, m_coherence):
    """(epsilon + delta) / sqrt(1 - M(2k - 1)).

    Requires k < (1 + 1/M)/2, which is equivalent to positivity of the term
    under the root; raises PreconditionViolated otherwise (no guarantee, not
    an infinite bound).
    """
    _check_coherence(m_coherence)
    if m_coherence > 0 and not inputs.k < (1.0 + 1.0 / m_coherence) / 2.0:
        raise PreconditionViolated(
            f"k={inputs.k} is not below (1 + 1/M)/2 = "
            f"{(1.0 + 1.0 / m_coherence) / 2.0!r}")
    under = 1.0 - m_coherence * (2 * inputs.k - 1)
    return (inputs.epsilon + inputs.delta) / math.sqrt(under)


def main_stability_bound(inputs, certificate):
    """(delta + epsilon) / sigma_min(2k); requires 2k <= Kruskal rank."""
    ell = 2 * inputs.k
    if ell > certificate.kruskal_rank:
        raise PreconditionViolated(
            f"2k = {ell} exceeds the Kruskal rank {certificate.kruskal_rank}")
    return (inputs.delta + inputs.epsilon) / certificate.sigma_min(ell)


def looser_bound(inputs, certificate):
    """(delta + epsilon) / sigma_min(q): valid without knowing k."""
    return (inputs.delta + inputs.epsilon) / certificate.sigma_min(certificate.kruskal_rank)


@dataclass(frozen=True)
class BoundComparison:
    k: int
    ell: int
    main_bound: float
    donoho_bound: Optional[float]   # None when the coherence condition fails
    donoho_applicable: bool
    tightness_checked: bool
    tightness_gap: Optional[float]  # sigma_min(ell)^2 + M(ell-1) - 1
    tightness_ok: Optional[bool]
    equality: Optional[bool]        # |gap| within TIGHTNESS_TOL


def compare_bounds(inputs, certificate, m_coherence):
    """Evaluate both error bounds side by side, plus the profile-vs-coherence
    tightness inequality sigma_min(ell)^2 >= 1 - M(ell - 1).

    The tightness check applies for 2 <= ell < 1 + 1/M; smaller ell are
    degenerate for it (sigma_min(0) is a convention, not a submatrix).
    """
    ell = 2 * inputs.k
    main = main_stability_bound(inputs, certificate)
    applicable = m_coherence == 0.0 or inputs.k < (1.0 + 1.0 / m_coherence) / 2.0
    donoho = donoho_stability_bound(inputs, m_coherence) if applicable else None
    coh_limit = UNBOUNDED if m_coherence == 0.0 else 1.0 + 1.0 / m_coherence
    checked = 2 <= ell < coh_limit
    gap = ok = eq = None
    if checked:
        gap = certificate.sigma_min(ell) ** 2 + m_coherence * (ell - 1) - 1.0
        ok = gap >= -TIGHTNESS_TOL
        eq = abs(gap) <= TIGHTNESS_TOL
    return BoundComparison(inputs.k, ell, main, donoho, applicable, checked, gap, ok, eq)


def tightness_records(certificate, m_coherence):
    """Per-ell tightness diagnostics for 2 <= ell <= q with ell < 1 + 1/M."""
    out = []
    limit = UNBOUNDED if m_coherence == 0.0 else 1.0 + 1.0 / m_coherence
    for ell in range(2, certificate.kruskal_rank + 1):
        if not ell < limit:
            break
        gap = certificate.sigma_min(ell) ** 2 + m_coherence * (ell - 1) - 1.0
        out.append({
            "ell": ell,
            "sigma_min_sq": certificate.sigma_min(ell) ** 2,
            "coherence_floor": 1.0 - m_coherence * (ell - 1),
            "gap": gap,
            "ok": bool(gap >= -TIGHTNESS_TOL),
            "equality": bool(abs(gap) <= TIGHTNESS_TOL),
        })
    return out


# ---------------------------------------------------------------------------
# Serialization


def certificate_to_dict(certificate):
    return {
        "coherence": certificate.coherence,
        "spark": "none" if certificate.spark is None else certificate.spark,
        "kruskal_rank": certificate.kruskal_rank,
        "sigma_profile": [float(v) for v in certificate.sigma_profile],
        "rank_tolerance": certificate.rank_tolerance,
        "dictionary_label": certificate.dictionary_label,
    }


def certificate_from_dict(data):
    try:
        spark = data["spark"]
        if spark == "none":
            spark = None
        elif not isinstance(spark, int):
            raise ParseFailure(f"spark must be an integer or 'none', got {spark!r}")
        return DictionaryCertificate(
            coherence=float(data["coherence"]),
            spark=spark,
            kruskal_rank=int(data["kruskal_rank"]),
            sigma_profile=np.array([float(v) for v in data["sigma_profile"]]),
            rank_tolerance=float(data["rank_tolerance"]),
            dictionary_label=str(data["dictionary_label"]),
        )
    except KeyError as exc:
        raise ParseFailure(f"certificate is missing field {exc.args[0]!r}") from None


def save_certificate(certificate, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_jsonio.dumps(certificate_to_dict(certificate), indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_certificate(path):
    import json

    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"bad JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return certificate_from_dict(data)
