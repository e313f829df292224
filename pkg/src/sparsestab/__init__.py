"""sparsestab: dictionary certificates, sparse solvers, and empirical
verification of sparse-recovery stability bounds on desk-scale problems."""

__version__ = "0.1.0"

from .certificate import (
    BoundInputs,
    DictionaryCertificate,
    UNBOUNDED,
    certify,
    coherence,
    compare_bounds,
    donoho_stability_bound,
    equivalence_threshold,
    kruskal_rank,
    l1_stability_threshold,
    looser_bound,
    main_stability_bound,
    sigma_min_profile,
    spark_exact,
    uniqueness_threshold,
)
from .dictionary import (
    Dictionary,
    dirac_hadamard,
    from_entries,
    load,
    normalize_columns,
    random_gaussian,
    save,
)
from .solvers import (
    SolverConfig,
    SparseSolution,
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
from .stability import (
    CoefficientDistribution,
    NoisyInstance,
    TrialSpec,
    aggregate_report,
    build_instance,
    gen_noise,
    gen_sparse_signal,
    run_trial,
    verify_proof_chain,
    verify_theorem4,
    verify_theorem5,
    verify_uniqueness,
)

__all__ = [name for name in dir() if not name.startswith("_")]
