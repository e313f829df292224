"""Command-line frontend: analyze, solve, experiment, thresholds.

Human-readable summaries go to stdout; machine artifacts go to files only.
Errors print one machine-parsable line `error: <Code>: <message>` on stderr
and exit with a class-specific code:

  0  success / zero violations among applicable checks
  2  validation error (arguments, parameters, input data, config)
  3  I/O failure
  4  enumeration budget exceeded or no solution within the search cap
  5  solver did not converge
  6  experiment finished with bound violations
"""

import argparse
import math
import sys

from . import __version__, _jsonio
from . import certificate as cert_mod
from . import dictionary as dict_mod
from . import experiments, solvers as solvers_mod
from .errors import (
    BudgetExceeded,
    IoFailure,
    NoSolutionWithinBudget,
    NotConverged,
    SparseStabError,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_CONVERGENCE = 5
EXIT_VIOLATIONS = 6


def _exit_code(exc):
    if isinstance(exc, (BudgetExceeded, NoSolutionWithinBudget)):
        return EXIT_BUDGET
    if isinstance(exc, NotConverged):
        return EXIT_CONVERGENCE
    if isinstance(exc, IoFailure):
        return EXIT_IO
    return EXIT_VALIDATION


def _fmt(value):
    return _jsonio.format_real(float(value))


def _print_threshold(name, value):
    if value == math.inf:
        print(f"{name} unbounded")
    else:
        print(f"{name} {value}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsestab",
        description="Dictionary certificates, sparse solvers, and stability "
                    "bound verification for underdetermined linear systems.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="compute a dictionary certificate")
    p.add_argument("matrix", help="matrix file (plain-text format)")
    p.add_argument("--rank-tolerance", type=float, default=1e-10)
    p.add_argument("--budget", type=int, default=cert_mod.SUBSET_BUDGET_DEFAULT,
                   help="subset enumeration cap")
    p.add_argument("--output", default=None,
                   help="certificate JSON path (default: <matrix>.cert.json)")

    p = sub.add_parser("solve", help="run one sparse solver on one signal")
    p.add_argument("matrix")
    p.add_argument("signal", help="signal file (one real per line)")
    p.add_argument("--solver", required=True, choices=solvers_mod.SOLVER_NAMES)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--max-atoms", type=int, default=None)
    p.add_argument("--residual-target", type=float, default=None)
    p.add_argument("--max-support", type=int, default=None)
    p.add_argument("--zero-threshold", type=float,
                   default=solvers_mod.ZERO_THRESHOLD_DEFAULT)
    p.add_argument("--budget", type=int, default=solvers_mod.SUBSET_BUDGET_DEFAULT)
    p.add_argument("--output", default=None,
                   help="solution JSON path (default: <signal>.solution.json)")

    p = sub.add_parser("experiment", help="run a seeded stability experiment grid")
    p.add_argument("config", nargs="?", default=None,
                   help="experiment config JSON (default: bundled config)")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--budget", type=int, default=None,
                   help="override the enumeration budget")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", default="report", help="report base path")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")

    p = sub.add_parser("thresholds", help="print sparsity thresholds and bounds")
    p.add_argument("--coherence", type=float, default=None)
    p.add_argument("--spark", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--certificate", default=None,
                   help="certificate JSON for the profile-based bounds")
    return parser


def cmd_analyze(args):
    d = dict_mod.load(args.matrix)
    certificate = cert_mod.certify(d, rank_tolerance=args.rank_tolerance,
                                   budget=args.budget)
    output = args.output or f"{args.matrix}.cert.json"
    cert_mod.save_certificate(certificate, output)
    spark = "none" if certificate.spark is None else certificate.spark
    print(f"coherence {_fmt(certificate.coherence)}")
    print(f"spark {spark}")
    print(f"kruskal_rank {certificate.kruskal_rank}")
    print(f"sigma_min_q {_fmt(certificate.sigma_min(certificate.kruskal_rank))}")
    if certificate.spark is not None:
        print(f"uniqueness_threshold {cert_mod.uniqueness_threshold(certificate.spark)}")
    else:
        print("uniqueness_threshold unbounded")
    _print_threshold("equivalence_threshold",
                     cert_mod.equivalence_threshold(certificate.coherence))
    print(f"certificate {output}")
    return EXIT_OK


def cmd_solve(args):
    d = dict_mod.load(args.matrix)
    x = dict_mod.load_vector(args.signal)
    config = solvers_mod.SolverConfig(
        delta=args.delta,
        max_support=args.max_support,
        zero_threshold=args.zero_threshold,
        budget=args.budget,
        max_atoms=args.max_atoms,
        residual_target=args.residual_target,
    )
    solution = solvers_mod.solve_with(args.solver, d, x, args.delta, config)
    output = args.output or f"{args.signal}.solution.json"
    try:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(_jsonio.dumps(solution.to_dict(), indent=2) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {output}: {exc}") from exc
    print("support " + " ".join(str(i) for i in solution.support))
    print(f"l0 {solution.l0()}")
    print(f"residual {_fmt(solution.residual_norm)}")
    print(f"solution {output}")
    return EXIT_OK


def cmd_experiment(args):
    if args.config is None:
        config = experiments.default_config()
    else:
        config = experiments.load_config(args.config)
    if args.seed is not None or args.budget is not None:
        data = config.to_dict()
        if args.seed is not None:
            data["master_seed"] = args.seed
        if args.budget is not None:
            data["budget"] = args.budget
        config = experiments.parse_config(data)
    run = experiments.run_experiment(config, workers=args.workers)
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    paths = experiments.write_reports(run, args.output, formats)

    for agg in run.report.solver_aggregates:
        print(f"solver {agg.solver_name}: "
              f"eq5 applicable {agg.eq5.applicable} violations {agg.eq5.violations}; "
              f"eq8 applicable {agg.eq8.applicable} violations {agg.eq8.violations}; "
              f"eq14 applicable {agg.eq14.applicable} violations {agg.eq14.violations}; "
              f"chain applicable {agg.chain_applicable} failures {agg.chain_failures}; "
              f"solver-failures {agg.failures}")
    print(f"total_violations {run.report.total_violations}")
    for fmt, path in paths.items():
        print(f"report_{fmt} {path}")
    return EXIT_OK if run.report.total_violations == 0 else EXIT_VIOLATIONS


def cmd_thresholds(args):
    if args.coherence is None and args.spark is None:
        raise ValidationError("need at least one of --coherence or --spark")
    if args.spark is not None:
        print(f"uniqueness_threshold {cert_mod.uniqueness_threshold(args.spark)}")
    if args.coherence is not None:
        _print_threshold("equivalence_threshold",
                         cert_mod.equivalence_threshold(args.coherence))
        _print_threshold("l1_delta_stability_threshold",
                         cert_mod.l1_stability_threshold(args.coherence))

    bound_args = (args.k, args.epsilon, args.delta)
    if any(v is not None for v in bound_args):
        if any(v is None for v in bound_args):
            raise ValidationError("bound evaluation needs all of --k, --epsilon, --delta")
        inputs = cert_mod.BoundInputs(args.k, args.epsilon, args.delta)
        if args.coherence is not None:
            try:
                value = cert_mod.donoho_stability_bound(inputs, args.coherence)
                print(f"bound_eq5 {_fmt(value)}")
            except cert_mod.PreconditionViolated:
                print("bound_eq5 inapplicable")
        if args.certificate is not None:
            certificate = cert_mod.load_certificate(args.certificate)
            try:
                print(f"bound_eq8 {_fmt(cert_mod.main_stability_bound(inputs, certificate))}")
            except cert_mod.PreconditionViolated:
                print("bound_eq8 inapplicable")
            print(f"bound_eq13 {_fmt(cert_mod.looser_bound(inputs, certificate))}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "analyze": cmd_analyze,
        "solve": cmd_solve,
        "experiment": cmd_experiment,
        "thresholds": cmd_thresholds,
    }
    try:
        return handlers[args.command](args)
    except SparseStabError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except ValueError as exc:
        print(f"error: ValidationError: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
