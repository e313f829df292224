"""Batch experiments: a seeded trial grid over (k, epsilon, delta) driven by
a strict JSON config, with deterministic JSON + CSV reports.

Trial t uses grid cell t mod |grid| (k outermost, then epsilon, then the
delta factor) and derives its random streams from (master_seed, t), so the
report is byte-identical for a given config regardless of worker count.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _jsonio, dictionary as dict_mod, solvers as solvers_mod, stability
from .certificate import certificate_to_dict, certify
from .errors import IoFailure, ParseFailure, ValidationError
from .solvers import SolverConfig
from .stability import TrialSpec, aggregate_report, run_trial

DEFAULT_CONFIG_RESOURCE = "default_experiment.json"

_DICT_KEYS = {
    "gaussian": {"type", "n", "m", "seed"},
    "dirac_hadamard": {"type", "n"},
    "file": {"type", "path"},
}

_SOLVER_KEYS = {
    "name", "delta", "max_support", "zero_threshold", "budget", "max_atoms",
    "residual_target", "sl0_sigma_decay", "sl0_sigma_floor", "sl0_inner_steps",
    "sl0_step_scale", "sl0_sigma0_scale",
}

_CONFIG_KEYS = {
    "dictionary", "trials", "k_grid", "epsilon_grid", "delta_factors",
    "solvers", "master_seed", "coefficient_magnitude", "coefficient_signs",
    "rank_tolerance", "budget", "zero_threshold",
}


@dataclass(frozen=True)
class ExperimentConfig:
    dictionary_spec: dict
    trials: int
    k_grid: tuple
    epsilon_grid: tuple
    delta_factors: tuple
    solver_specs: tuple        # of (name, dict of overrides)
    master_seed: int
    distribution: stability.CoefficientDistribution
    rank_tolerance: float
    budget: int
    zero_threshold: float

    def to_dict(self):
        return {
            "dictionary": dict(self.dictionary_spec),
            "trials": self.trials,
            "k_grid": list(self.k_grid),
            "epsilon_grid": list(self.epsilon_grid),
            "delta_factors": list(self.delta_factors),
            "solvers": [dict({"name": name}, **overrides)
                        for name, overrides in self.solver_specs],
            "master_seed": self.master_seed,
            "coefficient_magnitude": [self.distribution.min_magnitude,
                                      self.distribution.max_magnitude],
            "coefficient_signs": self.distribution.signs,
            "rank_tolerance": self.rank_tolerance,
            "budget": self.budget,
            "zero_threshold": self.zero_threshold,
        }


def _require(condition, path, message):
    if not condition:
        raise ValidationError(f"config {path}: {message}")


def parse_config(data):
    """Validate a config mapping strictly; unknown keys are errors."""
    _require(isinstance(data, dict), "$", "top level must be an object")
    unknown = set(data) - _CONFIG_KEYS
    _require(not unknown, "$", f"unknown keys {sorted(unknown)}")
    for key in ("dictionary", "trials", "k_grid", "epsilon_grid", "delta_factors",
                "solvers", "master_seed"):
        _require(key in data, "$", f"missing required key {key!r}")

    dspec = data["dictionary"]
    _require(isinstance(dspec, dict) and "type" in dspec, "dictionary",
             "must be an object with a 'type'")
    dtype = dspec["type"]
    _require(dtype in _DICT_KEYS, "dictionary.type",
             f"unknown type {dtype!r}; known: {sorted(_DICT_KEYS)}")
    unknown = set(dspec) - _DICT_KEYS[dtype]
    _require(not unknown, "dictionary", f"unknown keys {sorted(unknown)}")
    missing = _DICT_KEYS[dtype] - set(dspec)
    _require(not missing, "dictionary", f"missing keys {sorted(missing)}")

    trials = data["trials"]
    _require(isinstance(trials, int) and trials >= 1, "trials",
             "must be an integer >= 1")

    k_grid = data["k_grid"]
    _require(isinstance(k_grid, list) and k_grid, "k_grid", "must be a non-empty list")
    for i, k in enumerate(k_grid):
        _require(isinstance(k, int) and k >= 0, f"k_grid[{i}]",
                 "must be an integer >= 0")

    eps_grid = data["epsilon_grid"]
    _require(isinstance(eps_grid, list) and eps_grid, "epsilon_grid",
             "must be a non-empty list")
    for i, eps in enumerate(eps_grid):
        _require(isinstance(eps, (int, float)) and math.isfinite(eps) and eps >= 0,
                 f"epsilon_grid[{i}]", "must be a finite number >= 0")

    factors = data["delta_factors"]
    _require(isinstance(factors, list) and factors, "delta_factors",
             "must be a non-empty list")
    for i, f in enumerate(factors):
        _require(isinstance(f, (int, float)) and math.isfinite(f) and f >= 0,
                 f"delta_factors[{i}]", "must be a finite number >= 0")

    raw_solvers = data["solvers"]
    _require(isinstance(raw_solvers, list) and raw_solvers, "solvers",
             "must be a non-empty list")
    solver_specs = []
    for i, entry in enumerate(raw_solvers):
        _require(isinstance(entry, dict) and "name" in entry, f"solvers[{i}]",
                 "must be an object with a 'name'")
        name = entry["name"]
        _require(name in solvers_mod.SOLVER_NAMES, f"solvers[{i}].name",
                 f"unknown solver {name!r}; known: {list(solvers_mod.SOLVER_NAMES)}")
        unknown = set(entry) - _SOLVER_KEYS
        _require(not unknown, f"solvers[{i}]", f"unknown keys {sorted(unknown)}")
        overrides = {k: v for k, v in entry.items() if k != "name"}
        solver_specs.append((name, overrides))

    master_seed = data["master_seed"]
    _require(isinstance(master_seed, int) and master_seed >= 0, "master_seed",
             "must be an integer >= 0")

    magnitude = data.get("coefficient_magnitude", [0.5, 1.5])
    _require(isinstance(magnitude, list) and len(magnitude) == 2,
             "coefficient_magnitude", "must be [min, max]")
    signs = data.get("coefficient_signs", "random")
    distribution = stability.CoefficientDistribution(
        float(magnitude[0]), float(magnitude[1]), signs)

    rank_tolerance = data.get("rank_tolerance", 1e-10)
    _require(isinstance(rank_tolerance, float) and 0 < rank_tolerance <= 1e-3,
             "rank_tolerance", "must lie in (0, 1e-3]")
    budget = data.get("budget", solvers_mod.SUBSET_BUDGET_DEFAULT)
    _require(isinstance(budget, int) and budget >= 1, "budget",
             "must be an integer >= 1")
    zero_threshold = data.get("zero_threshold", solvers_mod.ZERO_THRESHOLD_DEFAULT)
    _require(isinstance(zero_threshold, float) and zero_threshold > 0,
             "zero_threshold", "must be a positive number")

    return ExperimentConfig(
        dictionary_spec=dict(dspec),
        trials=trials,
        k_grid=tuple(k_grid),
        epsilon_grid=tuple(float(e) for e in eps_grid),
        delta_factors=tuple(float(f) for f in factors),
        solver_specs=tuple(solver_specs),
        master_seed=master_seed,
        distribution=distribution,
        rank_tolerance=rank_tolerance,
        budget=budget,
        zero_threshold=zero_threshold,
    )


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"bad JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return parse_config(data)


def default_config_text():
    return resources.files("sparsestab.configs").joinpath(
        DEFAULT_CONFIG_RESOURCE).read_text(encoding="utf-8")


def default_config():
    return parse_config(json.loads(default_config_text()))


def build_dictionary(spec):
    if spec["type"] == "gaussian":
        return dict_mod.random_gaussian(spec["n"], spec["m"], spec["seed"])
    if spec["type"] == "dirac_hadamard":
        return dict_mod.dirac_hadamard(spec["n"])
    return dict_mod.load(spec["path"])


def _solver_list(config):
    out = []
    for name, overrides in config.solver_specs:
        merged = dict(overrides)
        merged.setdefault("zero_threshold", config.zero_threshold)
        merged.setdefault("budget", config.budget)
        out.append((name, SolverConfig(**merged)))
    return tuple(out)


def grid_cell(config, trial_index):
    """Map a trial index to its (k, epsilon, delta) cell."""
    cells = [(k, eps, factor)
             for k in config.k_grid
             for eps in config.epsilon_grid
             for factor in config.delta_factors]
    k, eps, factor = cells[trial_index % len(cells)]
    return k, eps, factor * eps


_WORKER_STATE = {}


def _run_indexed(args):
    plan, index = args
    config, dict_obj, certificate, solver_list = plan
    k, eps, delta = grid_cell(config, index)
    spec = TrialSpec(
        dictionary=dict_obj, k=k, epsilon=eps, delta=delta,
        solvers=solver_list, seed=(config.master_seed, index),
        dist=config.distribution,
    )
    return run_trial(spec, certificate, trial_id=index)


def run_experiment(config, workers=1):
    """Run the full grid and aggregate; deterministic for any worker count."""
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    dict_obj = build_dictionary(config.dictionary_spec)
    certificate = certify(dict_obj, rank_tolerance=config.rank_tolerance,
                          budget=config.budget)
    solver_list = _solver_list(config)
    plan = (config, dict_obj, certificate, solver_list)
    tasks = [(plan, i) for i in range(config.trials)]
    if workers == 1:
        results = [_run_indexed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_indexed, tasks,
                                    chunksize=max(1, config.trials // (4 * workers))))
    results.sort(key=lambda r: r.trial_id)
    report = aggregate_report(results, certificate)
    return ExperimentRun(config, dict_obj, certificate, tuple(results), report)


@dataclass(frozen=True)
class ExperimentRun:
    config: ExperimentConfig
    dictionary: object
    certificate: object
    results: tuple
    report: object


# ---------------------------------------------------------------------------
# Report serialization


def _check_to_row(check):
    if check is None:
        return "", "", ""
    bound = "" if check.bound is None else _jsonio.format_real(check.bound)
    applicable = "true" if check.applicable else "false"
    satisfied = "" if check.satisfied is None else ("true" if check.satisfied else "false")
    return bound, applicable, satisfied


CSV_HEADER = ("trial_id,solver,n,m,k,epsilon,delta,error,residual,"
              "bound_eq5,bound_eq8,bound_eq14,"
              "applicable_eq5,applicable_eq8,applicable_eq14,"
              "satisfied_eq5,satisfied_eq8,satisfied_eq14")


def render_csv(run):
    """One row per trial x solver; reals at 17 significant digits."""
    n, m = run.dictionary.n, run.dictionary.m
    lines = [CSV_HEADER]
    for result in run.results:
        for record in result.solver_records:
            error = "" if record.error is None else _jsonio.format_real(record.error)
            residual = ("" if record.solution is None
                        else _jsonio.format_real(record.solution.residual_norm))
            b5, a5, s5 = _check_to_row(record.eq5)
            b8, a8, s8 = _check_to_row(record.eq8)
            b14, a14, s14 = _check_to_row(record.eq14)
            lines.append(",".join([
                str(result.trial_id), record.solver_name, str(n), str(m),
                str(result.k), _jsonio.format_real(result.epsilon),
                _jsonio.format_real(record.delta), error, residual,
                b5, b8, b14, a5, a8, a14, s5, s8, s14,
            ]))
    return "\n".join(lines) + "\n"


def _solution_dict(solution):
    return None if solution is None else solution.to_dict()


def _trial_dict(result):
    return {
        "trial_id": result.trial_id,
        "k": result.k,
        "epsilon": result.epsilon,
        "delta": result.delta,
        "seed": list(result.seed) if isinstance(result.seed, tuple) else result.seed,
        "solvers": [
            {
                "solver_name": rec.solver_name,
                "delta": rec.delta,
                "failure": rec.failure,
                "solution": _solution_dict(rec.solution),
                "error": rec.error,
                "eq5": rec.eq5.to_dict(),
                "eq8": rec.eq8.to_dict(),
                "eq13": rec.eq13.to_dict(),
                "eq14": rec.eq14.to_dict(),
                "chain": rec.chain.to_dict(),
            }
            for rec in result.solver_records
        ],
    }


def _aggregate_dict(report):
    return {
        "trials": report.trials,
        "total_violations": report.total_violations,
        "solvers": [
            {
                "solver_name": agg.solver_name,
                "trials": agg.trials,
                "failures": agg.failures,
                "eq5": agg.eq5.to_dict(),
                "eq8": agg.eq8.to_dict(),
                "eq13": agg.eq13.to_dict(),
                "eq14": agg.eq14.to_dict(),
                "chain_applicable": agg.chain_applicable,
                "chain_failures": agg.chain_failures,
            }
            for agg in report.solver_aggregates
        ],
        "tightness": list(report.tightness),
    }


def render_json(run):
    payload = {
        "format": "sparsestab-experiment-report",
        "version": 1,
        "rng": dict_mod.RNG_DESCRIPTION,
        "config": run.config.to_dict(),
        "certificate": certificate_to_dict(run.certificate),
        "aggregates": _aggregate_dict(run.report),
        "trials": [_trial_dict(r) for r in run.results],
    }
    return _jsonio.dumps(payload, indent=2) + "\n"


def write_reports(run, base_path, formats=("json", "csv")):
    paths = {}
    for fmt in formats:
        path = f"{base_path}.{fmt}"
        text = render_json(run) if fmt == "json" else render_csv(run)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        paths[fmt] = path
    return paths
