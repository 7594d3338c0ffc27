#!/usr/bin/env python3
"""
bench.py
Command-line benchmark harness. Loads run settings from an INI config file
(flags override it), then prints bound tables, efficiency tables, single
estimates or alpha optimizations as CSV or markdown on stdout.

    python -m mis_balance bounds --problem 1 --format csv
    python -m mis_balance efficiency --problem 5 --costs 1,5
    python -m mis_balance estimate --problem 4 --alpha 0.3,0.3,0.4 --runs 100
    python -m mis_balance optimize --problem 1 --case case4
"""

import argparse
import configparser
import csv
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

from mis_balance.analysis import bounds_unbiased, inverse_efficiency, moments, variance_g
from mis_balance.errors import DidNotConverge, MisError, SelfCheckViolation, ValidationError
from mis_balance.estimators import EstimatorConfig, EstimatorKind, RngSeed, empirical_variance, estimate_g
from mis_balance.model import SimplexVector, allocate, example_problem, get_strategy, published_cost_profiles
from mis_balance.optimize import (
    CASE3,
    DEFAULT_SOLVER,
    OBJECTIVES,
    SolverConfig,
    objective_value,
    optimal_beta_with_costs,
    solve_alpha,
)
from mis_balance.quadrature import DEFAULT_QUADRATURE, QuadratureConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "bench_config.ini"
DEFAULT_STRATEGIES = ("equal", "inv-variance", "inv-cost-variance")
FORMATS = ("csv", "markdown")

BOUND_COLUMNS = ("B1", "harmonic mean", "B2", "B3", "power mean(-1/2)", "variance")
# bound >= variance is checked with this relative slack for round-off
SELF_CHECK_SLACK = 1e-9


@dataclass(frozen=True)
class RunConfig:
    problem_id: int = 1
    strategies: Tuple[str, ...] = DEFAULT_STRATEGIES
    cost_profile: Union[str, Tuple[float, ...]] = "published"
    n_samples: int = 10000
    runs: int = 100
    seed: RngSeed = RngSeed(0)
    output_format: str = "csv"
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE
    solver: SolverConfig = DEFAULT_SOLVER
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.strategies:
            raise ValidationError("At least one strategy is required")
        if self.runs < 1:
            raise ValidationError(f"runs must be >= 1, got {self.runs}")
        if self.n_samples < 1:
            raise ValidationError(f"N must be >= 1, got {self.n_samples}")
        if self.output_format not in FORMATS:
            raise ValidationError(f"Unknown output format {self.output_format!r}, expected csv or markdown")
        if isinstance(self.cost_profile, str):
            if self.cost_profile not in ("published", "unit"):
                raise ValidationError(f"Unknown cost profile {self.cost_profile!r}")
        else:
            object.__setattr__(self, "cost_profile", tuple(float(c) for c in self.cost_profile))
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class TableRow:
    strategy: str
    columns: Dict[str, float] = field(default_factory=dict)


# --- Commands ---

def _problem(cfg, problem):
    return example_problem(cfg.problem_id) if problem is None else problem


def _map_rows(cfg, fn, items):
    """Evaluate rows concurrently; results keep the declared order."""
    if cfg.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def cmd_bounds(cfg, problem=None):
    """One row per strategy: B1, harmonic mean, B2, B3, power mean(-1/2) and V[F^1], at equal costs."""
    if problem is None and cfg.problem_id not in (1, 2, 3, 4):
        raise ValidationError(f"Bound tables cover examples 1-4, got problem {cfg.problem_id}")
    problem = _problem(cfg, problem)
    problem = problem.with_costs((1.0,) * problem.n)
    strategies = [get_strategy(name) for name in cfg.strategies]
    baseline = moments(problem, SimplexVector.uniform(problem.n), cfg.quadrature)
    logger.info(f"Computing bounds for {problem.label or 'problem'} with {len(strategies)} strategies")

    def row(strategy):
        alpha = strategy(problem, baseline)
        report = bounds_unbiased(moments(problem, alpha, cfg.quadrature))
        values = (
            report.harmonic_bound,
            report.harmonic_mean,
            report.arithmetic_bound,
            report.power_half_bound,
            report.power_mean_neg_half,
            report.variance_f1,
        )
        return TableRow(strategy.name, dict(zip(BOUND_COLUMNS, values)))

    rows = _map_rows(cfg, row, strategies)
    check_bound_rows(rows)
    return rows


def check_bound_rows(rows):
    """Every bound column must be >= the variance column."""
    for r in rows:
        variance = r.columns["variance"]
        for name in ("B1", "B2", "B3"):
            bound = r.columns[name]
            if bound < variance - SELF_CHECK_SLACK * max(abs(bound), abs(variance)):
                raise SelfCheckViolation(
                    f"Row {r.strategy!r}: {name}={bound!r} is below the variance {variance!r}"
                )


def _cost_profiles(cfg, problem, from_registry):
    if cfg.cost_profile == "unit":
        return [(1.0,) * problem.n]
    if cfg.cost_profile == "published":
        return list(published_cost_profiles(cfg.problem_id)) if from_registry else [problem.costs]
    if len(cfg.cost_profile) != problem.n:
        raise ValidationError(f"Expected {problem.n} costs, got {len(cfg.cost_profile)}")
    return [cfg.cost_profile]


def _cost_label(costs):
    return "-".join(f"{c:g}" for c in costs)


def cmd_efficiency(cfg, problem=None):
    """Per strategy, E_F^-1 at beta = alpha and E_G^-1 at the cost-aware optimal beta, per cost profile."""
    profiles = _cost_profiles(cfg, _problem(cfg, problem), problem is None)
    problem = _problem(cfg, problem)
    strategies = [get_strategy(name) for name in cfg.strategies]
    suffix = len(profiles) > 1
    logger.info(f"Computing efficiencies for {problem.label or 'problem'} under {len(profiles)} cost profile(s)")

    def row(strategy):
        columns = {}
        for costs in profiles:
            priced = problem.with_costs(costs)
            baseline = moments(priced, SimplexVector.uniform(priced.n), cfg.quadrature)
            alpha = strategy(priced, baseline)
            m = moments(priced, alpha, cfg.quadrature)
            tag = f" costs {_cost_label(costs)}" if suffix else ""
            columns[f"E_F^-1{tag}"] = inverse_efficiency(m, alpha, costs)
            columns[f"E_G^-1{tag}"] = inverse_efficiency(m, optimal_beta_with_costs(m, costs), costs)
        return TableRow(strategy.name, columns)

    return _map_rows(cfg, row, strategies)


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    counts: Tuple[int, ...]
    empirical_variance: Optional[float]
    analytic_variance: float
    std_error: Optional[float]
    z_discrepancy: Optional[float]
    runs: int

    def rows(self, label):
        columns = {
            "estimate": self.estimate,
            "N": float(sum(self.counts)),
            "empirical variance": math.nan if self.empirical_variance is None else self.empirical_variance,
            "analytic variance": self.analytic_variance,
            "std error": math.nan if self.std_error is None else self.std_error,
            "z": math.nan if self.z_discrepancy is None else self.z_discrepancy,
        }
        return [TableRow(label, columns)]


def _z(empirical, analytic, se):
    if se > 0:
        return abs(empirical - analytic) / se
    return 0.0 if math.isclose(empirical, analytic, rel_tol=1e-9, abs_tol=1e-12) else math.inf


def cmd_estimate(cfg, alpha=None, beta=None, problem=None):
    """
    Point estimate of G (F when beta = alpha), its empirical variance over
    cfg.runs replications, the exact variance for the integer allocation
    and the z-discrepancy between the two.
    """
    problem = _problem(cfg, problem)
    alpha = SimplexVector.uniform(problem.n) if alpha is None else _simplex(alpha)
    beta = alpha if beta is None else _simplex(beta)
    counts = allocate(beta, cfg.n_samples)

    point = estimate_g(problem, alpha, beta, cfg.n_samples, cfg.seed)
    m = moments(problem, alpha, cfg.quadrature)
    analytic = variance_g(m, counts)

    empirical = se = z = None
    if cfg.runs >= 2:
        kind = EstimatorKind.F if beta == alpha else EstimatorKind.G
        config = EstimatorConfig(kind, alpha, cfg.n_samples, beta)
        stats = empirical_variance(problem, config, cfg.runs, cfg.seed.offset(1), cfg.workers)
        empirical, se = stats.variance_of_estimator, stats.std_error_of_variance
        z = _z(empirical, analytic, se)
        logger.info(f"Empirical variance {empirical:.6g} vs analytic {analytic:.6g} (z={z:.3g})")
    return EstimateReport(point.value, point.counts, empirical, analytic, se, z, cfg.runs)


@dataclass(frozen=True)
class OptimizeReport:
    alpha: SimplexVector
    objective: float
    residual_norm: float
    iterations: int
    at_floor: bool
    baseline_objective: float

    def rows(self, label):
        columns = {f"alpha_{i + 1}": a for i, a in enumerate(self.alpha)}
        columns.update({
            "objective": self.objective,
            "residual": self.residual_norm,
            "iterations": float(self.iterations),
            "equal-alpha objective": self.baseline_objective,
        })
        return [TableRow(label, columns)]


def cmd_optimize(cfg, case, beta=None, problem=None):
    """Solve for alpha under case1, case3 (fixed beta), case4 or randomized; compare with equal alpha."""
    problem = _problem(cfg, problem)
    if case == CASE3 and beta is None:
        raise ValidationError("case3 needs --beta")
    beta = None if beta is None else _simplex(beta)
    result = solve_alpha(problem, case, beta, cfg.solver, quad_cfg=cfg.quadrature)
    objective = objective_value(moments(problem, result.alpha, cfg.quadrature), case, beta)
    baseline = objective_value(moments(problem, SimplexVector.uniform(problem.n), cfg.quadrature), case, beta)
    return OptimizeReport(result.alpha, objective, result.residual.norm, result.iterations, result.at_floor, baseline)


# --- Output ---

def _simplex(values):
    return values if isinstance(values, SimplexVector) else SimplexVector(tuple(values))


def format_table(rows, fmt="csv"):
    if not rows:
        return ""
    names = list(rows[0].columns)
    for r in rows:
        if list(r.columns) != names:
            raise SelfCheckViolation(f"Row {r.strategy!r} has columns {list(r.columns)}, expected {names}")

    if fmt == "markdown":
        lines = ["| strategy | " + " | ".join(names) + " |", "|---" * (len(names) + 1) + "|"]
        for r in rows:
            cells = [f"{r.columns[n]:.6g}" for n in names]
            lines.append(f"| {r.strategy} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["strategy"] + names)
    for r in rows:
        writer.writerow([r.strategy] + [repr(float(r.columns[n])) for n in names])
    return out.getvalue()


# --- Configuration ---

def _parse_floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"Expected comma-separated numbers, got {text!r}") from None


def _parse_costs(text):
    text = text.strip()
    if text in ("published", "unit"):
        return text
    return _parse_floats(text)


def load_run_config(args):
    """Defaults, then the INI file, then any flag given on the command line."""
    config = configparser.ConfigParser()
    config.read(args.config)
    for section in ("run", "quadrature", "solver"):
        if not config.has_section(section):
            config.add_section(section)
    run, quad_sec, solver_sec = config["run"], config["quadrature"], config["solver"]

    problem_id = run.getint("problem", 1)
    strategies = run.get("strategies", ",".join(DEFAULT_STRATEGIES))
    costs = run.get("costs", "published")
    n_samples = run.getint("n", 10000)
    runs = run.getint("runs", 100)
    seed = run.getint("seed", 0)
    output_format = run.get("format", "csv")
    workers = run.getint("workers", 1)
    rel_tol = quad_sec.getfloat("rel_tol", DEFAULT_QUADRATURE.rel_tol)

    # Flags win over the config file
    if args.problem is not None:
        problem_id = args.problem
    if args.strategy is not None:
        strategies = args.strategy
    if args.costs is not None:
        costs = args.costs
    if args.n is not None:
        n_samples = args.n
    if args.runs is not None:
        runs = args.runs
    if args.seed is not None:
        seed = args.seed
    if args.format is not None:
        output_format = args.format
    if args.workers is not None:
        workers = args.workers
    if args.tol_quad is not None:
        rel_tol = args.tol_quad

    quadrature = QuadratureConfig(
        rel_tol=rel_tol,
        abs_tol=quad_sec.getfloat("abs_tol", DEFAULT_QUADRATURE.abs_tol),
        max_subdivisions=quad_sec.getint("max_subdivisions", DEFAULT_QUADRATURE.max_subdivisions),
    )
    solver = SolverConfig(
        max_iters=solver_sec.getint("max_iters", DEFAULT_SOLVER.max_iters),
        grad_tol=solver_sec.getfloat("grad_tol", DEFAULT_SOLVER.grad_tol),
        step_init=solver_sec.getfloat("step_init", DEFAULT_SOLVER.step_init),
        simplex_floor=solver_sec.getfloat("simplex_floor", DEFAULT_SOLVER.simplex_floor),
    )
    return RunConfig(
        problem_id=problem_id,
        strategies=tuple(s.strip() for s in strategies.split(",") if s.strip()),
        cost_profile=_parse_costs(costs),
        n_samples=n_samples,
        runs=runs,
        seed=RngSeed(seed),
        output_format=output_format,
        quadrature=quadrature,
        solver=solver,
        workers=workers,
    )


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="Path to config file")
    common.add_argument("--problem", type=int, help="Example problem 1..5")
    common.add_argument("--strategy", help="Comma-separated alpha strategies")
    common.add_argument("--costs", help="published, unit or c1,c2,...")
    common.add_argument("--n", type=int, help="Sample budget N")
    common.add_argument("--runs", type=int, help="Replications for empirical variance")
    common.add_argument("--seed", type=int, help="64-bit seed")
    common.add_argument("--format", choices=FORMATS, help="Output format")
    common.add_argument("--tol-quad", type=float, help="Quadrature relative tolerance")
    common.add_argument("--workers", type=int, help="Concurrent rows or replications")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Balance-heuristic MIS benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", parents=[common], help="Variance bounds table")
    sub.add_parser("efficiency", parents=[common], help="Inverse efficiency of F and optimal G")
    estimate = sub.add_parser("estimate", parents=[common], help="Single estimate with empirical variance")
    estimate.add_argument("--alpha", help="a1,a2,...")
    estimate.add_argument("--beta", help="b1,b2,...")
    optimize = sub.add_parser("optimize", parents=[common], help="Solve for optimal alpha")
    optimize.add_argument("--case", choices=OBJECTIVES, default="case1", help="Objective")
    optimize.add_argument("--beta", help="b1,b2,... (case3)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr)

    try:
        cfg = load_run_config(args)
        if args.command == "bounds":
            rows = cmd_bounds(cfg)
        elif args.command == "efficiency":
            rows = cmd_efficiency(cfg)
        elif args.command == "estimate":
            alpha = _parse_floats(args.alpha) if args.alpha else None
            beta = _parse_floats(args.beta) if args.beta else None
            rows = cmd_estimate(cfg, alpha, beta).rows("G" if beta else "F")
        else:
            beta = _parse_floats(args.beta) if args.beta else None
            rows = cmd_optimize(cfg, args.case, beta).rows(args.case)
        sys.stdout.write(format_table(rows, cfg.output_format))
    except DidNotConverge as e:
        logger.error(f"{e}; best alpha={e.result.alpha.coeffs}, residual={e.result.residual.norm:.3g}")
        return e.exit_code
    except MisError as e:
        logger.error(str(e))
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
