#!/usr/bin/env python3
"""
lcentropy command-line runner.

Each subcommand validates its parameters (config file, --set overrides and generated
flags), runs one experiment and writes CSV/JSON artifacts with metadata sidecars.
Exit status: 0 when every check passed, 1 when a check failed, 2 on usage errors.
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import structlog

from lcentropy.config import (
    COMMANDS,
    BernoulliParams,
    CommandParams,
    ConfigError,
    CorrsumParams,
    DimensionParams,
    EntropyParams,
    GraphsParams,
    GrillenbergerParams,
    Settings,
    SystemParams,
    TheoremAParams,
    TheoremBParams,
    TheoremCParams,
    VerifyParams,
    build_params,
    load_settings,
    parse_assignments,
    read_config_file,
)
from lcentropy.core import EpsilonGrid, TrajectoryBuffer
from lcentropy.correlation import correlation_table, iterate_scaling_check, local_correlation_dimension, local_correlation_entropy
from lcentropy.graphs import verify_graphs
from lcentropy.grillenberger import (
    GrillenbergerStream,
    entropy_lower_bounds,
    lambda_sequence,
    level_table_rows,
    minimality_witness,
    theorem_c_report,
    verify_level_props,
    x_prefix,
)
from lcentropy.interval_maps import IntervalMapSpec, countable_piece_map, map_trajectory, random_rational_point, theorem_b_report
from lcentropy.reports import ArtifactWriter, orbit_rows
from lcentropy.symbolic import BernoulliSpec, bernoulli_correlation_entropy, bernoulli_sample, symbolic_trajectory
from lcentropy.verification import run_invariant_suite

logger = structlog.get_logger(__name__)


def configure_logging(level: str = "INFO") -> None:
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    # stdout carries results only
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(message)s", stream=sys.stderr)


def system_trajectory(params: SystemParams, length: int) -> TrajectoryBuffer:
    """Orbit of length ``length`` of sigma^step or f^step for the configured system."""
    if params.system in ("bernoulli", "grillenberger"):
        needed = params.step * (length - 1) + params.horizon + 1
        if params.system == "bernoulli":
            spec = BernoulliSpec(pi=params.pi, seed=params.seed)
            codes = bernoulli_sample(spec, needed)
        else:
            codes = GrillenbergerStream.build(params.p).symbols(needed)
        return symbolic_trajectory(codes, length, horizon=params.horizon, step=params.step, label=params.system)

    if params.system == "countable_piece":
        spec = countable_piece_map(params.lambda_target, params.piece_count)
    else:
        spec = IntervalMapSpec(kind=params.system, alpha=params.alpha)
    x0 = params.x0
    if x0 is None:
        if params.seed is None:
            x0 = Fraction(1, 2)
        else:
            x0 = random_rational_point(np.random.default_rng(params.seed), spec.domain)
    orbit = map_trajectory(spec, x0, params.step * (length - 1) + 1, label=params.system)
    return orbit.subsample(params.step) if params.step > 1 else orbit


def run_corrsum(params: CorrsumParams, settings: Settings, out: ArtifactWriter) -> bool:
    traj = system_trajectory(params, max(params.n) + max(params.m) - 1)
    table = correlation_table(traj, params.eps, params.m, params.n, method=params.method, workers=settings.workers)
    out.csv("corrsum.csv", ["eps", "m", "n", "count", "value"], table.rows())
    if params.dump_orbit:
        out.csv("orbit.csv", ["index", "value"], orbit_rows(traj))
    return True


def run_entropy(params: EntropyParams, settings: Settings, out: ArtifactWriter) -> bool:
    traj = system_trajectory(params, params.n + max(params.m) - 1)
    grid = EpsilonGrid.dyadic(params.eps_k_min, params.eps_k_max, params.eps_scale)
    upper, lower = local_correlation_entropy(
        traj,
        grid,
        params.m,
        params.n,
        tolerance=params.tolerance,
        tail_fraction=params.tail_fraction,
        min_recurrences=params.min_recurrences,
        method=params.method,
        workers=settings.workers,
    )
    rows = [("upper", eps, slope) for eps, slope in upper.per_eps_slopes]
    rows += [("lower", eps, slope) for eps, slope in lower.per_eps_slopes]
    out.csv("entropy.csv", ["bound", "eps", "slope"], rows)
    out.json("entropy.json", {"upper": upper, "lower": lower})
    print(f"local correlation entropy: upper {upper.value:.6f} lower {lower.value:.6f}")
    return True


def run_dimension(params: DimensionParams, settings: Settings, out: ArtifactWriter) -> bool:
    traj = system_trajectory(params, params.n)
    grid = EpsilonGrid(tuple(sorted(set(params.eps), reverse=True)))
    upper, lower = local_correlation_dimension(traj, grid, params.n, tail_fraction=params.tail_fraction, method=params.method)
    out.csv("dimension.csv", ["bound", "value"], [("upper", upper), ("lower", lower)])
    print(f"local correlation dimension: upper {upper:.6f} lower {lower:.6f}")
    return True


def run_theorem_a(params: TheoremAParams, settings: Settings, out: ArtifactWriter) -> bool:
    states = max(params.k) * (params.n + max(params.m))
    spec = BernoulliSpec(pi=params.pi, seed=params.seed)
    traj = symbolic_trajectory(bernoulli_sample(spec, states + params.horizon), states, horizon=params.horizon)
    grid = EpsilonGrid.dyadic(params.eps_k_min, params.eps_k_max)
    rows = []
    passed = True
    for k in params.k:
        report = iterate_scaling_check(traj, k, grid, params.m, params.n, workers=settings.workers)
        ok = report.ratio is not None and 0.9 * k <= report.ratio <= 1.1 * k
        if not ok:
            logger.error("Iterate scaling outside [0.9k, 1.1k]", k=k, ratio=report.ratio, flag=report.flag)
        passed &= ok
        rows.append((report.h_f, report.h_fk, k, report.ratio, ok))
    out.csv("theorem-a.csv", ["h_f", "h_fk", "k", "ratio", "passed"], rows)
    return passed


def run_theorem_b(params: TheoremBParams, settings: Settings, out: ArtifactWriter) -> bool:
    report = theorem_b_report(
        params.seed,
        samples=params.samples,
        n=params.n,
        m_list=params.m,
        grid_size=params.grid_size,
        lambda_target=params.lambda_target,
        piece_counts=params.piece_counts,
        countable_samples=params.countable_samples,
        workers=settings.workers,
    )
    out.json("theorem-b.json", report)
    out.checks("theorem-b-checks.csv", report.checks)
    return report.passed


def run_theorem_c(params: TheoremCParams, settings: Settings, out: ArtifactWriter) -> bool:
    report = theorem_c_report(
        p=params.p,
        n_list=params.n_list,
        prefix_length=params.prefix_length,
        m_list=params.m,
        large_m_list=params.large_m,
        grid=EpsilonGrid.dyadic(params.eps_k_min, params.eps_k_max),
        control_seed=params.control_seed,
        entropy_ceiling=params.entropy_ceiling,
        slack=params.slack,
        workers=settings.workers,
    )
    out.json("theorem-c.json", report)
    out.checks("theorem-c-checks.csv", report.checks)
    print(f"local correlation entropy {report.entropy:.6f}, topological entropy >= {max(v for _, v in report.entropy_bounds):.6f}")
    if report.large_m_entropy is not None:
        print(f"large-m estimate {report.large_m_entropy:.6f}, random periodic control {report.large_m_control}")
    return report.passed


def run_grillenberger(params: GrillenbergerParams, settings: Settings, out: ArtifactWriter) -> bool:
    stream = GrillenbergerStream.build(
        params.p,
        explicit_cap=params.explicit_cap,
        factorial_cap=params.factorial_cap,
        j_max=params.j_max,
        allow_p2=params.allow_p2,
    )
    if params.action == "levels":
        rows = level_table_rows(stream.levels)
        out.csv("grillenberger-levels.csv", ["j", "l", "m", "r", "lambda"], rows)
        for row in rows:
            print(",".join(row))
        return True
    if params.action == "dump":
        if stream.p > 10:
            raise ValueError("prefix dumps are digit strings and need p <= 10")
        out.text("grillenberger-prefix.txt", str(x_prefix(stream, params.length)))
        return True

    checks = verify_level_props(stream.levels)
    if stream.p >= 3:
        checks.append(minimality_witness(stream))
    out.checks("grillenberger-checks.csv", checks)
    out.json(
        "grillenberger-report.json",
        {
            "p": stream.p,
            "truncated": stream.truncated,
            "periodic_justification": stream.periodic_justification(),
            "lambda": lambda_sequence(
                stream.p,
                len(stream.levels),
                explicit_cap=params.explicit_cap,
                factorial_cap=params.factorial_cap,
                allow_p2=params.allow_p2,
            ),
            "entropy_lower_bounds": entropy_lower_bounds(stream.levels) if stream.p >= 3 else [],
            "checks": checks,
        },
    )
    return all(check.passed for check in checks)


def run_graphs(params: GraphsParams, settings: Settings, out: ArtifactWriter) -> bool:
    results = verify_graphs(params.max_n, params.max_k, workers=settings.workers)
    rows = [
        (r.name, r.values["n"], r.values["k"], r.values["formula"], r.values["bruteforce"], r.values["ceiling"], r.passed)
        for r in results
    ]
    out.csv("graphs.csv", ["sizes", "n", "k", "formula", "bruteforce", "ceiling", "passed"], rows)
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} partitions pass")
    return failed == 0


def run_bernoulli(params: BernoulliParams, settings: Settings, out: ArtifactWriter) -> bool:
    spec = BernoulliSpec(pi=params.pi, seed=params.seed or 0)
    closed = bernoulli_correlation_entropy(spec)
    if params.closed_form:
        print(format(closed, ".12f"))
        return True
    states = params.n + max(params.m) - 1
    traj = symbolic_trajectory(bernoulli_sample(spec, states + params.horizon), states, horizon=params.horizon)
    grid = EpsilonGrid.dyadic(params.eps_k_min, params.eps_k_max)
    upper, lower = local_correlation_entropy(traj, grid, params.m, params.n, workers=settings.workers)
    error = abs(upper.value - closed) / closed if closed > 0 else abs(upper.value)
    passed = error <= 0.1
    out.csv(
        "bernoulli.csv",
        ["closed_form", "upper", "lower", "relative_error", "passed"],
        [(closed, upper.value, lower.value, error, passed)],
    )
    print(f"closed form {closed:.6f}, estimate {upper.value:.6f} (relative error {error:.2%})")
    return passed


def run_verify(params: VerifyParams, settings: Settings, out: ArtifactWriter) -> bool:
    results = run_invariant_suite(params.cases, params.seed)
    results += verify_graphs(params.graphs_max_n, workers=settings.workers)
    out.checks("verify.csv", results)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks pass")
    return not failed


RUNNERS: Dict[str, Callable[[CommandParams, Settings, ArtifactWriter], bool]] = {
    "corrsum": run_corrsum,
    "entropy": run_entropy,
    "dimension": run_dimension,
    "theorem-a": run_theorem_a,
    "theorem-b": run_theorem_b,
    "theorem-c": run_theorem_c,
    "grillenberger": run_grillenberger,
    "graphs": run_graphs,
    "bernoulli": run_bernoulli,
    "verify": run_verify,
}

ACTIONS = {"grillenberger": ("levels", "dump", "report"), "graphs": ("verify",)}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value experiment file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")

    parser = argparse.ArgumentParser(prog="lcentropy", description="Local correlation entropy experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, model in COMMANDS.items():
        sub = commands.add_parser(name, parents=[common], allow_abbrev=False, help=(model.__doc__ or "").strip() or None)
        if name in ACTIONS:
            sub.add_argument("action_positional", nargs="?", choices=ACTIONS[name], metavar="{" + ",".join(ACTIONS[name]) + "}")
            for action in ACTIONS[name]:
                sub.add_argument(f"--{action}", dest="action_flag", action="store_const", const=action)
        for field_name, field in model.model_fields.items():
            if field_name == "action":
                continue
            flag = "--" + field_name.replace("_", "-")
            default = field.get_default(call_default_factory=True)
            if field.annotation is bool:
                sub.add_argument(flag, dest=field_name, action="store_const", const="true", default=None)
            else:
                sub.add_argument(flag, dest=field_name, default=None, help=f"default: {default}")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = parse_assignments(args.set)
    for field_name in COMMANDS[args.command].model_fields:
        value = getattr(args, field_name, None)
        if value is not None:
            overrides[field_name] = value
    action = getattr(args, "action_flag", None) or getattr(args, "action_positional", None)
    if action is not None:
        overrides["action"] = action
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    settings = load_settings()
    configure_logging(settings.log_level)
    args = build_parser().parse_args(argv)

    try:
        file_values, lines = read_config_file(args.config) if args.config else ({}, {})
        params = build_params(args.command, file_values, collect_overrides(args), lines)
        directory = Path(params.output) if params.output else Path(settings.output_dir) / args.command
        out = ArtifactWriter(directory, args.command, params)
        logger.info("Running command", command=args.command, seed=params.seed, output=str(directory))
        passed = RUNNERS[args.command](params, settings, out)
    except ConfigError as e:
        logger.error("Invalid configuration", command=args.command, error=str(e))
        print(f"lcentropy: configuration error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        logger.error("Run aborted", command=args.command, error=str(e))
        print(f"lcentropy: {e}", file=sys.stderr)
        return 2

    logger.info("Command finished", command=args.command, passed=passed, artifacts=[str(p) for p in out.written])
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
