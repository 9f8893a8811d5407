"""
visolve command line.

    python3 main.py run    --config fixtures/scalar_box.json --out trace.csv
    python3 main.py verify --config fixtures/diag_rotation.json --samples 10000
    python3 main.py sweep  --config fixtures/diag_rotation.json --param lambda3 --values 0.1,0.2,0.3

Exit codes: 0 success, 1 config/validation error, 2 max_iter reached,
3 verification failure.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from visolve.config import (
    SWEEP_PARAMETERS,
    ConfigError,
    apply_override,
    config_from_dict,
    load_config,
)
from visolve.operators import (
    VerifierReport,
    check_cocoercive,
    check_declared_constants,
    check_expansive,
    check_forward_step,
    check_monotone_gap,
    check_lipschitz,
    check_map_lipschitz,
    check_maps_into,
    failed_report,
)
from visolve.oracle import (
    ORACLE_TOL,
    ContractionError,
    check_G_contraction,
    fixed_point_G,
    remark_bound_check,
    singleton_check,
    stage_triple,
    vi_residual,
    viscosity_vi_check,
    viscosity_vi_value,
)
from visolve.output import write_report_json, write_sweep_csv, write_trace_csv
from visolve.solver import G_map, ValidationError, contraction_factor, solve, validate
from visolve.space import norm

logger = logging.getLogger("visolve")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_ITER = 2
EXIT_VERIFY = 3

DEFAULT_SAMPLES = 10_000
VI_RESIDUAL_TOL = 1e-9
VISCOSITY_VI_TOL = 1e-6


def load_env_file(path):
    """KEY=VALUE lines into os.environ; variables already set win."""
    if not os.path.exists(path):
        return
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#") and "=" in line:
                key, value = line.split("=", 1)
                os.environ.setdefault(key.strip(), value.strip())


def print_violations(violations):
    print("[ERROR] Problem does not satisfy the convergence hypotheses:")
    for v in violations:
        print(f"  - {v}")


def cmd_run(config, out=None):
    spec = config.problem
    result = validate(spec, seed=config.seed)
    if not result.ok:
        print_violations(result.violations)
        return EXIT_CONFIG
    try:
        p = fixed_point_G(spec)
    except ContractionError as e:
        print(f"[ERROR] {e}")
        return EXIT_CONFIG

    trace = solve(spec, config.x1, config.tol, config.max_iter, reference_p=p, check=False)
    out = Path(out or config.output_path or "trace.csv")
    write_trace_csv(trace, spec.dim, out)

    last = trace.iterations[-1]
    print(f"Terminated by {trace.terminated_by} after {len(trace)} iterations")
    print(f"  final x     = {trace.final.tolist()}")
    print(f"  oracle p    = {p.tolist()}")
    print(f"  |x_N - p|   = {last.dist_to_p:.3e}")
    print(f"  trace       -> {out}")
    return EXIT_OK if trace.terminated_by == "tolerance" else EXIT_MAX_ITER


def _threshold_report(name, value, threshold):
    """Scalar check value <= threshold."""
    margin = threshold - value
    return VerifierReport(name, 1, margin, margin >= 0, tolerance=0.0)


def cmd_verify(config, n_samples=DEFAULT_SAMPLES, out=None):
    if n_samples < 1:
        print(f"[ERROR] --samples must be at least 1, got {n_samples}")
        return EXIT_CONFIG
    spec = config.problem
    result = validate(spec, seed=config.seed)
    # declared-constant violations surface as failed checks with witnesses
    declared = [v for v in result.violations if v.hypothesis.startswith("declared constants")]
    others = [v for v in result.violations if v not in declared]
    if others:
        print_violations(others)
        return EXIT_CONFIG
    for v in declared:
        print(f"[WARNING] {v}")

    seed = config.seed
    C = spec.C
    reports = {}
    for A, lam in zip(spec.operators, spec.lambdas):
        if A.kind == "affine":
            reports[f"{A.name}.declared_constants"] = check_declared_constants(A)
        for report in (
            check_cocoercive(A, n_samples, seed, C),
            check_lipschitz(A, n_samples, seed, C),
            check_expansive(A, n_samples, seed, C),
            check_forward_step(A, lam, spec.space.K, n_samples, seed, C),
            check_monotone_gap(A, n_samples, seed, C),
        ):
            reports[report.name] = report
    reports["f.contraction"] = check_map_lipschitz(spec.f, spec.f.alpha, spec.dim, n_samples, seed, C, "f.contraction")
    reports["f.maps_into_C"] = check_maps_into(spec.f, C, n_samples, seed, "f.maps_into_C")
    reports["S.nonexpansive"] = check_map_lipschitz(spec.S, 1.0, spec.dim, n_samples, seed, C, "S.nonexpansive")
    reports["S.maps_into_C"] = check_maps_into(spec.S, C, n_samples, seed, "S.maps_into_C")
    reports["G.contraction"] = check_G_contraction(spec, n_samples, seed)

    dependent = ("oracle.fixed_point", "oracle.singleton", "oracle.vi_residual", "remark_bound", "viscosity_vi")
    try:
        p = fixed_point_G(spec)
        reports["oracle.fixed_point"] = _threshold_report("oracle.fixed_point", norm(G_map(spec, p) - p), ORACLE_TOL)
        reports["oracle.singleton"] = singleton_check(spec, seed=seed)
        reports["oracle.vi_residual"] = _threshold_report(
            "oracle.vi_residual", vi_residual(spec, *stage_triple(spec, p)), VI_RESIDUAL_TOL
        )
        trace = solve(spec, config.x1, config.tol, config.max_iter, reference_p=p, check=False)
        reports["remark_bound"] = remark_bound_check(trace, spec, p)
        q = trace.final
        vi = _threshold_report("viscosity_vi", viscosity_vi_value(q, p, spec.f), VISCOSITY_VI_TOL)
        vi.passed = viscosity_vi_check(q, p, spec.f, VISCOSITY_VI_TOL)
        reports["viscosity_vi"] = vi
    except ContractionError as e:
        for name in dependent:
            reports.setdefault(name, failed_report(name, str(e)))

    out = Path(out or config.output_path or "report.json")
    write_report_json(reports, out)

    width = max(len(name) for name in reports)
    for name, report in reports.items():
        status = "PASS" if report.passed else "FAIL"
        print(f"  {name:<{width}}  {status}  worst margin {report.worst_margin:.3e}")
        if report.witness is not None:
            print(f"  {'':<{width}}        witness x={report.witness[0]} y={report.witness[1]}")
    failed = [name for name, report in reports.items() if not report.passed]
    if failed:
        print(f"[ERROR] {len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"All {len(reports)} checks passed.")
    return EXIT_OK


def parse_values(text):
    values = [v.strip() for v in text.split(",") if v.strip()]
    return [float(Fraction(v)) for v in values]


def _shift_values(values):
    shifts = [int(v) for v in values if v == int(v)]
    if len(shifts) != len(values):
        return None
    return shifts


def _sweep_row(config, parameter, value):
    try:
        sub = config_from_dict(apply_override(config.raw, parameter, value), config.source)
    except (ConfigError, ValidationError) as e:
        logger.info("%s = %g skipped: %s", parameter, value, e)
        return (value, "skipped", None, None)
    spec = sub.problem
    result = validate(spec, seed=config.seed)
    if not result.ok:
        logger.info("%s = %g skipped: %s", parameter, value, "; ".join(str(v) for v in result.violations))
        return (value, "skipped", None, None)
    try:
        p = fixed_point_G(spec)
    except ContractionError as e:
        logger.info("%s = %g skipped: %s", parameter, value, e)
        return (value, "skipped", None, None)
    trace = solve(spec, sub.x1, sub.tol, sub.max_iter, reference_p=p, check=False)
    iterations = len(trace) if trace.terminated_by == "tolerance" else "max_iter"
    return (value, iterations, norm(trace.final - p), contraction_factor(spec))


def cmd_sweep(config, parameter, values, out=None, jobs=1):
    if parameter not in SWEEP_PARAMETERS:
        print(f"[ERROR] --param must be one of {', '.join(SWEEP_PARAMETERS)}, got {parameter!r}")
        return EXIT_CONFIG
    if not values:
        print("[ERROR] --values needs at least one value")
        return EXIT_CONFIG
    if parameter == "schedule_shift":
        shifts = _shift_values(values)
        if shifts is None:
            print(f"[ERROR] schedule_shift values must be integers, got {', '.join(f'{v:g}' for v in values)}")
            return EXIT_CONFIG
        values = shifts

    # rows come back in input order whatever order the workers finish in
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        rows = list(pool.map(lambda v: _sweep_row(config, parameter, v), values))

    out = Path(out or config.output_path or "sweep.csv")
    write_sweep_csv(rows, out)
    for value, iterations, dist, r in rows:
        detail = "" if dist is None else f"  |x_N - p| = {dist:.3e}  r = {r:.4f}"
        print(f"  {parameter} = {value:g}: {iterations}{detail}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse's own exit status 2 would collide with the max_iter code
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="visolve", description="Projected viscosity iteration for systems of variational inequalities")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="JSON problem configuration")
        p.add_argument("--out", help="Output file (overrides the config's output)")
        p.add_argument("--seed", type=int, help="Sampling seed (overrides the config's seed)")
        p.add_argument("--verbose", action="store_true", help="Debug logging")

    common(sub.add_parser("run", help="Solve and write the iteration trace as CSV"))
    verify = sub.add_parser("verify", help="Check operator certificates and convergence claims")
    common(verify)
    verify.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help=f"Sample pairs per check (default: {DEFAULT_SAMPLES})")
    sweep = sub.add_parser("sweep", help="Re-solve for a list of parameter values")
    common(sweep)
    sweep.add_argument("--param", required=True, help=f"One of: {', '.join(SWEEP_PARAMETERS)}")
    sweep.add_argument("--values", required=True, help="Comma-separated values, e.g. 0.1,0.2,0.3")
    sweep.add_argument("--jobs", type=int, default=1, help="Worker threads (default: 1)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(levelname)s] %(message)s",
    )
    load_env_file(os.path.join(os.path.dirname(os.path.abspath(__file__)), ".env"))

    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(f"[ERROR] {e}")
        return EXIT_CONFIG
    except ValidationError as e:
        print_violations(e.violations)
        return EXIT_CONFIG
    if args.seed is not None:
        config.seed = args.seed

    if args.command == "run":
        return cmd_run(config, args.out)
    if args.command == "verify":
        return cmd_verify(config, args.samples, args.out)
    try:
        values = parse_values(args.values)
    except (ValueError, ZeroDivisionError, OverflowError):
        print(f"[ERROR] cannot parse --values {args.values!r}")
        return EXIT_CONFIG
    return cmd_sweep(config, args.param, values, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
