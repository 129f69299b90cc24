"""Command-line front end.

Subcommands map onto the bench and validation layers: ``sweep`` and
``divert`` run solve campaigns, ``validate`` and ``lte`` replay a saved
trajectory, ``tableau`` prints coefficient-level facts. Every run writes
its reports into a fresh timestamped directory together with the effective
config, so any run can be reproduced by pointing --config at that file.
"""

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import bench
from .config import default_config, dump_config, load_config
from .dynamics import RocketParams, rocket_ode
from .errors import ConfigError, ShootbenchError
from .integrators import get_method, method_names
from .tableau import empirical_order, get_tableau, is_symplectic
from .transcription import ObjectiveSpec
from .validation import isolate_lte, reference_replay, validate_solution

OBJECTIVE_BY_FLAG = {
    "min-fuel": "min_fuel",
    "max-fuel": "max_fuel",
    "adversarial": "adversarial_lr",
}


# -- plumbing ---------------------------------------------------------------


def make_run_dir(root, command):
    """Fresh timestamped directory; suffixed if the stamp collides."""
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"{command}-{stamp}"
    path, n = base, 1
    while True:
        try:
            path.mkdir(parents=True, exist_ok=False)
            return path
        except FileExistsError:
            n += 1
            path = base.with_name(f"{base.name}-{n}")


def effective_config(args):
    """Config file + solver flag overrides folded into one document."""
    solver = {}
    if args.feas_tol is not None:
        solver["feas_tol"] = args.feas_tol
    if args.opt_tol is not None:
        solver["opt_tol"] = args.opt_tol
    if args.max_iter is not None:
        solver["max_iter"] = args.max_iter
    overrides = {"solver": solver} if solver else None
    return load_config(args.config, overrides)


def parse_methods(text, fallback=None):
    if text is None:
        return list(fallback) if fallback is not None else method_names()
    if text.strip().lower() == "all":
        return method_names()
    names = [tok.strip().lower() for tok in text.split(",") if tok.strip()]
    if not names:
        raise ValueError("empty method list")
    for name in names:
        get_method(name)  # raises KeyError with the known-names hint
    return names


def parse_distances(text):
    if text is None:
        return None
    vals = [float(tok) for tok in text.split(",") if tok.strip()]
    if not vals:
        raise ValueError("empty distance list")
    return vals


def format_row(row):
    head = row.get("method", "?")
    if "distance" in row:
        head += f" d={row['distance']:g}"
    if row.get("objective"):
        head = f"{row['objective']} {head}"
    if row.get("error"):
        return f"{head}: error  {row['error']}"
    parts = [f"{head}: {row.get('status', '?')}"]
    for key, fmt in (("objective_value", "obj={:.6f}"),
                     ("violation", "viol={:.1e}"),
                     ("kkt", "kkt={:.1e}"),
                     ("iterations", "iter={}"),
                     ("s", "s={:.4f}"),
                     ("eps_ol", "eps_ol={:.1e}")):
        if row.get(key) is not None:
            parts.append(fmt.format(row[key]))
    for key, label in (("ol_pass", "ol"), ("ref_ol_pass", "ref_ol")):
        if row.get(key) is not None:
            parts.append(f"{label}={'pass' if row[key] else 'FAIL'}")
    if row.get("total_time") is not None:
        parts.append(f"[{row['total_time']:.1f}s]")
    return "  ".join(parts)


def emit_traces(rows, config, run_dir, suffix):
    """Per-cell replay trace files for every saved solution; returns the
    number of cells whose trace generation errored."""
    failures = 0
    for row in rows:
        name = row["method"]
        tag = (f"{name}-divert-{row['distance']:g}" if "distance" in row
               else f"{name}-{suffix}")
        sol_path = run_dir / "solutions" / f"{tag}.json"
        if not sol_path.exists():
            continue
        try:
            report = validate_solution(bench.read_solution(sol_path), config)
            report.save(run_dir / "traces" / tag)
        except ShootbenchError as exc:
            print(f"trace {tag}: {type(exc).__name__}: {exc}",
                  file=sys.stderr)
            failures += 1
    return failures


def _schema_hint():
    lines = ["expected config sections and keys:"]
    for section, body in sorted(default_config().items()):
        if isinstance(body, dict):
            lines.append(f"  {section}: {', '.join(sorted(body))}")
        else:
            lines.append(f"  {section}")
    return "\n".join(lines)


# -- subcommands --------------------------------------------------------------


def cmd_sweep(args):
    config = effective_config(args)
    kind = OBJECTIVE_BY_FLAG[args.objective]
    if kind == "adversarial_lr":
        objective = ObjectiveSpec(kind, p=int(config["adversarial"]["p"]),
                                  r=float(config["adversarial"]["r"]))
    else:
        objective = ObjectiveSpec(kind)
    methods = parse_methods(args.methods)

    run_dir = make_run_dir(args.output_dir, "sweep")
    dump_config(config, run_dir / "config.yaml")
    rows = bench.run_integrator_sweep(
        objective, methods, config=config, jobs=args.jobs,
        solutions_dir=run_dir / "solutions")
    bench.write_rows_csv(rows, run_dir / "sweep.csv")
    bench.write_rows_json(rows, run_dir / "sweep.json")
    for row in rows:
        print(format_row(row))
    errored = sum(1 for r in rows if r.get("error"))
    errored += emit_traces(rows, config, run_dir, kind)
    print(f"reports: {run_dir}")
    return 1 if errored else 0


def cmd_divert(args):
    config = effective_config(args)
    methods = parse_methods(args.methods, fallback=["rk5", "gl2"])
    distances = parse_distances(args.distances)

    run_dir = make_run_dir(args.output_dir, "divert")
    dump_config(config, run_dir / "config.yaml")
    rows = bench.run_divert_sweep(
        methods, distances=distances, config=config, jobs=args.jobs,
        solutions_dir=run_dir / "solutions")
    bench.write_rows_csv(rows, run_dir / "divert.csv")
    bench.write_rows_json(rows, run_dir / "divert.json")
    for row in rows:
        print(format_row(row))
    errored = sum(1 for r in rows if r.get("error"))
    errored += emit_traces(rows, config, run_dir, "feasibility")
    print(f"reports: {run_dir}")
    return 1 if errored else 0


def cmd_validate(args):
    config = effective_config(args)
    solution = bench.read_solution(args.solution)
    if args.method:
        get_method(args.method)
        solution.method = args.method.lower()

    run_dir = make_run_dir(args.output_dir, "validate")
    dump_config(config, run_dir / "config.yaml")
    report = validate_solution(solution, config)
    report.save(run_dir)
    print(f"{report.method}: eps_ol={report.eps_ol:.3e} "
          f"ol={'pass' if report.ol_pass else 'FAIL'} "
          f"max_map_drift={max(report.map_drift_trace):.3e} "
          f"stiffness={report.stiffness_ratio:.3f}")
    print(f"reports: {run_dir}")
    return 0


def cmd_lte(args):
    config = effective_config(args)
    method = get_method(args.method)
    solution = bench.read_solution(args.trajectory)
    ode = rocket_ode(RocketParams.from_config(config))
    U = np.atleast_2d(np.asarray(solution.U, dtype=float))
    h = 1.0 / U.shape[0]
    newton_tol = float(config["solver"]["newton_tol"])
    newton_cap = int(config["solver"]["newton_cap"])

    run_dir = make_run_dir(args.output_dir, "lte")
    dump_config(config, run_dir / "config.yaml")
    X_ref = reference_replay(ode, solution.X[0], U, solution.s, h=h,
                             ref_tol=float(config["validation"]["ref_tol"]))
    trace = isolate_lte(method, ode, (X_ref, U, solution.s), h=h,
                        newton_tol=newton_tol, newton_cap=newton_cap)
    delta, estimate = trace["delta"], trace["estimate"]

    with open(run_dir / "lte.csv", "w") as fh:
        fh.write("step,tau,lte,lte_h5_estimate\n")
        for k, d in enumerate(delta):
            est = "" if estimate is None else f"{estimate[k]:.17g}"
            fh.write(f"{k},{(k + 1) * h:.17g},{d:.17g},{est}\n")
    payload = {
        "method": method.name,
        "h": h,
        "s": float(solution.s),
        "lte": [float(v) for v in delta],
        "lte_h5_estimate": (None if estimate is None
                            else [float(v) for v in estimate]),
    }
    (run_dir / "lte.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"{method.name}: steps={len(delta)} max_lte={max(delta):.3e} "
          f"median_lte={float(np.median(delta)):.3e}")
    print(f"reports: {run_dir}")
    return 0


def cmd_tableau(args):
    tab = get_tableau(args.check)
    print(f"symplectic: {'true' if is_symplectic(tab) else 'false'}")
    print(f"order verified: {empirical_order(tab)}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", default=None,
                        help="YAML config merged over built-in defaults")
    common.add_argument("--output-dir", metavar="DIR", default="runs",
                        help="parent for the per-invocation report directory")
    common.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="parallel solve workers (default 1)")
    common.add_argument("--feas-tol", type=float, default=None,
                        help="override solver.feas_tol")
    common.add_argument("--opt-tol", type=float, default=None,
                        help="override solver.opt_tol")
    common.add_argument("--max-iter", type=int, default=None,
                        help="override solver.max_iter")
    common.add_argument("--seedless", action="store_true",
                        help="reserved; nothing in the pipeline is randomized")

    parser = argparse.ArgumentParser(
        prog="shootbench",
        description="Multiple-shooting rocket landing benchmark across "
                    "fourteen integrators.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common],
                       help="solve one objective across a method list")
    p.add_argument("--objective", required=True,
                   choices=sorted(OBJECTIVE_BY_FLAG))
    p.add_argument("--methods", default=None, metavar="A,B,...",
                   help="comma-separated method names (default: all 14)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("divert", parents=[common],
                       help="feasibility solves over lateral divert distances")
    p.add_argument("--methods", default=None, metavar="A,B,...",
                   help="comma-separated method names (default: rk5,gl2)")
    p.add_argument("--distances", default=None, metavar="D1,D2,...",
                   help="ascending positive distances (default from config)")
    p.set_defaults(func=cmd_divert)

    p = sub.add_parser("validate", parents=[common],
                       help="replay a saved solution and report drift/LTE")
    p.add_argument("--solution", required=True, metavar="FILE")
    p.add_argument("--method", default=None,
                   help="override the method recorded in the file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("lte", parents=[common],
                       help="per-step truncation error along a trajectory")
    p.add_argument("--method", required=True)
    p.add_argument("--trajectory", required=True, metavar="FILE",
                   help="solution file providing the reference path")
    p.set_defaults(func=cmd_lte)

    p = sub.add_parser("tableau", parents=[common],
                       help="coefficient-level checks for one method")
    p.add_argument("--check", required=True, metavar="NAME")
    p.set_defaults(func=cmd_tableau)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(_schema_hint(), file=sys.stderr)
        return 2
    except (KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ShootbenchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
