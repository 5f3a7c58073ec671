"""Command line interface: ``cmdopt run|check-grad|list|sweep``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import CMDError, ConfigError
from .games import PROBLEM_IDS, check_first_order_oracles
from .harness import (
    DEFAULTS,
    OUTPUT_DIR_ENV,
    RunConfig,
    build_problem,
    initial_point,
    load_config,
    output_path,
    run_experiment,
    run_sweep,
)
from .solvers import METHODS, SolverConfig
from .trace import write_trace

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64
EXIT_CONFIG = 65

CONFIG_HELP = f"""\
config fields (JSON object; see docs/config_schema.md):
  problem           one of {', '.join(PROBLEM_IDS)} (required)
  method            one of {', '.join(METHODS)} (required)
  params            problem parameters, e.g. {{"alpha": 2.7}} or {{"rows": 50, "cols": 500, "seed": 42}}
  alpha, beta       inverse step sizes (default {DEFAULTS['alpha']:g}, {DEFAULTS['beta']:g}); or eta, giving alpha = beta = 1/eta
  potential         potential on positive blocks for CMD/PXM/MD (default {DEFAULTS['potential']})
  krylov_tol        relative Krylov tolerance (default {DEFAULTS['krylov_tol']:g})
  krylov_max_iter   Krylov iteration cap (default 10 x dimension)
  warm_start        reuse the previous Krylov solution (default {str(DEFAULTS['warm_start']).lower()})
  alternating       one Krylov solve per iteration, alternating players (default {str(DEFAULTS['alternating']).lower()})
  dual_coordinates  accumulate iterates in dual coordinates (default {str(DEFAULTS['dual_coordinates']).lower()})
  max_iters         iteration budget (default {DEFAULTS['max_iters']})
  stop_grad_norm    stop when the stacked gradient norm is at most this (default {DEFAULTS['stop_grad_norm']:g})
  stop_step_norm    stop when the step length is at most this (default {DEFAULTS['stop_step_norm']:g}, off)
  divergence_cap    iterate magnitude treated as divergence (default {DEFAULTS['divergence_cap']:g})
  initial           {{"x", "y", "mu", "nu"}}: number (constant fill) or list
  reference         {{"x", "y"}} for dist_ref, or false; builtin references are used otherwise
  output            trace path (default ${OUTPUT_DIR_ENV} or ./runs, file <config name>.csv)
  trace_stride      record every n-th iteration (default {DEFAULTS['trace_stride']})
  timing            record wall-clock seconds (default {str(DEFAULTS['timing']).lower()})
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parser():
    parser = _Parser(prog="cmdopt", description="Competitive mirror descent experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run one config and write its trace",
                         epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config")
    run.add_argument("--out", help="trace CSV path (overrides the config)")

    check = sub.add_parser("check-grad", help="finite-difference check of a problem's oracles")
    check.add_argument("problem")
    check.add_argument("--point", type=float, nargs="+",
                       help="full iterate (x, then y, multipliers included); default initial point if omitted")
    check.add_argument("--params", default="{}", help="problem parameters as JSON")
    check.add_argument("--tol", type=float, default=1e-5)

    sub.add_parser("list", help="print problem and method ids")

    sweep = sub.add_parser("sweep", help="run a config over a cartesian grid of field values")
    sweep.add_argument("config")
    sweep.add_argument("--grid", required=True, help='JSON object, e.g. {"alpha": [100, 1000]}')
    sweep.add_argument("--out-dir", help=f"directory for traces (default ${OUTPUT_DIR_ENV} or ./runs)")
    sweep.add_argument("--jobs", type=int, default=1)
    return parser


def _cmd_run(args):
    config = load_config(args.config)
    trace = run_experiment(config, keep_iterates=False)
    path = write_trace(trace, output_path(config, args.out))
    final = trace.final
    print(f"{config.name}: {trace.status} after {final.iter} iterations; "
          f"grad_norm={final.grad_norm:.6g} dist_ref={final.dist_ref:.6g} -> {path}")
    if trace.message:
        print(trace.message)
    return EXIT_DIVERGED if trace.status == "diverged" else EXIT_OK


def _cmd_check(args):
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params: {exc}") from None
    built = build_problem(args.problem, params)
    game = built.game
    if args.point is None:
        x, y = initial_point(RunConfig(args.problem, params, SolverConfig()), built)
    else:
        point = np.asarray(args.point, dtype=float)
        if point.size != game.dim_x + game.dim_y:
            raise ConfigError(f"--point needs {game.dim_x + game.dim_y} values, got {point.size}")
        x, y = point[: game.dim_x], point[game.dim_x:]
    report = check_first_order_oracles(game, x, y, tol=args.tol)
    print(report)
    return EXIT_OK if report.passed else EXIT_FAILED


def _cmd_list(args):
    print("problems: " + " ".join(PROBLEM_IDS))
    print("methods: " + " ".join(METHODS))
    return EXIT_OK


def _cmd_sweep(args):
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    results = run_sweep(args.config, args.grid, out_dir=args.out_dir, jobs=args.jobs)
    for name, path, status, iters in results:
        print(f"{name}: {status} after {iters} iterations -> {path}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "check-grad": _cmd_check, "list": _cmd_list, "sweep": _cmd_sweep}


def main(argv=None):
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"cmdopt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CMDError as exc:
        print(f"cmdopt: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"cmdopt: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
