"""JSON-configured experiments on the builtin problems.

A config names a problem, its parameters, a method and solver options; see
``docs/config_schema.md`` for the full schema.  :func:`load_config` validates
it, :func:`run_experiment` builds the problem (applying the Lagrangian
transform for constrained problems), runs the solver and returns the trace.
"""

from __future__ import annotations

import copy
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import CMDError, ConfigError, RunError
from .games import (
    MultiplierLayout,
    POSITIVE,
    PROBLEM_IDS,
    constrained_qp_solution,
    lagrangian_transform,
    make_bilinear_positive,
    make_constrained_qp,
    make_empty_threats,
    make_robust_regression,
)
from .potentials import POTENTIAL_KINDS
from .sampling import gaussian
from .solvers import METHODS, SolverConfig, run_solver
from .trace import RunTrace, write_trace

__all__ = [
    "BuiltProblem", "RunConfig", "build_problem", "load_config", "parse_config", "run_experiment",
    "expand_grid", "run_sweep", "output_path", "gaussian", "write_trace", "OUTPUT_DIR_ENV",
]

OUTPUT_DIR_ENV = "CMDOPT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "runs"

SOLVER_FIELDS = {
    "krylov_tol": float,
    "krylov_max_iter": int,
    "warm_start": bool,
    "alternating": bool,
    "dual_coordinates": bool,
    "max_iters": int,
    "stop_grad_norm": float,
    "stop_step_norm": float,
    "divergence_cap": float,
}
TOP_FIELDS = {
    "problem", "params", "method", "alpha", "beta", "eta", "potential", "initial", "reference",
    "output", "trace_stride", "timing", "name",
} | set(SOLVER_FIELDS)

DEFAULTS = {
    "alpha": 1.0,
    "beta": 1.0,
    "potential": "shannon",
    "krylov_tol": 1e-8,
    "krylov_max_iter": None,
    "warm_start": True,
    "alternating": False,
    "dual_coordinates": False,
    "max_iters": 1000,
    "stop_grad_norm": 0.0,
    "stop_step_norm": 0.0,
    "divergence_cap": 1e12,
    "trace_stride": 1,
    "timing": True,
}


# -- builtin problems -----------------------------------------------------------

@dataclass
class BuiltProblem:
    """A builtin problem ready for the solver.

    ``game`` is the (possibly augmented) game; ``x0, y0`` are default
    initial base points; ``report`` maps full iterates to the two recorded
    objective values and ``reference`` is a known solution in base
    coordinates, if any.
    """

    name: str
    game: object
    multipliers: Optional[MultiplierLayout]
    x0: np.ndarray
    y0: np.ndarray
    report: Callable
    reference: Optional[tuple] = None
    data: dict = field(default_factory=dict)

    @property
    def base_dims(self):
        if self.multipliers is None:
            return self.game.dim_x, self.game.dim_y
        return self.multipliers.base_dim_x, self.multipliers.base_dim_y


def _param(params, key, default, kind, problem):
    value = params.get(key, default)
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"params.{key} for {problem} must be {kind.__name__}, got {value!r}") from None


PROBLEM_PARAMS = {
    "bilinear_positive": {"alpha": 1.0},
    "empty_threats": {},
    "robust_regression": {"rows": 50, "cols": 500, "seed": 42},
    "constrained_qp": {"m": 10, "seed": 0},
}


def _plain_report(game):
    return lambda x, y: (game.eval_f(x, y), game.eval_g(x, y))


def build_problem(problem_id, params=None) -> BuiltProblem:
    """Construct a builtin problem by id with its default initial point."""
    params = dict(params or {})
    if problem_id not in PROBLEM_PARAMS:
        raise ConfigError(f"unknown problem {problem_id!r}; valid problems: {', '.join(PROBLEM_IDS)}")
    unknown = set(params) - set(PROBLEM_PARAMS[problem_id])
    if unknown:
        raise ConfigError(f"unknown params for {problem_id}: {', '.join(sorted(unknown))}")
    spec = {k: params.get(k, v) for k, v in PROBLEM_PARAMS[problem_id].items()}

    if problem_id == "bilinear_positive":
        alpha = _param(spec, "alpha", 1.0, float, problem_id)
        try:
            game = make_bilinear_positive(alpha)
        except CMDError as exc:
            raise ConfigError(f"params.alpha: {exc}") from None
        return BuiltProblem(problem_id, game, None, np.ones(1), np.ones(1), _plain_report(game),
                            (np.array([0.1]), np.array([0.1])), {"alpha": alpha})

    if problem_id == "empty_threats":
        game = make_empty_threats()
        return BuiltProblem(problem_id, game, None, np.ones(1), np.ones(1), _plain_report(game),
                            (np.array([0.0]), np.array([1.0])))

    if problem_id == "robust_regression":
        rows = _param(spec, "rows", 50, int, problem_id)
        cols = _param(spec, "cols", 500, int, problem_id)
        seed = _param(spec, "seed", 42, int, problem_id)
        if rows < 2 or cols < 2:
            raise ConfigError("params.rows and params.cols must be at least 2")
        problem, A, b = make_robust_regression(rows, cols, seed)
        game, ml = lagrangian_transform(problem)

        def report(X, Y):
            x, _ = ml.split_x(X)
            xh = x / np.sum(x)
            r = A @ xh - b
            return float(r @ r), game.eval_g(X, Y)

        return BuiltProblem(problem_id, game, ml, np.full(cols, 1.0 / cols), np.zeros(0), report,
                            None, {"A": A, "b": b})

    m = _param(spec, "m", 10, int, problem_id)
    seed = _param(spec, "seed", 0, int, problem_id)
    if m < 1:
        raise ConfigError("params.m must be at least 1")
    c = gaussian(seed, m)
    game, ml = lagrangian_transform(make_constrained_qp(c))
    return BuiltProblem(problem_id, game, ml, np.zeros(m), np.zeros(0), _plain_report(game),
                        (constrained_qp_solution(c), np.zeros(0)), {"c": c})


# -- configs ---------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    problem: str
    params: dict
    solver: SolverConfig
    potential: str = "shannon"
    initial: dict = field(default_factory=dict)
    reference: Optional[dict] = None
    use_reference: bool = True
    output: Optional[str] = None
    trace_stride: int = 1
    timing: bool = True
    name: str = "run"


def _check_type(name, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"field {name!r} must be true or false, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {name!r} must be a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(f"field {name!r} must be finite")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"field {name!r} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _vector_spec(name, value):
    if isinstance(value, bool):
        raise ConfigError(f"field {name!r} must be a number or a list of numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"field {name!r} must be a number or a list of numbers")


def parse_config(raw, name="run") -> RunConfig:
    """Validate a config mapping and apply defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_FIELDS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    if "problem" not in raw:
        raise ConfigError(f"field 'problem' is required; valid problems: {', '.join(PROBLEM_IDS)}")
    problem = raw["problem"]
    if problem not in PROBLEM_IDS:
        raise ConfigError(f"field 'problem': unknown id {problem!r}; valid problems: {', '.join(PROBLEM_IDS)}")
    if "method" not in raw:
        raise ConfigError(f"field 'method' is required; valid methods: {', '.join(METHODS)}")
    method = raw["method"]
    if method not in METHODS:
        raise ConfigError(f"field 'method': unknown id {method!r}; valid methods: {', '.join(METHODS)}")

    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("field 'params' must be an object")
    # fail early on bad problem parameters
    build_problem(problem, params)

    if "eta" in raw:
        if "alpha" in raw or "beta" in raw:
            raise ConfigError("field 'eta' cannot be combined with 'alpha' or 'beta'")
        eta = _check_type("eta", raw["eta"], float)
        if eta <= 0:
            raise ConfigError("field 'eta' must be positive")
        alpha = beta = 1.0 / eta
    else:
        alpha = _check_type("alpha", raw.get("alpha", DEFAULTS["alpha"]), float)
        beta = _check_type("beta", raw.get("beta", DEFAULTS["beta"]), float)
    for key, value in (("alpha", alpha), ("beta", beta)):
        if value <= 0:
            raise ConfigError(f"field {key!r} must be positive, got {value}")

    potential = raw.get("potential", DEFAULTS["potential"])
    if potential not in POTENTIAL_KINDS:
        raise ConfigError(f"field 'potential' must be one of {', '.join(POTENTIAL_KINDS)}, got {potential!r}")

    solver_kw = {}
    for key, kind in SOLVER_FIELDS.items():
        value = raw.get(key, DEFAULTS[key])
        solver_kw[key] = None if value is None else _check_type(key, value, kind)
    if solver_kw["krylov_tol"] <= 0:
        raise ConfigError("field 'krylov_tol' must be positive")
    if solver_kw["divergence_cap"] <= 0:
        raise ConfigError("field 'divergence_cap' must be positive")
    if solver_kw["max_iters"] < 0:
        raise ConfigError("field 'max_iters' must be nonnegative")
    if solver_kw["krylov_max_iter"] is not None and solver_kw["krylov_max_iter"] < 1:
        raise ConfigError("field 'krylov_max_iter' must be positive")
    solver = SolverConfig(method=method, alpha=alpha, beta=beta, positive_potential=potential, **solver_kw)

    initial = raw.get("initial", {})
    if not isinstance(initial, dict):
        raise ConfigError("field 'initial' must be an object")
    bad = sorted(set(initial) - {"x", "y", "mu", "nu"})
    if bad:
        raise ConfigError(f"unknown field(s) in 'initial': {', '.join(bad)}")
    initial = {k: _vector_spec(f"initial.{k}", v) for k, v in initial.items()}

    reference = raw.get("reference", None)
    use_reference = reference is not False
    if reference is False:
        reference = None
    if reference is not None:
        if not isinstance(reference, dict) or not set(reference) <= {"x", "y"}:
            raise ConfigError("field 'reference' must be an object with keys 'x' and/or 'y', or false")
        reference = {k: _vector_spec(f"reference.{k}", v) for k, v in reference.items()}

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("field 'output' must be a path string")
    stride = _check_type("trace_stride", raw.get("trace_stride", DEFAULTS["trace_stride"]), int)
    if stride < 1:
        raise ConfigError("field 'trace_stride' must be at least 1")
    timing = _check_type("timing", raw.get("timing", DEFAULTS["timing"]), bool)
    name = raw.get("name", name)
    if not isinstance(name, str):
        raise ConfigError("field 'name' must be a string")
    return RunConfig(problem=problem, params=dict(params), solver=solver, potential=potential,
                     initial=initial, reference=reference, use_reference=use_reference,
                     output=output, trace_stride=stride, timing=timing, name=name)


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_config(path) -> RunConfig:
    """Read and validate a JSON run config."""
    raw = _read_json(path)
    try:
        return parse_config(raw, name=Path(path).stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# -- running ---------------------------------------------------------------------

def _fill(name, spec, size, default):
    if spec is None:
        return np.array(default, dtype=float)
    if isinstance(spec, float):
        return np.full(size, spec)
    if len(spec) != size:
        raise ConfigError(f"field 'initial.{name}' has {len(spec)} entries, problem needs {size}")
    return np.array(spec, dtype=float)


def _multiplier_default(layout, start, size):
    out = np.zeros(size)
    pos = 0
    for b in layout:
        if pos >= start:
            out[pos - start: pos - start + b.size] = 1.0 if b.tag == POSITIVE else 0.0
        pos += b.size
    return out


def initial_point(config: RunConfig, built: BuiltProblem):
    """Full initial iterate (base point plus multipliers)."""
    game = built.game
    m, n = built.base_dims
    x = _fill("x", config.initial.get("x"), m, built.x0)
    y = _fill("y", config.initial.get("y"), n, built.y0)
    mu_size, nu_size = game.dim_x - m, game.dim_y - n
    if ("mu" in config.initial and mu_size == 0) or ("nu" in config.initial and nu_size == 0):
        raise ConfigError(f"problem {config.problem} has no such multiplier block")
    mu = _fill("mu", config.initial.get("mu"), mu_size, _multiplier_default(game.x_layout, m, mu_size))
    nu = _fill("nu", config.initial.get("nu"), nu_size, _multiplier_default(game.y_layout, n, nu_size))
    return np.concatenate([x, mu]), np.concatenate([y, nu])


def _distance(config, built):
    if not config.use_reference:
        return None
    m, n = built.base_dims
    if config.reference is not None:
        ref_x = _fill("x", config.reference.get("x"), m,
                      built.reference[0] if built.reference else np.zeros(m))
        ref_y = _fill("y", config.reference.get("y"), n,
                      built.reference[1] if built.reference else np.zeros(n))
    elif built.reference is not None:
        ref_x, ref_y = built.reference
    else:
        return None

    def distance(X, Y):
        dx = X[:m] - ref_x
        dy = Y[:n] - ref_y
        return float(np.sqrt(dx @ dx + dy @ dy))

    return distance


def run_experiment(config: RunConfig, keep_iterates=True) -> RunTrace:
    """Build the configured problem, run the solver and return the trace."""
    built = build_problem(config.problem, config.params)
    x0, y0 = initial_point(config, built)
    context = f"{config.name} ({config.problem}, {config.solver.method})"
    try:
        return run_solver(built.game, x0, y0, config.solver, report=built.report,
                          distance=_distance(config, built), stride=config.trace_stride,
                          timing=config.timing, keep_iterates=keep_iterates)
    except ConfigError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    except CMDError as exc:
        raise RunError(f"{context}: {type(exc).__name__}: {exc}") from exc


def output_dir():
    return Path(os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def output_path(config: RunConfig, override=None):
    """``override``, else the config's ``output``, else ``<output dir>/<name>.csv``."""
    if override:
        return Path(override)
    if config.output:
        return Path(config.output)
    return output_dir() / f"{config.name}.csv"


# -- sweeps ----------------------------------------------------------------------

def _set_path(raw, dotted, value):
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        nxt = node.setdefault(key, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"grid field {dotted!r}: {key!r} is not an object")
        node = nxt
    node[keys[-1]] = value


def _label(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        text = format(value, "g")
    else:
        text = str(value)
    return "".join(ch if ch.isalnum() or ch in ".-+" else "-" for ch in text)


def expand_grid(raw, grid):
    """Yield ``(suffix, raw_cell)`` for the cartesian product of ``grid``.

    ``grid`` maps dotted field paths (``"alpha"``, ``"params.seed"``) to
    lists of values; cells follow the key order of the grid file.
    """
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid must be a non-empty object mapping fields to lists")
    keys = list(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"grid field {key!r} must be a non-empty list")
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = copy.deepcopy(raw)
        for key, value in zip(keys, values):
            _set_path(cell, key, value)
        suffix = "_".join(f"{k}={_label(v)}" for k, v in zip(keys, values))
        yield suffix, cell


def _run_cell(args):
    cell_raw, name, path = args
    config = parse_config(cell_raw, name=name)
    trace = run_experiment(config, keep_iterates=False)
    write_trace(trace, path)
    return name, str(path), trace.status, trace.final.iter


def run_sweep(config_path, grid_path, out_dir=None, jobs=1):
    """Run every grid cell and write one trace per cell.

    Returns a list of ``(name, path, status, iterations)``.  Cells are
    independent, so ``jobs > 1`` runs them in worker processes.
    """
    raw = _read_json(config_path)
    grid = _read_json(grid_path)
    stem = Path(config_path).stem
    out = Path(out_dir) if out_dir else output_dir()
    tasks = []
    for suffix, cell in expand_grid(raw, grid):
        name = f"{stem}_{suffix}"
        cell.pop("output", None)
        try:
            parse_config(cell, name=name)
        except ConfigError as exc:
            raise ConfigError(f"grid cell {suffix}: {exc}") from None
        tasks.append((cell, name, out / f"{name}.csv"))
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(t) for t in tasks]
