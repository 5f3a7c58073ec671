"""Competitive mirror descent and the comparison solvers.

Every method is a pure step function ``state -> state``; :func:`run_solver`
drives any of them and records a :class:`~cmdopt.trace.RunTrace`.

Inverse step sizes ``alpha`` (x-player) and ``beta`` (y-player) scale the
metric terms of the local game, i.e. CMD with potentials ``psi, phi`` solves
the Nash equilibrium of::

    min_dx  <grad_x f, dx> + dx' D_xy f dy + alpha/2 dx' D2psi dx
    min_dy  <grad_y g, dy> + dy' D_yx g dx + beta/2  dy' D2phi dy

and moves each player along the dual exponential map of its potential.
With quadratic identity potentials and ``alpha = beta = 1/eta`` this is
exactly competitive gradient descent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractViolation, DomainError, NumericalBreakdown, StepError
from .games import FREE, POSITIVE, TwoPlayerGame, positive_mask
from .linop import LinearOperator, schur_operator, solve_cg, solve_gmres
from .potentials import (
    EXP_CLAMP,
    POSITIVE_FLOOR,
    BlockPotential,
    BregmanPotential,
    QuadraticPotential,
    make_potential,
)
from .trace import RunTrace, TraceRecord

METHODS = ("CMD", "CMW", "PCGD", "PX", "PXM", "MD")
MIRROR_METHODS = ("CMD", "CMW", "PXM", "MD")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "CMW"
    alpha: float = 1.0
    beta: float = 1.0
    potential_x: Optional[BregmanPotential] = None
    potential_y: Optional[BregmanPotential] = None
    positive_potential: str = "shannon"
    krylov_tol: float = 1e-8
    krylov_max_iter: Optional[int] = None
    warm_start: bool = True
    alternating: bool = False
    dual_coordinates: bool = False
    max_iters: int = 1000
    stop_grad_norm: float = 0.0
    stop_step_norm: float = 0.0
    divergence_cap: float = 1e12

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError(f"inverse step sizes must be positive, got alpha={self.alpha}, beta={self.beta}")
        if not self.divergence_cap > 0:
            raise ConfigError("divergence_cap must be positive")
        if not self.krylov_tol > 0:
            raise ConfigError("krylov_tol must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be nonnegative")

    @property
    def eta_x(self):
        return 1.0 / self.alpha

    @property
    def eta_y(self):
        return 1.0 / self.beta


@dataclass(frozen=True)
class IterateState:
    x: np.ndarray
    y: np.ndarray
    dual_x: Optional[np.ndarray] = None
    dual_y: Optional[np.ndarray] = None
    warm_x: Optional[np.ndarray] = None
    warm_y: Optional[np.ndarray] = None
    iteration: int = 0
    grad_calls: int = 0
    hvp_calls: int = 0
    krylov_iters: int = 0
    clamped: bool = False
    diverged: bool = False


@dataclass
class LocalGameSolution:
    delta_x: np.ndarray
    delta_y: np.ndarray
    report_x: object = None
    report_y: object = None
    grad_calls: int = 0
    hvp_calls: int = 0

    @property
    def krylov_matvecs(self):
        return sum(r.matvecs for r in (self.report_x, self.report_y) if r is not None)

    @property
    def residuals(self):
        return tuple(r.residual_norm if r is not None else 0.0 for r in (self.report_x, self.report_y))


class _Oracles:
    """Counts every gradient and mixed-Hessian call made during one step."""

    def __init__(self, game):
        self.game = game
        self.grad_calls = 0
        self.hvp_calls = 0

    def grad_x(self, x, y):
        self.grad_calls += 1
        return np.asarray(self.game.grad_x_f(x, y), dtype=float)

    def grad_y(self, x, y):
        self.grad_calls += 1
        return np.asarray(self.game.grad_y_g(x, y), dtype=float)

    def hvp_xy(self, x, y, v):
        self.hvp_calls += 1
        return np.asarray(self.game.hvp_xy_f(x, y, v), dtype=float)

    def hvp_yx(self, x, y, v):
        self.hvp_calls += 1
        return np.asarray(self.game.hvp_yx_g(x, y, v), dtype=float)


# -- metrics ------------------------------------------------------------------

class _PotentialMetric:
    """Local geometry of a generic potential at a point."""

    def __init__(self, psi, p):
        self.psi = psi
        self.p = psi.check_point(p)

    def hvp(self, v):
        return self.psi.hessian_vec(self.p, v)

    def solve(self, v):
        return self.psi.hessian_solve(self.p, v)

    def inv_sqrt(self, v):
        return self.psi.hessian_inv_sqrt(self.p, v)

    def exp(self, v):
        return self.psi.exp_map(self.p, v)

    def dual_step(self, z, v):
        dz, clamped = self.psi.clip_dual(self.hvp(v))
        z_new = z + dz
        q, floored = self.psi.clip_primal(self.psi.grad_inverse(z_new))
        return q, z_new, clamped or floored

    def gradient(self):
        return self.psi.gradient(self.p)


class _EntropicMetric:
    """Shannon geometry on positive coordinates, Euclidean on free ones.

    Written with plain elementwise operations; on all-positive layouts it
    performs exactly the same floating-point operations as
    :class:`~cmdopt.potentials.ShannonEntropy`.
    """

    def __init__(self, p, mask):
        self.p = p
        self.mask = mask
        self.w = np.where(mask, p, 1.0)

    def hvp(self, v):
        return v / self.w

    def solve(self, v):
        return v * self.w

    def inv_sqrt(self, v):
        return v * np.sqrt(self.w)

    def _positive(self, q, exponent, clamped):
        low = self.mask & (q < POSITIVE_FLOOR)
        clamped |= bool(np.any(np.abs(exponent[self.mask]) > EXP_CLAMP)) or bool(np.any(low))
        return np.where(low, POSITIVE_FLOOR, q), clamped

    def exp(self, v):
        e = v / self.w
        mult = self.p * np.exp(np.clip(e, -EXP_CLAMP, EXP_CLAMP))
        return self._positive(np.where(self.mask, mult, self.p + v), e, False)

    def dual_step(self, z, v):
        dz = v / self.w
        z_new = z + np.where(self.mask, np.clip(dz, -EXP_CLAMP, EXP_CLAMP), dz)
        q, clamped = self._positive(np.where(self.mask, np.exp(z_new), z_new), dz, False)
        return q, z_new, clamped

    def gradient(self):
        return np.where(self.mask, np.log(self.w), self.p)


def default_potential(layout, positive_kind="shannon"):
    """Shannon (or ``positive_kind``) on positive blocks, Euclidean on free ones."""
    blocks = [b for b in layout if b.size > 0]
    if not blocks:
        raise ContractViolation("cannot build a potential for an empty player")
    parts = []
    for b in blocks:
        kind = positive_kind if b.tag == POSITIVE else "quadratic"
        if parts and parts[-1][0] == kind:
            parts[-1] = (kind, parts[-1][1] + b.size)
        else:
            parts.append((kind, b.size))
    pots = [make_potential(kind, size) for kind, size in parts]
    return pots[0] if len(pots) == 1 else BlockPotential(pots)


def _potentials(game, config):
    psi = config.potential_x or default_potential(game.x_layout, config.positive_potential)
    phi = config.potential_y or default_potential(game.y_layout, config.positive_potential)
    if psi.dim != game.dim_x or phi.dim != game.dim_y:
        raise ConfigError("potential dimensions do not match the game")
    return psi, phi


# -- local game ---------------------------------------------------------------

def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


class _NonFinite(Exception):
    pass


def _solve_player(oracles, x, y, player, m_self, m_other, a, b, g_self, g_other,
                  zero_sum, tol, max_iter, warm):
    """Krylov solve of one player's Schur-complement system.

    For the x-player::

        (a H_x - D_xy f (b H_y)^-1 D_yx g) dx = -(grad_x f - D_xy f (b H_y)^-1 grad_y g)

    solved for ``u`` with ``dx = S u`` and ``S = (a H_x)^(-1/2)``.  In these
    coordinates the metric term is exactly the identity, so the operator
    ``I - S D_xy f (b H_y)^-1 D_yx g S`` is applied without ever forming
    ``H_x`` itself; this stays accurate when ``H_x`` is huge near the boundary.
    """
    if player == "x":
        cross_out = lambda v: oracles.hvp_xy(x, y, v)  # other space -> own space
        cross_in = lambda v: oracles.hvp_yx(x, y, v)
    else:
        cross_out = lambda v: oracles.hvp_yx(x, y, v)
        cross_in = lambda v: oracles.hvp_xy(x, y, v)
    dim = g_self.size
    inv_b = 1.0 / b
    root = 1.0 / np.sqrt(a)
    scale = lambda v: m_self.inv_sqrt(v) * root
    rhs = -(g_self - cross_out(m_other.solve(g_other) * inv_b))
    if not _finite(rhs):
        raise _NonFinite
    identity = LinearOperator(dim, lambda v: v, True)
    op = schur_operator(identity, lambda w: scale(cross_out(w)), lambda w: m_other.solve(w) * inv_b,
                        lambda v: cross_in(scale(v)), symmetric_positive_definite=zero_sum)
    solver = solve_cg if zero_sum else solve_gmres
    report = solver(op, scale(rhs), tol=tol, max_iter=max_iter, warm_start=warm)
    if not report.converged:
        raise StepError(
            f"{player}-player local game did not converge: residual {report.residual_norm:.3e} "
            f"after {report.iterations} iterations", report)
    return scale(report.solution), report


def _partner(oracles, x, y, player, m_other, b, g_other, delta):
    """Closed-form best response of the other player to ``delta``."""
    if player == "x":
        coupled = oracles.hvp_yx(x, y, delta)
    else:
        coupled = oracles.hvp_xy(x, y, delta)
    return -m_other.solve(g_other + coupled) / b


def _local_game(oracles, x, y, mx, my, alpha, beta, zero_sum, tol, max_iter,
                warm_x=None, warm_y=None, solve_for="both"):
    gx = oracles.grad_x(x, y)
    gy = oracles.grad_y(x, y)
    if not _finite(gx, gy):
        raise _NonFinite
    rx = ry = None
    if solve_for in ("both", "x"):
        dx, rx = _solve_player(oracles, x, y, "x", mx, my, alpha, beta, gx, gy, zero_sum, tol,
                               max_iter, warm_x)
    if solve_for in ("both", "y"):
        dy, ry = _solve_player(oracles, x, y, "y", my, mx, beta, alpha, gy, gx, zero_sum, tol,
                               max_iter, warm_y)
    if solve_for == "x":
        dy = _partner(oracles, x, y, "x", my, beta, gy, dx)
    elif solve_for == "y":
        dx = _partner(oracles, x, y, "y", mx, alpha, gx, dy)
    return LocalGameSolution(dx, dy, rx, ry, oracles.grad_calls, oracles.hvp_calls)


def solve_local_game(game, x, y, psi, phi, alpha, beta, tol=1e-8, max_iter=None,
                     warm_x=None, warm_y=None, solve_for="both"):
    """Nash equilibrium ``(dx, dy)`` of the metric-regularized bilinear local game.

    CG is used for zero-sum games (the Schur operators are then SPD) and
    GMRES otherwise.  ``solve_for="x"`` or ``"y"`` solves one Krylov system
    and obtains the partner direction in closed form.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mx, my = _PotentialMetric(psi, x), _PotentialMetric(phi, y)
    oracles = _Oracles(game)
    try:
        return _local_game(oracles, x, y, mx, my, alpha, beta, game.zero_sum, tol, max_iter,
                           warm_x, warm_y, solve_for)
    except _NonFinite:
        raise StepError("non-finite gradients in local game") from None


def alternating_best_response(game, x, y, delta, which_player, psi, phi, alpha, beta):
    """Direction of the other player given ``which_player``'s solved direction.

    For ``which_player="x"``: ``dy = -(beta D2phi)^-1 (grad_y g + D_yx g dx)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    oracles = _Oracles(game)
    if which_player == "x":
        return _partner(oracles, x, y, "x", _PotentialMetric(phi, y), beta, oracles.grad_y(x, y), delta)
    if which_player == "y":
        return _partner(oracles, x, y, "y", _PotentialMetric(psi, x), alpha, oracles.grad_x(x, y), delta)
    raise ContractViolation(f"which_player must be 'x' or 'y', got {which_player!r}")


def retract(psi, p, delta):
    """Move from ``p`` along ``delta`` using the dual geometry of ``psi``."""
    return psi.dual_exp(p, delta)


def mirror_descent_step(psi, point, gradient, alpha):
    """``grad^-1(grad psi(point) - gradient / alpha)``."""
    return psi.mirror_step(point, -np.asarray(gradient, dtype=float) / alpha)[0]


# -- steps ----------------------------------------------------------------------

def _finish(state, x, y, oracles, config, krylov=0, clamped=False, **updates):
    diverged = not _finite(x, y)
    if not diverged:
        diverged = max(np.abs(x).max(initial=0.0), np.abs(y).max(initial=0.0)) > config.divergence_cap
    return replace(
        state, x=x, y=y,
        iteration=state.iteration + 1,
        grad_calls=state.grad_calls + oracles.grad_calls,
        hvp_calls=state.hvp_calls + oracles.hvp_calls,
        krylov_iters=krylov, clamped=clamped, diverged=diverged, **updates,
    )


def _nan_step(state, oracles, config):
    nan_x = np.full_like(state.x, np.nan)
    nan_y = np.full_like(state.y, np.nan)
    return _finish(state, nan_x, nan_y, oracles, config)


def _competitive_step(game, state, mx, my, config, project=None):
    oracles = _Oracles(game)
    solve_for = "both"
    if config.alternating:
        solve_for = "x" if state.iteration % 2 == 0 else "y"
    warm_x = state.warm_x if config.warm_start else None
    warm_y = state.warm_y if config.warm_start else None
    try:
        sol = _local_game(oracles, state.x, state.y, mx, my, config.alpha, config.beta,
                          game.zero_sum, config.krylov_tol, config.krylov_max_iter,
                          warm_x, warm_y, solve_for)
    except _NonFinite:
        return _nan_step(state, oracles, config)

    updates = {}
    if sol.report_x is not None:
        updates["warm_x"] = sol.report_x.solution
    if sol.report_y is not None:
        updates["warm_y"] = sol.report_y.solution

    if config.dual_coordinates and project is None:
        zx = state.dual_x if state.dual_x is not None else mx.gradient()
        zy = state.dual_y if state.dual_y is not None else my.gradient()
        x_new, zx_new, cx = mx.dual_step(zx, sol.delta_x)
        y_new, zy_new, cy = my.dual_step(zy, sol.delta_y)
        updates.update(dual_x=zx_new, dual_y=zy_new)
    else:
        x_new, cx = mx.exp(sol.delta_x)
        y_new, cy = my.exp(sol.delta_y)
        if project is not None:
            x_new, y_new = project(x_new, y_new)
    return _finish(state, x_new, y_new, oracles, config, sol.krylov_matvecs, cx or cy, **updates)


def cmd_step(game: TwoPlayerGame, state: IterateState, config: SolverConfig) -> IterateState:
    """One step of competitive mirror descent with the configured potentials."""
    psi, phi = _potentials(game, config)
    mx, my = _PotentialMetric(psi, state.x), _PotentialMetric(phi, state.y)
    new = _competitive_step(game, state, mx, my, config)
    if not config.dual_coordinates and not new.diverged:
        new = replace(new, dual_x=psi.gradient(new.x), dual_y=phi.gradient(new.y))
    return new


def _check_positive(layout, p, who):
    mask = positive_mask(layout)
    if not np.all(p[mask] > 0):
        raise DomainError(f"{who}-player iterate leaves the open positive orthant")
    return mask


def cmw_step(game: TwoPlayerGame, state: IterateState, config: SolverConfig) -> IterateState:
    """Competitive multiplicative weights.

    Entropy geometry on positive blocks, realized elementwise; free blocks
    (e.g. equality multipliers) use the Euclidean metric.  The multiplicative
    update is ``x * exp(dx / x)``.
    """
    mx = _EntropicMetric(state.x, _check_positive(game.x_layout, state.x, "x"))
    my = _EntropicMetric(state.y, _check_positive(game.y_layout, state.y, "y"))
    new = _competitive_step(game, state, mx, my, config)
    if not config.dual_coordinates and not new.diverged:
        new = replace(new,
                      dual_x=_EntropicMetric(new.x, mx.mask).gradient(),
                      dual_y=_EntropicMetric(new.y, my.mask).gradient())
    return new


def _orthant_projection(game):
    mx, my = positive_mask(game.x_layout), positive_mask(game.y_layout)

    def project(x, y):
        return np.where(mx, np.maximum(x, 0.0), x), np.where(my, np.maximum(y, 0.0), y)

    return project


def pcgd_step(game, state, eta, config=None):
    """Competitive gradient descent followed by clipping positive blocks at 0."""
    config = replace(config or SolverConfig(method="PCGD"), alpha=1.0 / eta, beta=1.0 / eta,
                     dual_coordinates=False)
    mx = _PotentialMetric(QuadraticPotential(game.dim_x), state.x)
    my = _PotentialMetric(QuadraticPotential(game.dim_y), state.y)
    return _competitive_step(game, state, mx, my, config, project=_orthant_projection(game))


def px_step(game, state, eta, eta_y=None, config=None):
    """Projected extragradient with step ``eta`` (``eta_y`` for the y-player)."""
    config = config or SolverConfig(method="PX")
    eta_y = eta if eta_y is None else eta_y
    project = _orthant_projection(game)
    oracles = _Oracles(game)
    x, y = state.x, state.y
    gx, gy = oracles.grad_x(x, y), oracles.grad_y(x, y)
    xh, yh = project(x - eta * gx, y - eta_y * gy)
    gx, gy = oracles.grad_x(xh, yh), oracles.grad_y(xh, yh)
    x_new, y_new = project(x - eta * gx, y - eta_y * gy)
    return _finish(state, x_new, y_new, oracles, config)


def _md(psi, p, grad, a):
    if not _finite(grad):
        return np.full_like(p, np.nan), False
    with np.errstate(over="ignore"):
        dz = -grad / a
    return psi.mirror_step(p, dz)


def pxm_step(game, state, config):
    """Mirror-prox: a lookahead mirror step supplies the gradient for the actual one."""
    psi, phi = _potentials(game, config)
    oracles = _Oracles(game)
    x, y = state.x, state.y
    xh, c1 = _md(psi, x, oracles.grad_x(x, y), config.alpha)
    yh, c2 = _md(phi, y, oracles.grad_y(x, y), config.beta)
    gx, gy = oracles.grad_x(xh, yh), oracles.grad_y(xh, yh)
    x_new, c3 = _md(psi, x, gx, config.alpha)
    y_new, c4 = _md(phi, y, gy, config.beta)
    return _finish(state, x_new, y_new, oracles, config, clamped=c1 or c2 or c3 or c4)


def md_step(game, state, config):
    """Simultaneous mirror descent for both players."""
    psi, phi = _potentials(game, config)
    oracles = _Oracles(game)
    x, y = state.x, state.y
    x_new, c1 = _md(psi, x, oracles.grad_x(x, y), config.alpha)
    y_new, c2 = _md(phi, y, oracles.grad_y(x, y), config.beta)
    return _finish(state, x_new, y_new, oracles, config, clamped=c1 or c2)


def make_step(game, config):
    """Bind the configured method to a ``state -> state`` function."""
    method = config.method
    if method == "CMD":
        return lambda s: cmd_step(game, s, config)
    if method == "CMW":
        return lambda s: cmw_step(game, s, config)
    if method == "PCGD":
        if config.alpha != config.beta:
            raise ConfigError("PCGD uses a single step size; set alpha == beta (or eta)")
        return lambda s: pcgd_step(game, s, config.eta_x, config)
    if method == "PX":
        return lambda s: px_step(game, s, config.eta_x, config.eta_y, config)
    if method == "PXM":
        return lambda s: pxm_step(game, s, config)
    return lambda s: md_step(game, s, config)


# -- run loop -----------------------------------------------------------------

def initial_state(game, x0, y0, config):
    """Validate the starting point for the configured method."""
    if game.dim_x < 1 or game.dim_y < 1:
        raise ConfigError("both players need at least one decision variable")
    try:
        x = np.array(x0, dtype=float).reshape(-1)
        y = np.array(y0, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"initial point is not numeric: {exc}") from None
    if x.shape != (game.dim_x,) or y.shape != (game.dim_y,):
        raise ConfigError(
            f"initial point has sizes ({x.size}, {y.size}), game needs ({game.dim_x}, {game.dim_y})"
        )
    if not _finite(x, y):
        raise ConfigError("initial point must be finite")
    interior = config.method in MIRROR_METHODS
    for layout, p, who in ((game.x_layout, x, "x"), (game.y_layout, y, "y")):
        mask = positive_mask(layout)
        ok = np.all(p[mask] > 0) if interior else np.all(p[mask] >= 0)
        if not ok:
            need = "strictly positive" if interior else "nonnegative"
            raise ConfigError(f"initial {who} must be {need} on positive blocks for {config.method}")
    state = IterateState(x, y)
    if interior:
        if config.method == "CMW":
            dx = _EntropicMetric(x, positive_mask(game.x_layout)).gradient()
            dy = _EntropicMetric(y, positive_mask(game.y_layout)).gradient()
        else:
            psi, phi = _potentials(game, config)
            dx, dy = psi.gradient(x), phi.gradient(y)
        state = replace(state, dual_x=dx, dual_y=dy)
    return state


def _grad_norm(game, x, y):
    if not _finite(x, y):
        return float("nan")
    g = np.concatenate([np.asarray(game.grad_x_f(x, y), dtype=float),
                        np.asarray(game.grad_y_g(x, y), dtype=float)])
    return float(np.linalg.norm(g))


def run_solver(game, x0, y0, config: SolverConfig, report=None, distance=None, stride=1,
               timing=True, keep_iterates=True) -> RunTrace:
    """Iterate the configured method and record a trace.

    Stops after ``max_iters`` steps, when the stacked gradient norm drops to
    ``stop_grad_norm`` (or the step length to ``stop_step_norm``), or when an
    iterate becomes non-finite or exceeds ``divergence_cap``.  ``report``
    maps ``(x, y)`` to the two recorded objective values; ``distance`` maps
    ``(x, y)`` to the reference distance.  Gradient evaluations made for
    monitoring are not counted as oracle calls.
    """
    state = initial_state(game, x0, y0, config)
    step = make_step(game, config)
    report = report or (lambda x, y: (game.eval_f(x, y), game.eval_g(x, y)))
    stride = max(1, int(stride))
    start = time.perf_counter()
    records = []
    clamp_events = 0
    message = ""

    def record(s, grad_norm, status):
        f_val, g_val = report(s.x, s.y)
        records.append(TraceRecord(
            iter=s.iteration, f=float(f_val), g=float(g_val), grad_norm=grad_norm,
            dist_ref=float(distance(s.x, s.y)) if distance is not None else float("nan"),
            krylov_iters=s.krylov_iters, grad_calls=s.grad_calls, hvp_calls=s.hvp_calls,
            wall_s=time.perf_counter() - start if timing else 0.0, status=status,
            x=s.x.copy() if keep_iterates else None, y=s.y.copy() if keep_iterates else None,
        ))

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        grad_norm = _grad_norm(game, state.x, state.y)
        status = "max_iters"
        if grad_norm <= config.stop_grad_norm:
            status = "converged"
        record(state, grad_norm, "ok")
        k = 0
        while status == "max_iters" and k < config.max_iters:
            prev = state
            try:
                state = step(state)
            except (StepError, NumericalBreakdown, DomainError) as exc:
                # Krylov failure, breakdown or a step leaving the potential's domain
                status, message = "diverged", f"{type(exc).__name__}: {exc}"
                break
            k += 1
            clamp_events += state.clamped
            grad_norm = _grad_norm(game, state.x, state.y)
            if state.diverged:
                status = "diverged"
            elif grad_norm <= config.stop_grad_norm:
                status = "converged"
            elif config.stop_step_norm > 0 and np.sqrt(
                    np.sum((state.x - prev.x) ** 2) + np.sum((state.y - prev.y) ** 2)) <= config.stop_step_norm:
                status = "converged"
            if status != "max_iters" or k == config.max_iters or k % stride == 0:
                record(state, grad_norm, "clamped" if state.clamped else "ok")
    if records[-1].iter != state.iteration:
        record(state, grad_norm, "ok")
    records[-1].status = status
    return RunTrace(records=records, status=status, x=state.x, y=state.y, method=config.method,
                    clamp_events=int(clamp_events), message=message,
                    grad_calls=state.grad_calls, hvp_calls=state.hvp_calls)
