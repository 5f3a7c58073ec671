"""Two-player games, conic constraints and the Lagrangian transform.

A game is a bundle of first-order oracles for the two losses ``f`` (x-player)
and ``g`` (y-player)::

    grad_x_f(x, y)        -> R^m
    grad_y_g(x, y)        -> R^n
    hvp_xy_f(x, y, v)     -> [D_xy f] v,  v in R^n, result in R^m
    hvp_yx_g(x, y, v)     -> [D_yx g] v,  v in R^m, result in R^n

Only the mixed second derivatives are needed by the competitive solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigError, ContractViolation
from .sampling import gaussian

FREE = "free"
POSITIVE = "positive"
DOMAIN_TAGS = (FREE, POSITIVE)

NONNEG, NONPOS, ZERO, CONE_FREE = "nonneg", "nonpos", "zero", "free"
CONE_TAGS = (NONNEG, NONPOS, ZERO, CONE_FREE)


class Block(NamedTuple):
    name: str
    size: int
    tag: str = FREE


def layout_dim(layout):
    return sum(b.size for b in layout)


def positive_mask(layout):
    """Boolean mask of the coordinates that live on the open positive orthant."""
    if not layout:
        return np.zeros(0, dtype=bool)
    return np.concatenate([np.full(b.size, b.tag == POSITIVE) for b in layout])


def _check_layout(layout):
    for b in layout:
        if b.tag not in DOMAIN_TAGS:
            raise ContractViolation(f"block {b.name!r} has unknown domain tag {b.tag!r}")
        if b.size < 0:
            raise ContractViolation(f"block {b.name!r} has negative size")
    return tuple(layout)


class BlockVector:
    """A player's decision variable split into named, domain-tagged blocks."""

    def __init__(self, blocks):
        self.blocks = []
        for name, values, tag in blocks:
            values = np.atleast_1d(np.asarray(values, dtype=float))
            if tag not in DOMAIN_TAGS:
                raise ContractViolation(f"block {name!r} has unknown domain tag {tag!r}")
            if tag == POSITIVE and not np.all(values > 0):
                raise ContractViolation(f"block {name!r} must be strictly positive")
            self.blocks.append((name, values, tag))

    @classmethod
    def from_flat(cls, layout, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (layout_dim(layout),):
            raise ContractViolation(
                f"flat vector has shape {flat.shape}, layout needs {layout_dim(layout)}"
            )
        out, start = [], 0
        for b in layout:
            out.append((b.name, flat[start:start + b.size], b.tag))
            start += b.size
        return cls(out)

    @property
    def layout(self):
        return tuple(Block(name, v.size, tag) for name, v, tag in self.blocks)

    @property
    def flat(self):
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([v for _, v, _ in self.blocks])

    def __len__(self):
        return sum(v.size for _, v, _ in self.blocks)

    def __getitem__(self, name):
        for n, v, _ in self.blocks:
            if n == name:
                return v
        raise KeyError(name)

    def __repr__(self):
        inner = ", ".join(f"{n}[{tag}]={v!r}" for n, v, tag in self.blocks)
        return f"BlockVector({inner})"


@dataclass(frozen=True)
class ConeSpec:
    """Product cone given by one tag per coordinate."""

    tags: tuple

    def __post_init__(self):
        tags = tuple(self.tags)
        for t in tags:
            if t not in CONE_TAGS:
                raise ConfigError(f"unsupported cone tag {t!r}; expected one of {CONE_TAGS}")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def uniform(cls, tag, dim):
        return cls((tag,) * int(dim))

    @property
    def dim(self):
        return len(self.tags)

    def contains(self, v, tol=0.0):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            return False
        for t, vi in zip(self.tags, v):
            if t == NONNEG and vi < -tol:
                return False
            if t == NONPOS and vi > tol:
                return False
            if t == ZERO and abs(vi) > tol:
                return False
        return True


_POLAR = {NONNEG: NONPOS, NONPOS: NONNEG, ZERO: CONE_FREE, CONE_FREE: ZERO}


def polar_cone(cone: ConeSpec) -> ConeSpec:
    return ConeSpec(tuple(_POLAR[t] for t in cone.tags))


@dataclass(frozen=True)
class TwoPlayerGame:
    dim_x: int
    dim_y: int
    eval_f: Callable
    eval_g: Callable
    grad_x_f: Callable
    grad_y_g: Callable
    hvp_xy_f: Callable
    hvp_yx_g: Callable
    zero_sum: bool = False
    x_layout: tuple = None
    y_layout: tuple = None
    name: str = "game"

    def __post_init__(self):
        if self.dim_x < 0 or self.dim_y < 0:
            raise ContractViolation("player dimensions must be nonnegative")
        xl = self.x_layout if self.x_layout is not None else (Block("x", self.dim_x),)
        yl = self.y_layout if self.y_layout is not None else (Block("y", self.dim_y),)
        object.__setattr__(self, "x_layout", _check_layout(xl))
        object.__setattr__(self, "y_layout", _check_layout(yl))
        if layout_dim(self.x_layout) != self.dim_x or layout_dim(self.y_layout) != self.dim_y:
            raise ContractViolation("block layouts do not match player dimensions")


@dataclass(frozen=True)
class Constraint:
    """``h(x) in cone`` with value, Jacobian-vector and vector-Jacobian oracles."""

    value: Callable
    jvp: Callable
    vjp: Callable
    cone: ConeSpec


@dataclass(frozen=True)
class ConstrainedProblem:
    """Base game plus optional conic constraints on each player.

    ``constraint_x`` constrains the x-player (``f~(x) in C~``) and
    ``constraint_y`` the y-player (``g~(y) in K~``).  The base game may have
    a zero-dimensional y-player for single-agent problems.
    """

    game: TwoPlayerGame
    constraint_x: Optional[Constraint] = None
    constraint_y: Optional[Constraint] = None
    name: str = "problem"


@dataclass(frozen=True)
class MultiplierLayout:
    """Where the multipliers live in the augmented game.

    The x-player owns ``mu`` (for the y-player's constraints) appended after
    the base x; the y-player owns ``nu`` (for the x-player's constraints)
    appended after the base y.  Stored multiplier coordinates are mapped to
    the full multiplier via ``full[index] = sign * stored``; coordinates
    whose polar cone is ``{0}`` are dropped.
    """

    base_dim_x: int
    base_dim_y: int
    mu_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    mu_sign: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    nu_sign: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_dim_full: int = 0
    nu_dim_full: int = 0

    def split_x(self, X):
        return X[: self.base_dim_x], X[self.base_dim_x:]

    def split_y(self, Y):
        return Y[: self.base_dim_y], Y[self.base_dim_y:]

    def mu(self, mu_stored):
        full = np.zeros(self.mu_dim_full)
        full[self.mu_index] = self.mu_sign * mu_stored
        return full

    def nu(self, nu_stored):
        full = np.zeros(self.nu_dim_full)
        full[self.nu_index] = self.nu_sign * nu_stored
        return full


def _multiplier_blocks(constraint, name):
    """Index, sign and block layout of the stored multiplier for one constraint.

    Free multipliers (equality constraints) come first, sign-constrained ones
    after, each group forming one block.
    """
    if constraint is None:
        return np.zeros(0, dtype=int), np.zeros(0), (), 0
    polar = polar_cone(constraint.cone)
    free = [i for i, t in enumerate(polar.tags) if t == CONE_FREE]
    signed = [i for i, t in enumerate(polar.tags) if t in (NONNEG, NONPOS)]
    index = np.asarray(free + signed, dtype=int)
    sign = np.asarray([1.0] * len(free) + [-1.0 if polar.tags[i] == NONPOS else 1.0 for i in signed])
    blocks = []
    if free:
        blocks.append(Block(name, len(free), FREE))
    if signed:
        blocks.append(Block(name + "_pos" if free else name, len(signed), POSITIVE))
    return index, sign, tuple(blocks), constraint.cone.dim


def lagrangian_transform(problem: ConstrainedProblem):
    """Eliminate conic constraints with multipliers.

    The x-player controls ``(x, mu)`` with loss
    ``f(x, y) + nu' f~(x) - mu' g~(y)`` and the y-player controls ``(y, nu)``
    with loss ``g(x, y) + mu' g~(y) - nu' f~(x)``, where ``mu`` lies in the
    polar of ``K~`` and ``nu`` in the polar of ``C~``.  Returns the augmented
    game and its :class:`MultiplierLayout`.
    """
    base = problem.game
    cx, cy = problem.constraint_x, problem.constraint_y
    mu_index, mu_sign, mu_blocks, mu_full = _multiplier_blocks(cy, "mu")
    nu_index, nu_sign, nu_blocks, nu_full = _multiplier_blocks(cx, "nu")
    ml = MultiplierLayout(base.dim_x, base.dim_y, mu_index, mu_sign, nu_index, nu_sign,
                          mu_full, nu_full)
    if not mu_blocks and not nu_blocks:
        return base, ml

    x_layout = base.x_layout + mu_blocks
    y_layout = base.y_layout + nu_blocks
    m, n = base.dim_x, base.dim_y

    def fx(x):
        return np.asarray(cx.value(x), dtype=float) if cx else np.zeros(0)

    def gy(y):
        return np.asarray(cy.value(y), dtype=float) if cy else np.zeros(0)

    def penalty(X, Y):
        x, mu_s = ml.split_x(X)
        y, nu_s = ml.split_y(Y)
        return float(ml.nu(nu_s) @ fx(x)) - float(ml.mu(mu_s) @ gy(y))

    def eval_f(X, Y):
        return base.eval_f(X[:m], Y[:n]) + penalty(X, Y)

    def eval_g(X, Y):
        return base.eval_g(X[:m], Y[:n]) - penalty(X, Y)

    def grad_x_f(X, Y):
        x, _ = ml.split_x(X)
        y, nu_s = ml.split_y(Y)
        gx = np.asarray(base.grad_x_f(x, y), dtype=float)
        if cx:
            gx = gx + cx.vjp(x, ml.nu(nu_s))
        parts = [gx]
        if mu_index.size:
            parts.append(-mu_sign * gy(y)[mu_index])
        return np.concatenate(parts)

    def grad_y_g(X, Y):
        x, mu_s = ml.split_x(X)
        y, _ = ml.split_y(Y)
        g = np.asarray(base.grad_y_g(x, y), dtype=float)
        if cy:
            g = g + cy.vjp(y, ml.mu(mu_s))
        parts = [g]
        if nu_index.size:
            parts.append(-nu_sign * fx(x)[nu_index])
        return np.concatenate(parts)

    def hvp_xy_f(X, Y, V):
        x, _ = ml.split_x(X)
        y, _ = ml.split_y(Y)
        vy, vnu = ml.split_y(V)
        top = np.asarray(base.hvp_xy_f(x, y, vy), dtype=float)
        if cx:
            top = top + cx.vjp(x, ml.nu(vnu))
        parts = [top]
        if mu_index.size:
            parts.append(-mu_sign * np.asarray(cy.jvp(y, vy), dtype=float)[mu_index])
        return np.concatenate(parts)

    def hvp_yx_g(X, Y, V):
        x, _ = ml.split_x(X)
        y, _ = ml.split_y(Y)
        vx, vmu = ml.split_x(V)
        top = np.asarray(base.hvp_yx_g(x, y, vx), dtype=float)
        if cy:
            top = top + cy.vjp(y, ml.mu(vmu))
        parts = [top]
        if nu_index.size:
            parts.append(-nu_sign * np.asarray(cx.jvp(x, vx), dtype=float)[nu_index])
        return np.concatenate(parts)

    game = TwoPlayerGame(
        layout_dim(x_layout), layout_dim(y_layout), eval_f, eval_g, grad_x_f, grad_y_g,
        hvp_xy_f, hvp_yx_g, zero_sum=base.zero_sum, x_layout=x_layout, y_layout=y_layout,
        name=f"{problem.name}/lagrangian",
    )
    return game, ml


# -- oracle verification ------------------------------------------------------

@dataclass
class OracleCheck:
    name: str
    passed: bool
    error: float


@dataclass
class OracleCheckReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        return "\n".join(
            f"{c.name:10s} {'PASS' if c.passed else 'FAIL'}  rel.err={c.error:.3e}" for c in self.checks
        )


def _rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1.0)
    return float(np.linalg.norm(a - b) / scale)


def _fd_gradient(fun, z):
    grad = np.zeros_like(z)
    for i in range(z.size):
        h = 1e-6 * (1.0 + abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        grad[i] = (fun(zp) - fun(zm)) / (2 * h)
    return grad


def check_first_order_oracles(game: TwoPlayerGame, x, y, tol=1e-5, n_directions=3, seed=0):
    """Compare gradient and mixed-Hessian oracles against central differences.

    Errors are relative with an absolute floor of 1.  Gradient checks use the
    per-coordinate step ``1e-6 * (1 + |z_i|)``; mixed-Hessian checks
    differentiate the gradient oracles along random unit directions.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    checks = []

    if game.dim_x:
        fd = _fd_gradient(lambda z: game.eval_f(z, y), x)
        err = _rel_err(np.asarray(game.grad_x_f(x, y)), fd)
        checks.append(OracleCheck("grad_x_f", err <= tol, err))
    if game.dim_y:
        fd = _fd_gradient(lambda z: game.eval_g(x, z), y)
        err = _rel_err(np.asarray(game.grad_y_g(x, y)), fd)
        checks.append(OracleCheck("grad_y_g", err <= tol, err))

    if game.dim_x and game.dim_y:
        err = 0.0
        h = 1e-6 * (1.0 + np.abs(y).max())
        for _ in range(n_directions):
            v = rng.normal(size=game.dim_y)
            v /= np.linalg.norm(v)
            fd = (np.asarray(game.grad_x_f(x, y + h * v)) - np.asarray(game.grad_x_f(x, y - h * v))) / (2 * h)
            err = max(err, _rel_err(np.asarray(game.hvp_xy_f(x, y, v)), fd))
        checks.append(OracleCheck("hvp_xy_f", err <= tol, err))

        err = 0.0
        h = 1e-6 * (1.0 + np.abs(x).max())
        for _ in range(n_directions):
            v = rng.normal(size=game.dim_x)
            v /= np.linalg.norm(v)
            fd = (np.asarray(game.grad_y_g(x + h * v, y)) - np.asarray(game.grad_y_g(x - h * v, y))) / (2 * h)
            err = max(err, _rel_err(np.asarray(game.hvp_yx_g(x, y, v)), fd))
        checks.append(OracleCheck("hvp_yx_g", err <= tol, err))
    return OracleCheckReport(checks)


# -- builtin problems ---------------------------------------------------------

PROBLEM_IDS = ("bilinear_positive", "empty_threats", "robust_regression", "constrained_qp")


def make_bilinear_positive(alpha):
    """``f = alpha (x - 0.1)(y - 0.1) = -g`` on the positive quadrant."""
    alpha = float(alpha)
    if alpha == 0:
        raise ContractViolation("alpha must be nonzero")

    def f(x, y):
        return alpha * float((x[0] - 0.1) * (y[0] - 0.1))

    return TwoPlayerGame(
        1, 1,
        eval_f=f,
        eval_g=lambda x, y: -f(x, y),
        grad_x_f=lambda x, y: alpha * (y - 0.1),
        grad_y_g=lambda x, y: -alpha * (x - 0.1),
        hvp_xy_f=lambda x, y, v: alpha * np.asarray(v, dtype=float),
        hvp_yx_g=lambda x, y, v: -alpha * np.asarray(v, dtype=float),
        zero_sum=True,
        x_layout=(Block("x", 1, POSITIVE),),
        y_layout=(Block("y", 1, POSITIVE),),
        name="bilinear_positive",
    )


def make_empty_threats():
    """``min_x 2xy - (1 - y)^2``, ``min_y -2xy + (1 - y)^2`` over x, y >= 0."""

    def f(x, y):
        return float(2 * x[0] * y[0] - (1 - y[0]) ** 2)

    return TwoPlayerGame(
        1, 1,
        eval_f=f,
        eval_g=lambda x, y: -f(x, y),
        grad_x_f=lambda x, y: 2.0 * y,
        grad_y_g=lambda x, y: -(2.0 * x + 2.0 * (1.0 - y)),
        hvp_xy_f=lambda x, y, v: 2.0 * np.asarray(v, dtype=float),
        hvp_yx_g=lambda x, y, v: -2.0 * np.asarray(v, dtype=float),
        zero_sum=True,
        x_layout=(Block("x", 1, POSITIVE),),
        y_layout=(Block("y", 1, POSITIVE),),
        name="empty_threats",
    )


def _simplex_sum_constraint(dim):
    return Constraint(
        value=lambda x: np.array([np.sum(x) - 1.0]),
        jvp=lambda x, v: np.array([np.sum(v)]),
        vjp=lambda x, w: np.full(dim, float(np.asarray(w)[0])),
        cone=ConeSpec((ZERO,)),
    )


def _single_player(dim, tag, f, grad, name):
    """Embed ``min_x f(x)`` as a zero-sum game with an empty y-player."""
    empty = np.zeros(0)
    return TwoPlayerGame(
        dim, 0,
        eval_f=lambda x, y: f(x),
        eval_g=lambda x, y: -f(x),
        grad_x_f=lambda x, y: grad(x),
        grad_y_g=lambda x, y: empty,
        hvp_xy_f=lambda x, y, v: np.zeros(dim),
        hvp_yx_g=lambda x, y, v: empty,
        zero_sum=True,
        x_layout=(Block("x", dim, tag),),
        y_layout=(),
        name=name,
    )


def make_robust_regression(rows, cols, seed):
    """``min ||Ax - b||^2`` over the probability simplex.

    ``A`` has i.i.d. standard normal entries and
    ``b = (A[:, 0] + A[:, 1]) / 2 + eps``, all drawn from one
    :func:`~cmdopt.sampling.gaussian` stream (``A`` row-major first).
    Returns ``(problem, A, b)``.
    """
    rows, cols = int(rows), int(cols)
    if rows < 2 or cols < 2:
        raise ContractViolation("robust regression needs rows, cols >= 2")
    z = gaussian(seed, rows * cols + rows)
    A = z[: rows * cols].reshape(rows, cols)
    b = 0.5 * (A[:, 0] + A[:, 1]) + z[rows * cols:]

    def f(x):
        r = A @ x - b
        return float(r @ r)

    def grad(x):
        return 2.0 * (A.T @ (A @ x - b))

    game = _single_player(cols, POSITIVE, f, grad, "robust_regression")
    problem = ConstrainedProblem(game, constraint_x=_simplex_sum_constraint(cols), name="robust_regression")
    return problem, A, b


def make_constrained_qp(c):
    """``min ||x - c||^2`` subject to ``1'x = 1``; optimum ``c + (1 - 1'c)/m``."""
    c = np.asarray(c, dtype=float)
    m = c.size
    if m < 1:
        raise ContractViolation("c must be nonempty")

    def f(x):
        d = x - c
        return float(d @ d)

    game = _single_player(m, FREE, f, lambda x: 2.0 * (x - c), "constrained_qp")
    return ConstrainedProblem(game, constraint_x=_simplex_sum_constraint(m), name="constrained_qp")


def constrained_qp_solution(c):
    c = np.asarray(c, dtype=float)
    return c + (1.0 - c.sum()) / c.size


def make_quadratic_game(m, n, seed=0, zero_sum=True, coupling=1.0):
    """Random quadratic game with constant mixed Hessians (for testing solvers).

    ``f = x'Px/2 + x'By + a'x + y'Qy/2 + c'y``.  With ``zero_sum`` the
    y-player's loss is ``-f``; otherwise ``g = y'Ry/2 + y'Cx + d'y`` with an
    independent coupling ``C``.
    """
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(m, m))
    P = P @ P.T / m
    Q = rng.normal(size=(n, n))
    Q = Q @ Q.T / n
    B = coupling * rng.normal(size=(m, n))
    a, c = rng.normal(size=m), rng.normal(size=n)

    def f(x, y):
        return float(0.5 * x @ P @ x + x @ B @ y + a @ x + 0.5 * y @ Q @ y + c @ y)

    if zero_sum:
        return TwoPlayerGame(
            m, n,
            eval_f=f,
            eval_g=lambda x, y: -f(x, y),
            grad_x_f=lambda x, y: P @ x + B @ y + a,
            grad_y_g=lambda x, y: -(B.T @ x + Q @ y + c),
            hvp_xy_f=lambda x, y, v: B @ v,
            hvp_yx_g=lambda x, y, v: -(B.T @ v),
            zero_sum=True,
            name="quadratic",
        )
    R = rng.normal(size=(n, n))
    R = R @ R.T / n
    C = coupling * rng.normal(size=(n, m))
    d = rng.normal(size=n)
    return TwoPlayerGame(
        m, n,
        eval_f=f,
        eval_g=lambda x, y: float(0.5 * y @ R @ y + y @ C @ x + d @ y),
        grad_x_f=lambda x, y: P @ x + B @ y + a,
        grad_y_g=lambda x, y: R @ y + C @ x + d,
        hvp_xy_f=lambda x, y, v: B @ v,
        hvp_yx_g=lambda x, y, v: C @ v,
        zero_sum=False,
        name="quadratic",
    )
