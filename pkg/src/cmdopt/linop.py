"""Matrix-free linear operators and Krylov solvers.

Solvers report ``iterations`` (Krylov steps) and ``matvecs`` (operator
applications) separately; a warm start costs one extra application for the
initial residual.  Tolerances are relative to ``||rhs||`` with an absolute
fallback of ``1e-14`` when the right-hand side vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolation, InputError, NumericalBreakdown

ABS_TOL_ZERO_RHS = 1e-14


@dataclass(frozen=True)
class LinearOperator:
    """Action ``v -> M v`` on R^dim.

    ``symmetric_positive_definite`` is a declaration by the constructor and is
    never verified here.
    """

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    symmetric_positive_definite: bool = False

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ContractViolation(f"operator dimension must be positive, got {self.dim}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ContractViolation(f"expected vector of length {self.dim}, got shape {v.shape}")
        out = np.asarray(self.apply(v), dtype=float)
        if out.shape != (self.dim,):
            raise ContractViolation(
                f"operator returned shape {out.shape}, expected ({self.dim},)"
            )
        return out

    @classmethod
    def from_matrix(cls, matrix, symmetric_positive_definite=False):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ContractViolation(f"square matrix required, got shape {matrix.shape}")
        return cls(matrix.shape[0], lambda v: matrix @ v, symmetric_positive_definite)

    def to_dense(self):
        """Assemble the matrix column by column (testing and debugging only)."""
        eye = np.eye(self.dim)
        return np.column_stack([self(eye[:, j]) for j in range(self.dim)])


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    matvecs: int = 0


def _prepare(op, rhs, tol, max_iter, warm_start):
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.dim,):
        raise ContractViolation(f"rhs has shape {rhs.shape}, operator dimension is {op.dim}")
    if not np.all(np.isfinite(rhs)):
        raise InputError("right-hand side contains non-finite values")
    if tol <= 0:
        raise ContractViolation(f"tol must be positive, got {tol}")
    if max_iter is None:
        max_iter = 10 * op.dim
    if max_iter < 1:
        raise ContractViolation(f"max_iter must be positive, got {max_iter}")
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        if warm_start.shape != (op.dim,):
            raise ContractViolation(
                f"warm start has shape {warm_start.shape}, operator dimension is {op.dim}"
            )
        if not np.all(np.isfinite(warm_start)):
            warm_start = None
    rhs_norm = float(np.linalg.norm(rhs))
    threshold = tol * rhs_norm if rhs_norm > 0 else ABS_TOL_ZERO_RHS
    return rhs, int(max_iter), warm_start, threshold


def _normalized(core, op, rhs, tol, max_iter, warm_start, **kw):
    # Solve with a unit right-hand side so that tiny or huge scales neither
    # underflow nor overflow the inner products; the operator is linear.
    rhs, max_iter, warm_start, threshold = _prepare(op, rhs, tol, max_iter, warm_start)
    peak = float(np.max(np.abs(rhs)))
    s = peak * float(np.linalg.norm(rhs / peak)) if peak > 0.0 else 0.0
    if s == 0.0 or s == 1.0:
        return core(op, rhs, max_iter, warm_start, threshold, **kw)
    if warm_start is not None:
        warm_start = warm_start / s
        if not np.all(np.isfinite(warm_start)):
            warm_start = None
    rep = core(op, rhs / s, max_iter, warm_start, tol, **kw)
    return SolveReport(rep.solution * s, rep.iterations, rep.residual_norm * s, rep.converged,
                       rep.matvecs)


def solve_cg(op: LinearOperator, rhs, tol=1e-8, max_iter=None, warm_start=None) -> SolveReport:
    """Conjugate gradients for a declared symmetric positive definite operator."""
    if not op.symmetric_positive_definite:
        raise ContractViolation("solve_cg requires an operator declared symmetric positive definite")
    return _normalized(_cg, op, rhs, tol, max_iter, warm_start)


def _cg(op, rhs, max_iter, warm_start, threshold):
    matvecs = 0
    if warm_start is None:
        x = np.zeros(op.dim)
        r = rhs.copy()
    else:
        x = warm_start.copy()
        r = rhs - op(x)
        matvecs += 1
    rr = float(r @ r)
    res = float(np.sqrt(rr))
    if res <= threshold:
        return SolveReport(x, 0, res, True, matvecs)

    p = r.copy()
    it = 0
    while it < max_iter:
        q = op(p)
        matvecs += 1
        it += 1
        pq = float(p @ q)
        if not np.isfinite(pq) or pq <= 0.0:
            raise NumericalBreakdown(f"CG breakdown at iteration {it}: p'Ap = {pq}")
        step = rr / pq
        x = x + step * p
        r = r - step * q
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise NumericalBreakdown(f"CG residual became non-finite at iteration {it}")
        res = float(np.sqrt(rr_new))
        if res <= threshold:
            return SolveReport(x, it, res, True, matvecs)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return SolveReport(x, it, res, False, matvecs)


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    h = np.hypot(a, b)
    return a / h, b / h


def solve_gmres(op: LinearOperator, rhs, tol=1e-8, max_iter=None, warm_start=None,
                restart=None) -> SolveReport:
    """GMRES with Givens-rotation residual tracking.

    The basis is full (``restart = dim``) unless ``restart`` is given; more
    than ``dim`` steps only happen through restarts.
    """
    n = op.dim
    restart = n if restart is None else max(1, min(int(restart), n))
    return _normalized(_gmres, op, rhs, tol, max_iter, warm_start, restart=restart)


def _gmres(op, rhs, max_iter, warm_start, threshold, restart):
    n = op.dim

    matvecs = 0
    if warm_start is None:
        x = np.zeros(n)
        r = rhs.copy()
    else:
        x = warm_start.copy()
        r = rhs - op(x)
        matvecs += 1
    res = float(np.linalg.norm(r))
    it = 0
    if res <= threshold:
        return SolveReport(x, 0, res, True, matvecs)

    while it < max_iter:
        m = min(restart, max_iter - it)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = res
        V[0] = r / res
        j_used = 0
        exhausted = False
        for j in range(m):
            w = op(V[j])
            matvecs += 1
            it += 1
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if not np.all(np.isfinite(H[: j + 2, j])):
                raise NumericalBreakdown(f"GMRES Arnoldi coefficients non-finite at step {it}")
            for i in range(j):
                hi, hk = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hk
                H[i + 1, j] = -sn[i] * hi + cs[i] * hk
            subdiag = H[j + 1, j]
            cs[j], sn[j] = _givens(H[j, j], subdiag)
            H[j, j] = cs[j] * H[j, j] + sn[j] * subdiag
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            if H[j, j] == 0.0:
                # singular projected system; the rotated residual is meaningless
                exhausted = True
                break
            res = float(abs(g[j + 1]))
            if res <= threshold:
                break
            if subdiag <= 1e-14 * abs(H[j, j]):
                # invariant Krylov subspace reached
                exhausted = True
                break
            V[j + 1] = w / subdiag
        R = H[:j_used, :j_used]
        y = np.linalg.lstsq(R, g[:j_used], rcond=None)[0]
        if not np.all(np.isfinite(y)):
            raise NumericalBreakdown("GMRES least-squares update is non-finite")
        x = x + V[:j_used].T @ y
        res = float(np.hypot(np.linalg.norm(g[:j_used] - R @ y), g[j_used]))
        if res <= threshold:
            return SolveReport(x, it, res, True, matvecs)
        if exhausted:
            return SolveReport(x, it, res, False, matvecs)
        if it >= max_iter:
            break
        r = rhs - op(x)
        matvecs += 1
        res = float(np.linalg.norm(r))
        if res <= threshold:
            return SolveReport(x, it, res, True, matvecs)
    return SolveReport(x, it, res, False, matvecs)


def schur_operator(metric_x: LinearOperator, hvp_xy: Callable, metric_y_solve: Callable,
                   hvp_yx: Callable, symmetric_positive_definite: bool = False) -> LinearOperator:
    """``v -> metric_x(v) - hvp_xy(metric_y_solve(hvp_yx(v)))``.

    ``hvp_yx`` maps x-space to y-space and ``hvp_xy`` maps back, so the
    result acts on x-space.
    """
    dim = metric_x.dim

    def apply(v):
        coupled = np.asarray(hvp_xy(metric_y_solve(hvp_yx(v))), dtype=float)
        if coupled.shape != (dim,):
            raise ContractViolation(
                f"coupling term has shape {coupled.shape}, expected ({dim},)"
            )
        return metric_x(v) - coupled

    return LinearOperator(dim, apply, symmetric_positive_definite)


def congruence(op: LinearOperator, scale: Callable) -> LinearOperator:
    """Symmetrically preconditioned operator ``v -> S(op(S v))``."""
    return LinearOperator(op.dim, lambda v: scale(op(scale(v))), op.symmetric_positive_definite)
