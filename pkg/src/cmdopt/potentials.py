"""Bregman potentials on vector domains.

Each potential exposes its value, gradient (the mirror map), Hessian action
and inverse, the inverse mirror map, the Bregman divergence and the dual
exponential map ``Exp_p(v) = grad^-1(grad(p) + H(p) v)``.

Shannon steps clamp the exponent at ``EXP_CLAMP`` per coordinate, and
steps on the positive orthant never return values below ``POSITIVE_FLOOR``
(the smallest normal double) so that geometric decay cannot underflow to 0.
``exp_map`` and ``mirror_step`` return a flag telling the caller whether
either safeguard fired so that solvers can record it.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, DomainError, RangeError

EXP_CLAMP = 700.0
POSITIVE_FLOOR = float(np.finfo(float).tiny)


class BregmanPotential:
    """Base class; subclasses implement the closed forms."""

    kind = "abstract"
    complete = True
    domain = "real"

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ContractViolation(f"potential dimension must be positive, got {dim}")
        self.dim = dim

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    def _vec(self, v, name="vector"):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ContractViolation(f"{name} has shape {v.shape}, potential dimension is {self.dim}")
        return v

    def check_point(self, p):
        return self._vec(p, "point")

    def dual_exp(self, p, v):
        return self.exp_map(p, v)[0]

    def dual_line(self, p, v, t):
        """Dual geodesic ``t -> Exp_p(t v)``."""
        return self.dual_exp(p, float(t) * self._vec(v))

    def exp_map(self, p, v):
        p = self.check_point(p)
        return self.mirror_step(p, self.hessian_vec(p, v))

    def mirror_step(self, p, dz):
        """``grad^-1(grad(p) + dz)``; returns ``(point, clamped)``."""
        dz, clamped = self.clip_dual(self._vec(dz))
        q, floored = self.clip_primal(self.grad_inverse(self.gradient(p) + dz))
        return q, clamped or floored

    def clip_dual(self, dz):
        return dz, False

    def clip_primal(self, q):
        """Keep a computed point representable inside the domain."""
        return q, False

    def scaled(self, c):
        raise NotImplementedError


class QuadraticPotential(BregmanPotential):
    """``psi(p) = p'Ap / 2`` on R^m; ``A`` is identity, a diagonal or a dense SPD matrix."""

    kind = "quadratic"

    def __init__(self, dim=None, A=None):
        if A is None:
            if dim is None:
                raise ContractViolation("QuadraticPotential needs dim or A")
            self.diag = np.ones(int(dim))
            self.matrix = None
        else:
            A = np.asarray(A, dtype=float)
            if A.ndim == 1:
                self.diag, self.matrix = A.copy(), None
            elif A.ndim == 2 and A.shape[0] == A.shape[1]:
                if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
                    raise ContractViolation("quadratic potential matrix must be symmetric")
                self.diag, self.matrix = None, 0.5 * (A + A.T)
            else:
                raise ContractViolation(f"A must be a vector or square matrix, got shape {A.shape}")
            dim = A.shape[0]
        super().__init__(dim)
        if self.matrix is None:
            if not np.all(self.diag > 0):
                raise ContractViolation("quadratic potential must be positive definite")
        else:
            w, U = np.linalg.eigh(self.matrix)
            if w.min() <= 0:
                raise ContractViolation("quadratic potential must be positive definite")
            self._inv = (U / w) @ U.T
            self._inv_sqrt = (U / np.sqrt(w)) @ U.T

    def _apply(self, v):
        return self.diag * v if self.matrix is None else self.matrix @ v

    def _solve(self, v):
        return v / self.diag if self.matrix is None else self._inv @ v

    def value(self, p):
        p = self.check_point(p)
        return 0.5 * float(p @ self._apply(p))

    def gradient(self, p):
        return self._apply(self.check_point(p))

    def hessian_vec(self, p, v):
        self.check_point(p)
        return self._apply(self._vec(v))

    def hessian_solve(self, p, v):
        self.check_point(p)
        return self._solve(self._vec(v))

    def hessian_inv_sqrt(self, p, v):
        self.check_point(p)
        v = self._vec(v)
        return v / np.sqrt(self.diag) if self.matrix is None else self._inv_sqrt @ v

    def grad_inverse(self, z):
        return self._solve(self._vec(z, "dual vector"))

    def divergence(self, p, q):
        d = self.check_point(p) - self.check_point(q)
        return 0.5 * float(d @ self._apply(d))

    def exp_map(self, p, v):
        return self.check_point(p) + self._vec(v), False

    def mirror_step(self, p, dz):
        return self.check_point(p) + self._solve(self._vec(dz)), False

    def scaled(self, c):
        return QuadraticPotential(A=c * (self.diag if self.matrix is None else self.matrix))


class _OrthantPotential(BregmanPotential):
    domain = "positive"

    def __init__(self, dim, scale=1.0):
        super().__init__(dim)
        if not scale > 0:
            raise ContractViolation(f"potential scale must be positive, got {scale}")
        self.scale = float(scale)

    def check_point(self, p):
        p = self._vec(p, "point")
        if not np.all(p > 0):
            raise DomainError(f"{self.kind} potential requires strictly positive points")
        return p

    def clip_primal(self, q):
        return _floor(q)

    def scaled(self, c):
        return type(self)(self.dim, self.scale * c)


class ShannonEntropy(_OrthantPotential):
    """``psi(p) = sum p log p - p`` on the positive orthant (complete)."""

    kind = "shannon"

    def value(self, p):
        p = self.check_point(p)
        return self.scale * float(np.sum(p * np.log(p) - p))

    def gradient(self, p):
        return self.scale * np.log(self.check_point(p))

    def hessian_vec(self, p, v):
        return self.scale * self._vec(v) / self.check_point(p)

    def hessian_solve(self, p, v):
        return self._vec(v) * self.check_point(p) / self.scale

    def hessian_inv_sqrt(self, p, v):
        return self._vec(v) * np.sqrt(self.check_point(p) / self.scale)

    def grad_inverse(self, z):
        return np.exp(self._vec(z, "dual vector") / self.scale)

    def divergence(self, p, q):
        p, q = self.check_point(p), self.check_point(q)
        return self.scale * float(np.sum(p * np.log(p / q) - p + q))

    def clip_dual(self, dz):
        limit = EXP_CLAMP * self.scale
        clipped = np.clip(dz, -limit, limit)
        return clipped, bool(np.any(np.abs(dz) > limit))

    def exp_map(self, p, v):
        # the scale cancels: Exp_p(v) = p * exp(v / p)
        p = self.check_point(p)
        e = self._vec(v) / p
        return _multiplicative(p, e)

    def mirror_step(self, p, dz):
        p = self.check_point(p)
        return _multiplicative(p, self._vec(dz) / self.scale)


def _floor(q):
    low = q < POSITIVE_FLOOR
    if np.any(low):
        return np.where(low, POSITIVE_FLOOR, q), True
    return q, False


def _multiplicative(p, exponent):
    clipped = np.clip(exponent, -EXP_CLAMP, EXP_CLAMP)
    q, floored = _floor(p * np.exp(clipped))
    return q, floored or bool(np.any(np.abs(exponent) > EXP_CLAMP))


class BurgEntropy(_OrthantPotential):
    """``psi(p) = -sum log p``; incomplete, its gradient range is the negative orthant."""

    kind = "burg"
    complete = False

    def value(self, p):
        return -self.scale * float(np.sum(np.log(self.check_point(p))))

    def gradient(self, p):
        return -self.scale / self.check_point(p)

    def hessian_vec(self, p, v):
        p = self.check_point(p)
        return self.scale * self._vec(v) / (p * p)

    def hessian_solve(self, p, v):
        p = self.check_point(p)
        return self._vec(v) * (p * p) / self.scale

    def hessian_inv_sqrt(self, p, v):
        return self._vec(v) * self.check_point(p) / np.sqrt(self.scale)

    def grad_inverse(self, z):
        z = self._vec(z, "dual vector")
        if not np.all(z < 0):
            raise RangeError("Burg gradient range is the strictly negative orthant")
        return -self.scale / z

    def divergence(self, p, q):
        r = self.check_point(p) / self.check_point(q)
        return self.scale * float(np.sum(r - np.log(r) - 1.0))

    def exp_map(self, p, v):
        p = self.check_point(p)
        with np.errstate(over="ignore"):
            ratio = self._vec(v) / p
        if not np.all(ratio < 1.0):
            raise RangeError("Burg dual exponential undefined for directions with v_i >= p_i")
        return _floor(p / (1.0 - ratio))


class BlockPotential(BregmanPotential):
    """Direct sum of potentials acting on consecutive coordinate blocks."""

    kind = "block"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ContractViolation("BlockPotential needs at least one part")
        self.parts = parts
        self.slices = []
        start = 0
        for part in parts:
            self.slices.append(slice(start, start + part.dim))
            start += part.dim
        super().__init__(start)
        self.complete = all(part.complete for part in parts)
        self.domain = "mixed"

    def __repr__(self):
        return f"BlockPotential({self.parts!r})"

    def _map(self, name, *vectors):
        vectors = [self._vec(v) for v in vectors]
        return np.concatenate(
            [getattr(part, name)(*(v[s] for v in vectors)) for part, s in zip(self.parts, self.slices)]
        )

    def check_point(self, p):
        p = self._vec(p, "point")
        for part, s in zip(self.parts, self.slices):
            part.check_point(p[s])
        return p

    def value(self, p):
        p = self._vec(p, "point")
        return sum(part.value(p[s]) for part, s in zip(self.parts, self.slices))

    def divergence(self, p, q):
        p, q = self._vec(p, "point"), self._vec(q, "point")
        return sum(part.divergence(p[s], q[s]) for part, s in zip(self.parts, self.slices))

    def gradient(self, p):
        return self._map("gradient", p)

    def hessian_vec(self, p, v):
        return self._map("hessian_vec", p, v)

    def hessian_solve(self, p, v):
        return self._map("hessian_solve", p, v)

    def hessian_inv_sqrt(self, p, v):
        return self._map("hessian_inv_sqrt", p, v)

    def grad_inverse(self, z):
        return self._map("grad_inverse", z)

    def _map_flagged(self, name, a, b):
        a, b = self._vec(a), self._vec(b)
        out, any_clamped = [], False
        for part, s in zip(self.parts, self.slices):
            q, clamped = getattr(part, name)(a[s], b[s])
            out.append(q)
            any_clamped |= clamped
        return np.concatenate(out), any_clamped

    def exp_map(self, p, v):
        return self._map_flagged("exp_map", p, v)

    def mirror_step(self, p, dz):
        return self._map_flagged("mirror_step", p, dz)

    def _clip(self, name, v):
        v = self._vec(v)
        out, any_clamped = [], False
        for part, s in zip(self.parts, self.slices):
            c, clamped = getattr(part, name)(v[s])
            out.append(c)
            any_clamped |= clamped
        return np.concatenate(out), any_clamped

    def clip_dual(self, dz):
        return self._clip("clip_dual", dz)

    def clip_primal(self, q):
        return self._clip("clip_primal", q)

    def scaled(self, c):
        return BlockPotential([part.scaled(c) for part in self.parts])


POTENTIAL_KINDS = ("quadratic", "shannon", "burg")


def make_potential(kind, dim, **kwargs):
    """Build a potential by name: ``"quadratic"``, ``"shannon"`` or ``"burg"``."""
    kind = str(kind).lower()
    if kind == "quadratic":
        return QuadraticPotential(dim=dim, A=kwargs.get("A"))
    if kind == "shannon":
        return ShannonEntropy(dim, kwargs.get("scale", 1.0))
    if kind == "burg":
        return BurgEntropy(dim, kwargs.get("scale", 1.0))
    raise ContractViolation(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")
