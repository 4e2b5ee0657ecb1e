"""Initial value problems ``u' = f(u, t)``, ``u(0) = u0``.

Right-hand sides and Jacobians are written against the last array axis so
they work unchanged on double arrays, on ``mpfr`` object arrays, and on a
stack of states (shape ``(..., N)``). Constants are kept as exact integers
or fractions so no precision is lost when the working precision changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .numerics import PrecisionContext, expm, make_context


@dataclass(frozen=True, eq=False)
class ProblemDef:
    """An IVP on R^N.

    ``f(u, t)`` and ``jacobian(u, t)`` accept ``u`` of shape ``(..., N)``;
    the Jacobian returns shape ``(..., N, N)``. ``u0`` holds exact values
    (ints, Fractions, decimal strings) or scalars of one precision context.
    ``kernels`` optionally names compiled double-precision versions used by
    the fast path of the solver.
    """

    dimension: int
    f: Callable
    jacobian: Callable
    u0: tuple
    label: str
    params: dict = field(default_factory=dict)
    kernels: Optional[tuple] = None
    ctx: Optional[PrecisionContext] = None

    def initial_value(self, ctx: PrecisionContext) -> np.ndarray:
        return ctx.array(list(self.u0))

    def check_context(self, ctx: PrecisionContext) -> None:
        if self.ctx is not None and self.ctx != ctx:
            raise ValueError(
                f"problem {self.label!r} is bound to {self.ctx}, not {ctx}"
            )


def _stack(parts):
    return np.stack(parts, axis=-1)


# -- Lorenz -------------------------------------------------------------------


def lorenz(sigma=10, r=28, b=Fraction(8, 3), u0=(1, 0, 0)) -> ProblemDef:
    """The Lorenz system with the classical parameters and ``u(0) = (1, 0, 0)``."""
    b = Fraction(b)

    def f(u, t=None):
        x, y, z = u[..., 0], u[..., 1], u[..., 2]
        return _stack([
            sigma * (y - x),
            r * x - y - x * z,
            x * y - (b.numerator * z) / b.denominator,
        ])

    def jacobian(u, t=None):
        x, y, z = u[..., 0], u[..., 1], u[..., 2]
        one = 1 + 0 * x
        zero = 0 * x
        bb = (b.numerator * one) / b.denominator
        return np.stack([
            _stack([-sigma * one, sigma * one, zero]),
            _stack([r - z, -one, -x]),
            _stack([y, x, -bb]),
        ], axis=-2)

    params = {"sigma": sigma, "r": r, "b": b}
    native = (float(sigma), float(r), float(b))
    return ProblemDef(3, f, jacobian, tuple(u0), "lorenz", params,
                      kernels=("lorenz", native))


# -- van der Pol ----------------------------------------------------------------


def van_der_pol(mu=1000, u0=(2, 0)) -> ProblemDef:
    """van der Pol oscillator ``u1' = u2``, ``u2' = mu (1 - u1^2) u2 - u1``."""
    if isinstance(mu, (int, float, str, Fraction)):
        mu = Fraction(mu)
        bound = None
    else:
        bound = mu  # a scalar of some precision context
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")

    def coef(like):
        if bound is not None:
            return bound
        return (mu.numerator * (1 + 0 * like)) / mu.denominator

    def f(u, t=None):
        u1, u2 = u[..., 0], u[..., 1]
        m = coef(u1)
        return _stack([u2, m * (1 - u1 * u1) * u2 - u1])

    def jacobian(u, t=None):
        u1, u2 = u[..., 0], u[..., 1]
        m = coef(u1)
        one = 1 + 0 * u1
        zero = 0 * u1
        return np.stack([
            _stack([zero, one]),
            _stack([-2 * m * u1 * u2 - 1, m * (1 - u1 * u1)]),
        ], axis=-2)

    return ProblemDef(2, f, jacobian, tuple(u0), "vanderpol", {"mu": mu},
                      kernels=("vanderpol", (float(mu),)))


# -- linear problems with closed-form solution and dual -------------------------


@dataclass(frozen=True, eq=False)
class AnalyticProblem:
    """A linear autonomous problem ``u' = A u`` with exact solution and dual."""

    problem: ProblemDef
    A: np.ndarray
    ctx: PrecisionContext

    def solution(self, t) -> np.ndarray:
        ctx = self.ctx
        with ctx:
            E = expm(self.A * ctx.scalar(t), ctx)
            return E @ self.problem.initial_value(ctx)

    def dual(self, T, z_T) -> "AnalyticDual":
        return AnalyticDual(self.A, self.ctx.scalar(T), self.ctx.array(z_T), self.ctx)

    def __getattr__(self, name):
        return getattr(self.problem, name)


class AnalyticDual:
    """Exact dual ``z(t) = exp((T - t) A^T) z_T`` of a linear problem."""

    def __init__(self, A, T, z_T, ctx: PrecisionContext):
        self.A = A
        self.T = T
        self.z_T = z_T
        self.ctx = ctx

    def evaluate(self, t) -> np.ndarray:
        ctx = self.ctx
        with ctx:
            return expm(self.A.T * (self.T - ctx.scalar(t)), ctx) @ self.z_T

    __call__ = evaluate

    def derivative(self, t, order: int = 1) -> np.ndarray:
        ctx = self.ctx
        with ctx:
            z = self.evaluate(t)
            minus_At = -self.A.T
            for _ in range(order):
                z = minus_At @ z
            return z

    def on_partition(self, part, s, order: int = 0) -> np.ndarray:
        """z (or a derivative) at ``t_m + s_j dt_m`` for every interval; (M, len(s), N).

        Marches back from ``T`` with one exponential per distinct step, so a
        uniform partition costs a handful of matrix exponentials.
        """
        ctx = self.ctx
        cache = {}

        def E(h):
            key = str(h)
            if key not in cache:
                cache[key] = expm(self.A.T * h, ctx)
            return cache[key]

        with ctx:
            if part.T != self.T:
                raise ValueError("partition and dual have different final times")
            s = [ctx.scalar(v) for v in s]
            D = ctx.identity(len(self.z_T))
            for _ in range(order):
                D = -self.A.T @ D
            z = self.z_T
            out = [None] * part.M
            for m in range(part.M - 1, -1, -1):
                h = part.widths[m]
                out[m] = [D @ (E(h * (1 - sj)) @ z) for sj in s]
                z = E(h) @ z
            return ctx.array(out) if not ctx.native else np.asarray(out, dtype=float)


def linear_test(A, u0, ctx: PrecisionContext | None = None, label="linear") -> AnalyticProblem:
    """``u' = A u`` with exact solution ``exp(t A) u0``."""
    if ctx is None:
        ctx = make_context(16)
    A = ctx.array(A)
    u0v = ctx.array(u0)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if u0v.shape != (A.shape[0],):
        raise ValueError(f"u0 has shape {u0v.shape}, expected ({A.shape[0]},)")
    n = A.shape[0]

    def f(u, t=None):
        return u @ A.T

    def jacobian(u, t=None):
        lead = np.shape(u)[:-1]
        return np.broadcast_to(A, lead + (n, n))

    kernels = ("linear", tuple(float(a) for a in A.ravel())) if ctx.native else None
    problem = ProblemDef(n, f, jacobian, tuple(u0v), label, {"A": A},
                         kernels=kernels, ctx=ctx)
    return AnalyticProblem(problem, A, ctx)


def scalar_decay(lam=-1, u0=1, ctx: PrecisionContext | None = None) -> AnalyticProblem:
    """``u' = lam u``; the convergence-order workhorse."""
    return linear_test([[lam]], [u0], ctx=ctx, label="decay")


def read_matrix_file(path) -> tuple[list, list]:
    """Read ``A`` and ``u0`` from a text file.

    One matrix row per line (whitespace separated decimal literals), a line
    ``u0:`` and then the initial vector on the following line.
    """
    rows, u0, in_u0 = [], None, False
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.lower().startswith("u0"):
                rest = line.split(":", 1)[1].strip()
                in_u0 = not rest
                if rest:
                    u0 = rest.split()
                continue
            if in_u0:
                u0, in_u0 = line.split(), False
            else:
                rows.append(line.split())
    if u0 is None:
        raise ValueError(f"{path}: missing 'u0:' line")
    return rows, u0


def by_label(label: str, ctx: PrecisionContext, **params):
    """Problem lookup for the command line: lorenz, vanderpol, linear:<file>."""
    if label == "lorenz":
        return lorenz()
    if label == "vanderpol":
        return van_der_pol(mu=params.get("mu", 1000))
    if label.startswith("linear:"):
        rows, u0 = read_matrix_file(label.split(":", 1)[1])
        return linear_test(rows, u0, ctx=ctx, label=label)
    raise ValueError(f"unknown problem {label!r}")


def native_kernels(problem: ProblemDef):
    """Compiled (f, jacobian, params) for the double fast path, or None."""
    if problem.kernels is None or not _kernels.AVAILABLE:
        return None
    name, params = problem.kernels
    f, jac = _kernels.KERNELS[name]
    return f, jac, np.array(params, dtype=np.float64)
