"""The continuous Galerkin cG(q) time stepper.

On each interval the solution is a polynomial of degree q, continuous with
the previous interval, whose residual ``U' - f(U, t)`` is orthogonal to all
polynomials of degree q - 1. With Gauss-Lobatto nodes ``tau_0 = 0 < ... <
tau_q = 1`` this is the nodal system

    U_k = U_0 + dt * sum_j W[k, j] f(U(x_j), t_{m-1} + x_j dt),   k = 1..q,

over the quadrature points ``x_j``. It is solved by fixed-point iteration,
switching to Newton's method with the analytic Jacobian after a few sweeps
or as soon as the fixed-point updates stop shrinking.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .discretization import (
    BasisSpec,
    Partition,
    PiecewisePolynomial,
    default_rule_size,
    gauss_rule,
    lagrange_basis,
)
from .numerics import PrecisionContext, log10, make_context, solve
from .problems import ProblemDef, native_kernels

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """The nonlinear solve on one interval did not converge."""

    def __init__(self, interval: int, iterations: int, dt=None):
        self.interval = interval
        self.iterations = iterations
        msg = (f"cG iteration did not converge on interval {interval} "
               f"after {iterations} iterations")
        if dt is not None:
            msg += f"; try a step smaller than {float(dt):.3g}"
        super().__init__(msg)


@dataclass
class SolverConfig:
    """Settings for :func:`solve_cg`.

    Give either a uniform step ``dt`` or an explicit ``partition``.
    ``tol_fp`` defaults to ten units of roundoff; iterations stop when the
    max-norm update drops below ``tol_fp * (1 + max|U|)``. Fixed-point
    sweeps switch to Newton once the observed contraction predicts more than
    ``FP_LOOKAHEAD`` further sweeps, the update stops shrinking, or after
    ``newton_after`` sweeps (0 means Newton from the start).
    """

    q: int
    ctx: PrecisionContext = field(default_factory=lambda: make_context(16))
    dt: object = None
    partition: Optional[Partition] = None
    tol_fp: object = None
    max_iter: int = 100
    newton_after: int = 12
    quad_points: Optional[int] = None
    fast: bool = True

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("cG(q) needs q >= 1")
        if self.tol_fp is None:
            self.tol_fp = 10 * self.ctx.eps_mach
        else:
            self.tol_fp = self.ctx.scalar(self.tol_fp)
        if self.tol_fp < self.ctx.eps_mach:
            raise ValueError("tol_fp below machine precision is unattainable")
        if self.quad_points is None:
            self.quad_points = default_rule_size(self.q)

    def make_partition(self, T) -> Partition:
        if self.partition is not None:
            if self.partition.ctx != self.ctx:
                raise ValueError("partition precision differs from the solver's")
            return self.partition
        if self.dt is None:
            raise ValueError("SolverConfig needs dt or partition")
        return Partition.uniform(T, self.ctx, dt=self.dt)


@dataclass(frozen=True, eq=False)
class MethodTables:
    basis: BasisSpec
    x: np.ndarray          # quadrature points on [0, 1]
    lam: np.ndarray        # (n, q + 1) basis values at the points
    W: np.ndarray          # (q, n) nodal weights


@lru_cache(maxsize=None)
def method_tables(q: int, n: int, ctx: PrecisionContext) -> MethodTables:
    """Nodal weights of cG(q) with an n-point Gauss rule."""
    if n < q:
        raise ValueError(f"cG({q}) needs at least {q} quadrature points")
    basis = lagrange_basis(q, "lobatto", ctx)
    rule = gauss_rule(n, ctx)
    lam = basis(rule.points)
    test = lagrange_basis(q - 1, "gauss", ctx)
    with ctx:
        exact = gauss_rule(q + 1, ctx)
        dlam = basis.derivative_matrix(exact.points, 1)      # (n_e, q + 1)
        v_exact = test(exact.points)                           # (n_e, q)
        B = (v_exact * exact.weights[:, None]).T @ dlam        # (q, q + 1)
        V = (test(rule.points) * rule.weights[:, None]).T      # (q, n)
        W = solve(B[:, 1:], V)
    return MethodTables(basis, rule.points, lam, W)


class Trajectory(PiecewisePolynomial):
    """A cG(q) solution: continuous, piecewise degree q on Lobatto nodes."""

    def __init__(self, partition, basis, values, problem=None, config=None, stats=None):
        super().__init__(partition, basis, values)
        self.problem = problem
        self.config = config
        self.stats = stats or {}


def _max_abs(a):
    if a.dtype == object:
        return max(abs(v) for v in a.ravel())
    return float(np.max(np.abs(a)))


FP_LOOKAHEAD = 3


def _slow_contraction(upd, prev, target) -> bool:
    """True if fixed-point sweeps are not worth continuing."""
    if upd >= prev:
        return True
    if upd == 0:
        return False
    # sweeps still needed at the observed rate, in log10 to avoid underflow
    return float(log10(target) - log10(upd)) < FP_LOOKAHEAD * float(log10(upd) - log10(prev))


def _step_generic(problem, U0, t0, dt, tab: MethodTables, tol, newton_after, max_iter, ctx):
    """Solve the nodal system on one interval. Returns (Y, iterations)."""
    q = tab.W.shape[0]
    N = U0.shape[0]
    lam0, lam1 = tab.lam[:, :1], tab.lam[:, 1:]
    times = t0 + tab.x * dt
    Y = np.repeat(U0[None, :], q, axis=0)
    newton = newton_after == 0
    prev = None
    for it in range(1, max_iter + 1):
        P = lam0 * U0 + lam1 @ Y
        G = problem.f(P, times)
        if not newton:
            Ynew = U0 + dt * (tab.W @ G)
            upd = _max_abs(Ynew - Y)
            Y = Ynew
            target = tol * (1 + _max_abs(Y))
            if upd <= target:
                return Y, it
            if it >= newton_after or (it > 1 and _slow_contraction(upd, prev, target)):
                newton = True
            prev = upd
        else:
            F = Y - U0 - dt * (tab.W @ G)
            J = problem.jacobian(P, times)                      # (n, N, N)
            blocks = np.einsum("kj,jl,jab->kalb", tab.W, lam1, J)
            Jb = ctx.identity(q * N) - dt * blocks.reshape(q * N, q * N)
            delta = solve(Jb, F.reshape(q * N)).reshape(q, N)
            Y = Y - delta
            if _max_abs(delta) <= tol * (1 + _max_abs(Y)):
                return Y, it
    raise NonConvergence(-1, max_iter)


def solve_cg(problem: ProblemDef, config: SolverConfig, T, *, resume=None,
             on_intervals: Optional[Callable] = None, store: bool = True):
    """Solve ``u' = f(u, t)`` on ``[0, T]`` with cG(q).

    Parameters
    ----------
    resume : ndarray, optional
        Nodal values of already computed leading intervals; the march
        continues from the end of the last one.
    on_intervals : callable, optional
        Called as ``on_intervals(m_start, block)`` with each newly computed
        block of nodal values (for append-only persistence).
    store : bool
        With ``store=False`` only the final value ``U(T)`` is returned.

    Returns
    -------
    Trajectory, or ndarray when ``store`` is false.
    """
    ctx = config.ctx
    check = getattr(problem, "check_context", None)
    if check is not None:
        check(ctx)
    with ctx:
        T = ctx.scalar(T)
        if not T > 0:
            raise ValueError("T must be positive")
    part = config.make_partition(T)
    tab = method_tables(config.q, config.quad_points, ctx)
    u0 = problem.initial_value(ctx)
    N = u0.shape[0]
    q = config.q
    M = part.M
    start = 0
    blocks = []
    if resume is not None and len(resume):
        resume = ctx.array(resume) if not ctx.native else np.asarray(resume, dtype=float)
        start = resume.shape[0]
        blocks.append(resume)
        with ctx:
            u0 = tab.basis.at(ctx.scalar(1)) @ resume[-1]
    t_start = time.perf_counter()
    kern = native_kernels(problem) if (ctx.native and config.fast) else None
    total_iters = 0
    worst = 0
    if kern is not None:
        f, jac, prm = kern
        chunk = 20000 if on_intervals is not None else M
        U = np.asarray(u0, dtype=np.float64)
        nodes = part.nodes
        for a in range(start, M, chunk):
            b = min(M, a + chunk)
            values = np.empty((b - a, q + 1, N)) if store or on_intervals else np.empty((1, 1, 1))
            status, m, U, its, w = _kernels.cg_march(
                f, jac, prm, U, nodes[a:b + 1], tab.lam, tab.W, tab.x,
                float(config.tol_fp), config.newton_after, config.max_iter, FP_LOOKAHEAD,
                bool(store or on_intervals), values)
            total_iters += its
            worst = max(worst, w)
            if status != _kernels.OK:
                raise NonConvergence(a + m, config.max_iter, part.widths[a + m])
            if on_intervals is not None:
                on_intervals(a, values)
            if store:
                blocks.append(values)
        final = U
    else:
        with ctx:
            U = u0
            for m in range(start, M):
                t0 = part.nodes[m]
                dt = part.widths[m]
                try:
                    Y, its = _step_generic(problem, U, t0, dt, tab, config.tol_fp,
                                           config.newton_after, config.max_iter, ctx)
                except NonConvergence:
                    raise NonConvergence(m, config.max_iter, dt) from None
                total_iters += its
                worst = max(worst, its)
                block = np.concatenate([U[None, :], Y], axis=0)[None]
                if on_intervals is not None:
                    on_intervals(m, block)
                if store:
                    blocks.append(block)
                U = Y[-1]
        final = U
    stats = {
        "intervals": M,
        "iterations": total_iters,
        "max_iterations": worst,
        "wall_clock": time.perf_counter() - t_start,
        "path": "compiled" if kern is not None else "generic",
    }
    log.debug("cG(%d) solve: %s", q, stats)
    if not store:
        return final
    values = np.concatenate(blocks, axis=0) if len(blocks) > 1 else blocks[0]
    return Trajectory(part, tab.basis, values, problem=problem, config=config, stats=stats)


def solve_endpoint(problem, config: SolverConfig, T):
    """``U(T)`` without keeping the trajectory in memory."""
    return solve_cg(problem, config, T, store=False)


def evaluate(traj: PiecewisePolynomial, t):
    """``U(t)``; at a shared breakpoint the left interval's value is returned."""
    return traj.evaluate(t)


def evaluate_derivative(traj: PiecewisePolynomial, t, order: int = 1):
    """Derivative of order ``order`` of the containing interval's polynomial."""
    return traj.derivative(t, order)
