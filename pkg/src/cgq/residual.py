"""Continuous residual, jumps and discrete residuals of a trajectory.

For interval m (0-based, covering ``(t_m, t_{m+1}]``) and a testing basis
``lambda_0..lambda_p`` the discrete residual is

    Rbar[m, k] = lambda_k(0) [U]_m + int lambda_k((t - t_m) / dt_m) R(t) dt,

with ``R = U' - f(U, t)``. For a converged cG(q) solution and p <= q - 1 it
vanishes up to round-off and quadrature error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .discretization import (
    BasisSpec,
    PiecewisePolynomial,
    QuadratureRule,
    gauss_rule,
    lagrange_basis,
)
from .numerics import PrecisionContext, norms, sqrt, to_float


class ConfigurationError(ValueError):
    pass


def continuous_residual(traj: PiecewisePolynomial, problem, t) -> np.ndarray:
    """``R(t) = U'(t) - f(U(t), t)``; at breakpoints the left interval is used."""
    with traj.ctx:
        t = traj.ctx.scalar(t)
        return traj.derivative(t, 1) - problem.f(traj.evaluate(t), t)


def residual_on_reference(traj: PiecewisePolynomial, problem, s) -> np.ndarray:
    """``R`` at reference points ``s`` of every interval; shape (M, len(s), N)."""
    ctx = traj.ctx
    part = traj.partition
    with ctx:
        s = ctx.array(s)
        U = traj.on_reference(s)
        dU = traj.on_reference(s, order=1)
        times = part.nodes[:-1, None] + part.widths[:, None] * s[None, :]
        return dU - problem.f(U, times)


def residual_grid(q: int, ctx: PrecisionContext) -> np.ndarray:
    """The 4(q + 1) uniformly spaced interior sample points used for max |R|."""
    n = 4 * (q + 1)
    with ctx:
        return ctx.array([ctx.scalar(2 * i + 1) / (2 * n) for i in range(n)])


@dataclass(eq=False)
class ResidualData:
    """Per-interval residual summary of a trajectory.

    Attributes
    ----------
    jumps : (M, N) array
        ``[U]_m``.
    rbar : (M, p + 1, N) array
        Discrete residuals.
    r_norm_max : (M,) array
        Max of ``|R|`` over the sampling grid of each interval.
    r_norm_quad : (M, n) array
        ``|R|`` at the quadrature points of ``rule`` (feeds sharp sums).
    """

    jumps: np.ndarray
    rbar: np.ndarray
    r_norm_max: np.ndarray
    r_norm_quad: np.ndarray
    basis: BasisSpec
    rule: QuadratureRule
    partition: object
    q: int

    @property
    def ctx(self) -> PrecisionContext:
        return self.basis.ctx

    @property
    def p(self) -> int:
        return self.basis.degree

    @property
    def jump_norms(self):
        with self.ctx:
            return norms(self.jumps)

    @property
    def rbar_norms(self):
        """``|Rbar[m, k]|``; shape (M, p + 1)."""
        with self.ctx:
            return norms(self.rbar)

    @property
    def max_rbar(self):
        with self.ctx:
            return self.rbar_norms.max()

    def to_csv(self, path) -> None:
        """Columns m, t_m, dt_m, |[U]|, max_k |Rbar_k|, sampled max |R|."""
        part = self.partition
        jn = to_float(self.jump_norms)
        rb = to_float(self.rbar_norms).max(axis=1)
        rmax = to_float(self.r_norm_max)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "t_m", "dt_m", "jump_norm", "max_rbar_norm", "max_r_norm"])
            for m in range(part.M):
                w.writerow([m + 1, repr(float(part.nodes[m + 1])), repr(float(part.widths[m])),
                            repr(jn[m]), repr(rb[m]), repr(rmax[m])])


def default_residual_rule(q: int, p: int, ctx: PrecisionContext) -> QuadratureRule:
    """One more point than the solver's default rule, and never too coarse."""
    from .discretization import default_rule_size

    n = max(default_rule_size(q) + 1, (p + q + 2) // 2 + 1)
    return gauss_rule(n, ctx)


def discrete_residual(traj: PiecewisePolynomial, problem, basis: BasisSpec | None = None,
                      rule: QuadratureRule | None = None) -> ResidualData:
    """Jumps, discrete residuals and residual norms on every interval.

    ``basis`` defaults to the degree q - 1 Lagrange basis on Gauss nodes;
    ``rule`` must integrate polynomials of degree p + q exactly.
    """
    ctx = traj.ctx
    q = traj.degree
    if basis is None:
        basis = lagrange_basis(max(q - 1, 0), "gauss", ctx)
    p = basis.degree
    if rule is None:
        rule = default_residual_rule(q, p, ctx)
    if rule.degree < p + q:
        raise ConfigurationError(
            f"quadrature exact to degree {rule.degree} cannot test a degree-{q} "
            f"trajectory against degree-{p} polynomials (need {p + q})"
        )
    part = traj.partition
    with ctx:
        jumps = traj.jumps()
        R = residual_on_reference(traj, problem, rule.points)          # (M, n, N)
        lam = basis(rule.points)                                        # (n, p + 1)
        weighted = (lam * rule.weights[:, None]).T                      # (p + 1, n)
        integral = np.matmul(weighted, R) * part.widths[:, None, None]  # (M, p + 1, N)
        lam0 = basis.values_at_zero
        rbar = lam0[None, :, None] * jumps[:, None, :] + integral
        grid = residual_grid(q, ctx)
        r_grid = norms(residual_on_reference(traj, problem, grid))
        r_norm_max = r_grid.max(axis=1)
        r_norm_quad = norms(R)
    return ResidualData(jumps, rbar, r_norm_max, r_norm_quad, basis, rule, part, q)


def residual_ceiling(data: ResidualData, ctx: PrecisionContext, N: int):
    """``eps_mach * sqrt(N)`` and whether the measured max |Rbar| exceeds it.

    An exceeded ceiling points at a solver tolerance looser than machine
    precision.
    """
    with ctx:
        ceiling = ctx.eps_mach * sqrt(ctx.scalar(N))
        return ceiling, bool(data.max_rbar > ceiling)
