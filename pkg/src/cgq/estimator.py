"""Error representation, a posteriori bounds and a priori predictions.

The error in a linear functional ``<z_T, U(T) - u(T)>`` splits into a data
term E_D, a Galerkin (discretization) term E_G and a computational term E_C.
Every bound is reported twice where the theory carries an unknown
interpolation constant: once as a constant-free weighted sum built from the
stored dual and residuals ("sharp"), and once in the closed form with the
constant set to one ("modulo C_p").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np

from .discretization import (
    BasisSpec,
    PiecewisePolynomial,
    default_rule_size,
    gauss_rule,
    lagrange_basis,
)
from .numerics import PrecisionContext, norm, norms, sqrt
from .residual import ResidualData, residual_grid, residual_on_reference


def _dual_end_time(dual):
    return dual.T if not isinstance(dual, PiecewisePolynomial) else dual.partition.T


def _dual_at(dual, part, s):
    from .adjoint import _dual_on_reference

    return _dual_on_reference(dual, part, s)


def error_representation(traj, dual, problem, rule=None, u0_exact=None):
    """Dual-weighted representation of ``<z_T, U(T) - u(T)>``.

    Sum of the data term ``<z(0), U(0) - u(0)>`` (zero unless ``u0_exact`` is
    given), the jump terms ``<z(t_m), [U]_m>`` and ``int <z, R> dt``, the last
    one by Gauss quadrature on every interval.
    """
    ctx = traj.ctx
    part = traj.partition
    with ctx:
        if _dual_end_time(dual) != part.T:
            raise ValueError("dual and trajectory have different final times")
        if rule is None:
            rule = gauss_rule(traj.degree + 8, ctx)
        R = residual_on_reference(traj, problem, rule.points)        # (M, n, N)
        z = _dual_at(dual, part, rule.points)
        integral = ((z * R).sum(axis=-1) @ rule.weights) @ part.widths
        z_left = _dual_at(dual, part, ctx.array([0]))[:, 0]
        jumps = (z_left * traj.jumps()).sum()
        total = integral + jumps
        if u0_exact is not None:
            e0 = traj.evaluate(part.nodes[0]) - ctx.array(u0_exact)
            total = total + (dual.evaluate(part.nodes[0]) * e0).sum()
        return total


@dataclass(eq=False)
class ErrorBreakdown:
    """All error bounds for one dual, with the inputs they were built from.

    ``E_G`` and ``E_C`` are the sharp, constant-free sums that enter
    ``total``. Closed forms carrying an unknown constant are labelled
    ``*_modCp``. ``E_C_ceiling*`` use the worst case ``|Rbar| <= eps sqrt(N)``
    instead of measured residuals; ``E_C_rms*`` the random round-off model.
    """

    E_D: object
    E_G: object
    E_G_modCp: object
    E_G_modCp_nodal: object
    E_C: object
    E_C_termwise: object
    E_C_ceiling: object
    E_C_ceiling_modCp: object
    E_C_rms: object
    E_C_rms_modCp: object
    E_Q: object
    inputs: dict
    ctx: PrecisionContext
    include_quadrature: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def total(self):
        with self.ctx:
            t = self.E_D + self.E_G + self.E_C
            if self.include_quadrature and self.E_Q is not None:
                t = t + self.E_Q
            return t

    _FIELDS = ("E_D", "E_G", "E_G_modCp", "E_G_modCp_nodal", "E_C", "E_C_termwise",
               "E_C_ceiling", "E_C_ceiling_modCp", "E_C_rms", "E_C_rms_modCp", "E_Q")

    def as_dict(self, full_precision: bool = True) -> dict:
        conv = self.ctx.to_string if full_precision else float
        out = {k: (None if getattr(self, k) is None else conv(getattr(self, k)))
               for k in self._FIELDS}
        out["total"] = conv(self.total)
        out["inputs"] = {k: (conv(v) if not isinstance(v, (int, str, bool, type(None))) else v)
                         for k, v in self.inputs.items()}
        out.update(self.extras)
        return out

    def to_json(self, path=None, **provenance) -> str:
        doc = {"bounds": self.as_dict(), "precision": {"digits": self.ctx.digits,
                                                      "bits": self.ctx.bits}}
        doc.update(provenance)
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def assemble_bounds(sf, res: ResidualData, data_err, ctx: PrecisionContext, part=None,
                    p: int | None = None, N: int | None = None, E_Q=None,
                    include_quadrature: bool = True) -> ErrorBreakdown:
    """Combine stability information and residuals into the error bounds.

    Parameters
    ----------
    sf : StabilityFactors
        Built with the same testing basis and quadrature rule as ``res``.
    res : ResidualData
    data_err : scalar
        ``|U(0) - u(0)|``.
    """
    part = part if part is not None else res.partition
    p = res.p if p is None else p
    if sf.p != p or res.p != p:
        raise ValueError(f"testing degree mismatch: factors p={sf.p}, residuals p={res.p}, p={p}")
    if sf.rule.size != res.rule.size or sf.partition.M != part.M:
        raise ValueError("stability factors and residuals use different rules or partitions")
    if sf.node_norms is None:
        raise ValueError("dual nodal values are required for the sharp sums")
    N = res.jumps.shape[1] if N is None else N
    q = res.q
    with ctx:
        dts = part.widths
        eps = ctx.eps_mach
        min_dt = part.min_width
        jump_n = norms(res.jumps)
        rbar_n = norms(res.rbar)                                            # (M, p+1)
        w = res.rule.weights
        data_err = ctx.scalar(data_err)
        E_D = sf.S_D * data_err
        # Galerkin term: int |z - pi z| |R| + |(z - pi z)(t_m+)| |[U]_m|
        E_G = (((sf.interp_err * res.r_norm_quad) @ w) * dts).sum() \
            + (sf.interp_err_left * jump_n).sum()
        local = [dts[m] ** (p + 1) * (jump_n[m] / dts[m] + res.r_norm_max[m])
                 for m in range(part.M)]
        local_nodal = [dts[m] ** (2 * q) * (jump_n[m] / dts[m] + res.r_norm_max[m])
                       for m in range(part.M)]
        resid_G = max(local)
        E_G_modCp = sf.S_G * resid_G
        E_G_modCp_nodal = sf.S_G * max(local_nodal)
        # computational term
        scaled = max(rbar_n[m].max() / dts[m] for m in range(part.M))
        weight = (sf.node_norms.sum(axis=1) * dts).sum()
        E_C = weight * scaled
        E_C_termwise = (sf.node_norms * rbar_n).sum()
        root_n = sqrt(ctx.scalar(N))
        E_C_ceiling = eps * root_n * sf.node_norms.sum()
        E_C_ceiling_modCp = sf.S_C * eps * root_n / min_dt
        E_C_rms = eps * sqrt((sf.node_norms * sf.node_norms).sum())
        E_C_rms_modCp = sf.S_C2 * eps / sqrt(min_dt)
    inputs = {
        "S_D": sf.S_D, "S_G": sf.S_G, "S_C": sf.S_C, "S_C2": sf.S_C2, "S_Q": sf.S_Q,
        "data_err": data_err, "residual_G": resid_G, "max_scaled_rbar": scaled,
        "max_rbar": rbar_n.max(), "eps_mach": eps, "N": N, "min_dt": min_dt,
        "p": p, "q": q, "exponent_interval": p + 1, "exponent_nodal": 2 * q,
    }
    return ErrorBreakdown(E_D, E_G, E_G_modCp, E_G_modCp_nodal, E_C, E_C_termwise,
                          E_C_ceiling, E_C_ceiling_modCp, E_C_rms, E_C_rms_modCp,
                          E_Q, inputs, ctx, include_quadrature)


def solver_quadrature_basis(traj) -> BasisSpec:
    """Interpolation basis matching the solver's own quadrature of ``f``.

    The nodal system integrates ``f(U)`` with an n-point Gauss rule, which
    is exact for the degree n - 1 interpolant at those points; this is the
    ``pi f`` whose error E_Q measures.
    """
    config = getattr(traj, "config", None)
    n = config.quad_points if config is not None and config.quad_points else \
        default_rule_size(traj.degree)
    return lagrange_basis(n - 1, "gauss", traj.ctx)


def estimate_quadrature_error(dual, problem, traj, basis: BasisSpec, S_Q=None):
    """``S_Q * max |pi f - f|`` along the trajectory.

    ``pi f`` interpolates ``f(U(t), t)`` at the nodes of ``basis`` on every
    interval; the max is sampled on the residual grid plus both interval
    ends, where the interpolation error of Gauss-node interpolants peaks.
    ``S_Q = int |z|`` is computed here unless given.
    """
    ctx = traj.ctx
    part = traj.partition
    with ctx:
        grid = np.concatenate([ctx.array([0]), residual_grid(traj.degree, ctx), ctx.array([1])])
        t_nodes = part.nodes[:-1, None] + part.widths[:, None] * basis.nodes[None, :]
        f_nodes = problem.f(traj.on_reference(basis.nodes), t_nodes)          # (M, p+1, N)
        t_grid = part.nodes[:-1, None] + part.widths[:, None] * grid[None, :]
        f_grid = problem.f(traj.on_reference(grid), t_grid)
        pi_grid = np.matmul(basis(grid), f_nodes)
        worst = norms(pi_grid - f_grid).max()
        if S_Q is None:
            rule = gauss_rule(max(traj.degree + 2, 4), ctx)
            zq = _dual_at(dual, part, rule.points)
            S_Q = ((norms(zq) @ rule.weights) * part.widths).sum()
        return S_Q * worst


# -- predictions --------------------------------------------------------------------


def _log10_eps(ctx_or_eps) -> float:
    if isinstance(ctx_or_eps, PrecisionContext):
        with ctx_or_eps:
            return float(gmpy2.log10(gmpy2.mpfr(ctx_or_eps.eps_mach))) \
                if not ctx_or_eps.native else math.log10(ctx_or_eps.eps_mach)
    eps = ctx_or_eps
    if isinstance(eps, (int, float)):
        if not 0 < eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        return math.log10(eps)
    return float(gmpy2.log10(eps))


def predict_optimal_dt(q: int, ctx_or_eps, stability_ratio=1) -> float:
    """Step size balancing ``dt^(2q)`` against ``eps / sqrt(dt)``.

    Returns ``(ratio * eps)^(1 / (2q + 1/2))``, where ``stability_ratio``
    (default 1) is the ratio of the round-off to the discretization constant,
    e.g. ``S_C / S_G`` for a given horizon.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    if stability_ratio <= 0:
        raise ValueError("stability_ratio must be positive")
    exponent = (_log10_eps(ctx_or_eps) + math.log10(stability_ratio)) / (2 * q + 0.5)
    return 10.0 ** exponent


def predict_computability(ctx_or_digits, growth_rate, target_digits=0) -> float:
    """Longest horizon with ``S(T) * eps`` below ``10^-target_digits``.

    With ``S(T) ~ 10^(rate T)`` this is ``(n - target_digits) / rate``, where
    n is the number of significant decimal digits of the working precision.
    The arithmetic is exact for decimal inputs.
    """
    rate = Fraction(str(growth_rate))
    if rate <= 0:
        raise ValueError("growth_rate must be positive")
    if isinstance(ctx_or_digits, PrecisionContext):
        n = Fraction(ctx_or_digits.digits)
    else:
        n = Fraction(str(ctx_or_digits))
    return float((n - Fraction(str(target_digits))) / rate)


def write_report(path, breakdown: ErrorBreakdown, factors=None, residual=None,
                 predictions=None, provenance=None) -> dict:
    """Estimator report as JSON: bounds, factors, residual summary, predictions."""
    doc = {"bounds": breakdown.as_dict(),
           "precision": {"digits": breakdown.ctx.digits, "bits": breakdown.ctx.bits}}
    if factors is not None:
        doc["stability"] = {k: breakdown.ctx.to_string(getattr(factors, k))
                            for k in ("S_D", "S_G", "S_C", "S_C2", "S_Q")}
    if residual is not None:
        with residual.ctx:
            doc["residual"] = {
                "max_rbar": residual.ctx.to_string(residual.max_rbar),
                "max_jump": residual.ctx.to_string(norms(residual.jumps).max()),
                "max_r": residual.ctx.to_string(residual.r_norm_max.max()),
                "p": residual.p,
                "rule_points": residual.rule.size,
            }
    if predictions:
        doc["predictions"] = predictions
    if provenance:
        doc["provenance"] = provenance
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


__all__ = [
    "ErrorBreakdown", "assemble_bounds", "error_representation",
    "estimate_quadrature_error", "solver_quadrature_basis", "predict_optimal_dt", "predict_computability",
    "write_report", "norm",
]
