"""The linearized dual problem and its stability factors.

The dual solves ``-z' = A(t)^T z`` backwards from ``z(T) = z_T``. Since the
problem is linear, every interval reduces to one block linear solve. The
solver keeps, per interval, the matrices mapping ``z(t_{m+1})`` to the nodal
values on that interval, so duals for any number of terminal vectors (and
any earlier final time) come from matrix products alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import (
    BasisSpec,
    Partition,
    PiecewisePolynomial,
    QuadratureRule,
    default_rule_size,
    gauss_rule,
    lagrange_basis,
)
from .numerics import PrecisionContext, SingularMatrix, norm, norms, solve, sqrt, to_float
from .primal import method_tables


class DualSingular(ArithmeticError):
    def __init__(self, interval: int):
        self.interval = interval
        super().__init__(f"singular dual system on interval {interval}")


# -- averaged Jacobian ------------------------------------------------------------


def averaged_jacobian(traj, problem, t, policy: str = "along_U", reference=None,
                      points: int = 8):
    """Approximation of the mean-value Jacobian at time ``t``.

    ``along_U`` evaluates the Jacobian at ``U(t)``. ``segment_quadrature``
    integrates it over the segment from ``reference(t)`` to ``U(t)`` with a
    Gauss rule of ``points`` points, which is exact for polynomial right-hand
    sides of degree up to ``2 * points``.
    """
    ctx = traj.ctx
    with ctx:
        t = ctx.scalar(t)
        U = traj.evaluate(t)
        if policy == "along_U":
            return problem.jacobian(U, t)
        if policy != "segment_quadrature":
            raise ValueError(f"unknown Jacobian policy {policy!r}")
        if reference is None:
            raise ValueError("segment_quadrature needs a reference trajectory")
        u = reference(t)
        return _segment_average(problem, U[None, :], ctx.array(u)[None, :], [t],
                                gauss_rule(points, ctx))[0]


def _segment_average(problem, U, u, times, rule):
    """Gauss average of the Jacobian on segments ``u + s (U - u)``, stacked."""
    U = np.asarray(U)
    u = np.asarray(u)
    total = 0
    for s, w in zip(rule.points, rule.weights):
        total = total + w * problem.jacobian(u + s * (U - u), times)
    return total


# -- dual solve ------------------------------------------------------------------


@dataclass
class DualConfig:
    """Settings of the dual solve.

    ``q_dual`` defaults to ``max(p + 2, 3)`` where ``p`` is the testing
    degree (default ``q - 1`` of the primal trajectory). ``refine`` splits
    every primal interval into that many dual intervals.
    """

    p: Optional[int] = None
    q_dual: Optional[int] = None
    refine: int = 1
    policy: str = "along_U"
    reference: object = None
    quad_points: Optional[int] = None

    def resolve(self, q: int) -> "DualConfig":
        p = q - 1 if self.p is None else self.p
        qd = max(p + 2, 3) if self.q_dual is None else self.q_dual
        if qd < 1:
            raise ValueError("dual degree must be at least 1")
        n = self.quad_points or max(default_rule_size(qd), (2 * qd + q) // 2 + 1)
        return DualConfig(p, qd, self.refine, self.policy, self.reference, n)


def _values_on(pp, part: Partition, s) -> np.ndarray:
    """``pp`` at ``t_m + s dt_m`` for all intervals of ``part``; (M, len(s), N)."""
    if pp.partition is part:
        return pp.on_reference(s)
    ctx = part.ctx
    with ctx:
        out = [[pp.evaluate(part.nodes[m] + si * part.widths[m]) for si in s]
               for m in range(part.M)]
        return ctx.array(out) if not ctx.native else np.asarray(out, dtype=float)


class DualPropagator:
    """Per-interval maps of the discrete dual along a fixed trajectory.

    For interval m, ``node_maps[m]`` has shape (q_dual + 1, N, N) and maps
    ``z(t_{m+1})`` to the nodal values of z on that interval in increasing
    time order; ``node_maps[m][0]`` is the one-step propagator to ``z(t_m)``.
    """

    def __init__(self, partition: Partition, basis: BasisSpec, node_maps, config: DualConfig):
        self.partition = partition
        self.basis = basis
        self.node_maps = node_maps
        self.config = config
        self.ctx = basis.ctx

    @property
    def dimension(self) -> int:
        return self.node_maps.shape[-1]

    def _end_index(self, T) -> int:
        part = self.partition
        if T is None:
            return part.M
        with self.ctx:
            T = self.ctx.scalar(T)
        m = part.locate(T) + 1
        if part.nodes[m] != T:
            raise ValueError("final time must be a partition node")
        return m

    def nodal_values(self, z_T, T=None) -> np.ndarray:
        """Nodal values (M', q_dual + 1, N, ...) of the dual with ``z(T) = z_T``.

        ``z_T`` may be a vector or a matrix whose columns are terminal vectors.
        """
        ctx = self.ctx
        end = self._end_index(T)
        with ctx:
            z = ctx.array(z_T) if not ctx.native else np.asarray(z_T, dtype=float)
            out = [None] * end
            for m in range(end - 1, -1, -1):
                vals = self.node_maps[m] @ z
                out[m] = vals
                z = vals[0]
            return np.stack(out)

    def solution(self, z_T, T=None) -> "DualSolution":
        end = self._end_index(T)
        part = self.partition
        if end != part.M:
            part = Partition(part.nodes[: end + 1], self.ctx)
        values = self.nodal_values(z_T, T)
        return DualSolution(part, self.basis, values, z_T=self.ctx.array(z_T),
                            policy=self.config.policy, propagator=self)


class DualSolution(PiecewisePolynomial):
    """Continuous piecewise polynomial dual solution."""

    def __init__(self, partition, basis, values, z_T, policy, propagator=None):
        super().__init__(partition, basis, values)
        self.z_T = z_T
        self.policy = policy
        self.propagator = propagator

    @property
    def T(self):
        return self.partition.T


def dual_propagator(traj, problem, config: DualConfig | None = None) -> DualPropagator:
    """Build the per-interval dual maps along ``traj``."""
    config = (config or DualConfig()).resolve(traj.degree)
    ctx = traj.ctx
    qd = config.q_dual
    part = traj.partition.refine(config.refine)
    tab = method_tables(qd, config.quad_points, ctx)
    N = traj.dimension
    with ctx:
        # the dual runs in reversed time, so stage j sits at t_{m+1} - x_j dt
        s_back = 1 - tab.x
        U = _values_on(traj, part, s_back)
        times = part.nodes[:-1, None] + part.widths[:, None] * s_back[None, :]
        if config.policy == "along_U":
            J = problem.jacobian(U, times)
        elif config.policy == "segment_quadrature":
            if config.reference is None:
                raise ValueError("segment_quadrature needs a reference trajectory")
            u = _values_on(config.reference, part, s_back)
            J = _segment_average(problem, U, u, times, gauss_rule(qd + 4, ctx))
        else:
            raise ValueError(f"unknown Jacobian policy {config.policy!r}")
        J = np.broadcast_to(J, (part.M, len(tab.x), N, N))
        Jt = np.swapaxes(J, -1, -2)
        lam0, lam1 = tab.lam[:, 0], tab.lam[:, 1:]
        I = ctx.identity(N)
        Iq = ctx.identity(qd * N)
        maps = np.empty((part.M, qd + 1, N, N), dtype=ctx.dtype)
        for m in range(part.M):
            dt = part.widths[m]
            B = Jt[m]                                                # (n, N, N)
            blocks = np.einsum("kj,jl,jab->kalb", tab.W, lam1, B)
            K = Iq - dt * blocks.reshape(qd * N, qd * N)
            rhs = I[None] + dt * np.einsum("kj,j,jab->kab", tab.W, lam0, B)
            try:
                Y = solve(K, rhs.reshape(qd * N, N)).reshape(qd, N, N)
            except (SingularMatrix, np.linalg.LinAlgError):
                raise DualSingular(m) from None
            # reversed nodes: sigma_k = 1 - tau_{qd-k}
            maps[m, qd] = I
            maps[m, :qd] = Y[::-1]
    return DualPropagator(part, tab.basis, maps, config)


def solve_dual(traj, problem, z_T, config: DualConfig | None = None) -> DualSolution:
    """Dual solution along ``traj`` with terminal data ``z_T`` at its end time."""
    z_T = np.asarray(z_T)
    if z_T.shape != (traj.dimension,):
        raise ValueError(f"z_T must have shape ({traj.dimension},)")
    return dual_propagator(traj, problem, config).solution(z_T)


def unit_vectors(N: int, ctx: PrecisionContext) -> list:
    I = ctx.identity(N)
    return [I[i] for i in range(N)]


# -- stability factors -------------------------------------------------------------


def _dual_on_reference(dual, part: Partition, s, order: int = 0):
    """Values or derivatives of any dual at reference points of ``part``."""
    if isinstance(dual, PiecewisePolynomial):
        if dual.partition is part or (
            dual.partition.M == part.M and np.array_equal(dual.partition.nodes, part.nodes)
        ):
            return dual.on_reference(s, order)
        if order:
            ctx = part.ctx
            with ctx:
                return ctx.array([[dual.derivative(part.nodes[m] + si * part.widths[m], order)
                                   for si in s] for m in range(part.M)])
        return _values_on(dual, part, s)
    return dual.on_partition(part, s, order)


@dataclass(eq=False)
class StabilityFactors:
    """Global stability factors of one dual solution.

    Arrays are per interval of the primal partition. ``node_norms`` holds
    ``|z(t_m + tau_k dt_m)|`` at the testing nodes, ``interp_err`` holds
    ``|z - pi z|`` at the quadrature points, ``interp_err_left`` at the left
    end of each interval. Profiles hold the running integrals at the
    partition nodes (length M + 1).
    """

    S_D: object
    S_G: object
    S_C: object
    S_C2: object
    S_Q: object
    node_norms: np.ndarray
    interp_err: np.ndarray
    interp_err_left: np.ndarray
    profile_G: np.ndarray
    profile_C: np.ndarray
    profile_C2: np.ndarray
    profile_Q: np.ndarray
    partition: Partition
    basis: BasisSpec
    rule: QuadratureRule
    extras: dict = field(default_factory=dict)

    @property
    def ctx(self):
        return self.basis.ctx

    @property
    def p(self) -> int:
        return self.basis.degree

    def summary(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("S_D", "S_G", "S_C", "S_C2", "S_Q")}

    def to_csv(self, path) -> None:
        """Columns t, S_D(t), S_G(t), S_C(t), S_C2(t) at the partition nodes."""
        S_D = repr(float(self.S_D))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "S_D", "S_G", "S_C", "S_C2"])
            for m, t in enumerate(self.partition.nodes):
                w.writerow([repr(float(t)), S_D, repr(float(self.profile_G[m])),
                            repr(float(self.profile_C[m])),
                            repr(float(self.profile_C2[m]))])


def _cumulative(per_interval, ctx):
    out = [0 * ctx.scalar(0)]
    with ctx:
        for v in per_interval:
            out.append(out[-1] + v)
    return ctx.array(out) if not ctx.native else np.asarray(out, dtype=float)


def stability_factors(dual, basis: BasisSpec, rule: QuadratureRule,
                      partition: Partition) -> StabilityFactors:
    """S_D, S_G, S_C, S_C2 and S_Q of a dual solution.

    ``pi z`` is the degree-p interpolant of z at the nodes of ``basis`` on
    each interval of ``partition``.
    """
    p = basis.degree
    if isinstance(dual, PiecewisePolynomial) and dual.degree <= p:
        raise ValueError(
            f"dual degree {dual.degree} <= p = {p}: z^(p+1) vanishes identically; "
            "use q_dual >= p + 1"
        )
    ctx = basis.ctx
    dts = partition.widths
    with ctx:
        w = rule.weights
        z_nodes = _dual_on_reference(dual, partition, basis.nodes)           # (M, p+1, N)
        z_quad = _dual_on_reference(dual, partition, rule.points)            # (M, n, N)
        lam = basis(rule.points)                                             # (n, p+1)
        pi_quad = np.matmul(lam, z_nodes)
        zero = ctx.array([0])
        pi_left = np.matmul(basis(zero), z_nodes)[:, 0]
        z_left = _dual_on_reference(dual, partition, zero)[:, 0]
        dz = _dual_on_reference(dual, partition, rule.points, order=p + 1)
        node_norms = norms(z_nodes)
        pi_norm = norms(pi_quad)
        per_G = (norms(dz) @ w) * dts
        per_C = (pi_norm @ w) * dts
        per_C2 = ((pi_norm * pi_norm) @ w) * dts
        per_Q = (norms(z_quad) @ w) * dts
        interp_err = norms(z_quad - pi_quad)
        interp_err_left = norms(z_left - pi_left)
        z0 = dual.evaluate(partition.nodes[0])
        prof_G = _cumulative(per_G, ctx)
        prof_C = _cumulative(per_C, ctx)
        prof_C2 = sqrt(_cumulative(per_C2, ctx))
        prof_Q = _cumulative(per_Q, ctx)
        S_D = norm(z0)
    return StabilityFactors(S_D, prof_G[-1], prof_C[-1], prof_C2[-1], prof_Q[-1],
                            node_norms, interp_err, interp_err_left,
                            prof_G, prof_C, prof_C2, prof_Q, partition, basis, rule)


# -- growth of S_C with the final time ----------------------------------------------


def stability_growth(prop: DualPropagator, final_times, basis: BasisSpec | None = None,
                     rule: QuadratureRule | None = None, terminal=None):
    """``S_C(T')`` for each final time ``T'``, one column per terminal vector.

    Each ``T'`` gets its own dual (terminal data imposed at ``T'``), solved
    with the stored interval maps. ``terminal`` defaults to the N unit
    vectors. Returns an array of shape (len(final_times), n_terminal) in
    double precision.
    """
    ctx = prop.ctx
    p = prop.config.p
    if basis is None:
        basis = lagrange_basis(p, "gauss", ctx)
    if rule is None:
        rule = gauss_rule(max(default_rule_size(prop.basis.degree), p + 2), ctx)
    N = prop.dimension
    Z = ctx.identity(N) if terminal is None else ctx.array(terminal).T
    part = prop.partition
    with ctx:
        # pi z at the rule points as a linear map of the dual nodal values
        H = basis(rule.points) @ prop.basis(basis.nodes)                  # (n, qd+1)
        maps_q = np.einsum("ij,mjab->miab", H, prop.node_maps)            # (M, n, N, N)
        out = []
        for T in final_times:
            end = prop._end_index(T)
            z = Z
            total = 0 * ctx.scalar(0)
            for m in range(end - 1, -1, -1):
                vals = maps_q[m] @ z                                      # (n, N, cols)
                nrm = sqrt((vals * vals).sum(axis=1))                     # (n, cols)
                total = total + part.widths[m] * (rule.weights @ nrm)
                z = prop.node_maps[m][0] @ z
            out.append(total)
    return to_float(np.asarray(out, dtype=object if not ctx.native else float))


def fit_growth_rate(times, values, window=None) -> float:
    """Least-squares slope of ``log10 values`` against ``times``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        keep = (times >= window[0]) & (times <= window[1])
        times, values = times[keep], values[keep]
    if len(times) < 2:
        raise ValueError("need at least two samples to fit a growth rate")
    return float(np.polyfit(times, np.log10(values), 1)[0])


def max_unit_dual(traj, problem, config: DualConfig | None = None):
    """Dual solutions for all N unit terminal vectors, sharing one propagator."""
    prop = dual_propagator(traj, problem, config)
    return prop, [prop.solution(e) for e in unit_vectors(traj.dimension, traj.ctx)]


__all__ = [
    "DualConfig", "DualPropagator", "DualSolution", "DualSingular", "StabilityFactors",
    "averaged_jacobian", "dual_propagator", "solve_dual", "stability_factors",
    "stability_growth", "fit_growth_rate", "unit_vectors", "max_unit_dual",
]
