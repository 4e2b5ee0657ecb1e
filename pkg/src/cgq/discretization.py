"""Partitions, nodal bases, quadrature and piecewise polynomials on [0, T].

Everything lives on the reference interval [0, 1] and is mapped affinely to
``(t_{m-1}, t_m]``. Nodal polynomials are evaluated in barycentric form so
that high degrees (q = 100 at 420 digits) stay well conditioned.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import PrecisionContext, norms, solve

NODE_FAMILIES = ("lobatto", "gauss", "uniform")


# -- Legendre machinery -----------------------------------------------------


def _legendre(n, x):
    """P_n(x), P_n'(x) by the three-term recurrence."""
    p0, p1 = 1 + 0 * x, x
    if n == 0:
        return p0, 0 * x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


def _newton_roots(fun, guesses, ctx: PrecisionContext, max_iter=200):
    """Polish float root guesses of ``fun`` (returns value, derivative)."""
    tol = ctx.eps_mach * 4
    roots = []
    with ctx:
        for g in guesses:
            x = ctx.scalar(float(g))
            for _ in range(max_iter):
                val, der = fun(x)
                dx = val / der
                x = x - dx
                if abs(dx) <= tol:
                    break
            roots.append(x)
    return roots


def _gauss_legendre_minus1_1(n: int, ctx: PrecisionContext):
    guesses = [math.cos(math.pi * (i + 0.75) / (n + 0.5)) for i in range(n)]
    roots = _newton_roots(lambda x: _legendre(n, x), guesses, ctx)
    roots.sort()
    with ctx:
        weights = []
        for x in roots:
            _, dp = _legendre(n, x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    return roots, weights


def _lobatto_interior_minus1_1(p: int, ctx: PrecisionContext):
    """Roots of P_p' on (-1, 1)."""
    if p < 2:
        return []

    def fun(x):
        # (1 - x^2) P'' = 2 x P' - p (p + 1) P
        val, dp = _legendre(p, x)
        ddp = (2 * x * dp - p * (p + 1) * val) / (1 - x * x)
        return dp, ddp

    # Gauss nodes of order p-1 interlace the Lobatto interior nodes; the
    # Chebyshev-Lobatto points are close enough for Newton to converge.
    guesses = [-math.cos(math.pi * (i + 1) / p) for i in range(p - 1)]
    # refine guesses in double first to stay in each basin
    g = np.array(guesses)
    for _ in range(100):
        val, dp = _legendre(p, g)
        ddp = (2 * g * dp - p * (p + 1) * val) / (1 - g * g)
        step = dp / ddp
        g = g - step
        if np.max(np.abs(step)) < 1e-15:
            break
    roots = _newton_roots(fun, g, ctx)
    roots.sort()
    return roots


# -- bases --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Lagrange nodal basis of degree ``p`` on [0, 1].

    Attributes
    ----------
    degree : int
    family : str
    nodes : ndarray
        Reference nodes ``tau_0 < ... < tau_p``.
    weights : ndarray
        Barycentric weights.
    ctx : PrecisionContext
    """

    degree: int
    family: str
    nodes: np.ndarray
    weights: np.ndarray
    ctx: PrecisionContext

    def __call__(self, s) -> np.ndarray:
        """Values ``lambda_k(s)`` for all k; shape ``(len(s), p + 1)``."""
        ctx = self.ctx
        s_arr = ctx.array(np.atleast_1d(np.asarray(s, dtype=object)))
        p1 = self.degree + 1
        out = ctx.zeros((len(s_arr), p1))
        with ctx:
            if self.degree == 0:
                out[:] = ctx.scalar(1)
                return out
            for i, si in enumerate(s_arr):
                diff = si - self.nodes
                hit = np.nonzero(diff == 0)[0]
                if hit.size:
                    out[i, :] = ctx.scalar(0)
                    out[i, hit[0]] = ctx.scalar(1)
                    continue
                terms = self.weights / diff
                out[i, :] = terms / terms.sum()
        return out

    def at(self, s) -> np.ndarray:
        """Values ``lambda_k(s)`` at a single point; shape ``(p + 1,)``."""
        return self([s])[0]

    @property
    def values_at_zero(self) -> np.ndarray:
        """``lambda_k(0)`` for all k."""
        return self.at(self.ctx.scalar(0))

    @property
    def diff_matrix(self) -> np.ndarray:
        """``D[i, j] = lambda_j'(tau_i)``."""
        return _diff_matrix(self)

    def derivative_matrix(self, s, order: int) -> np.ndarray:
        """Values ``lambda_k^{(order)}(s)``; shape ``(len(s), p + 1)``."""
        L = self(s)
        if order == 0:
            return L
        if order > self.degree:
            return self.ctx.zeros(L.shape)
        D = self.diff_matrix
        with self.ctx:
            Dr = D
            for _ in range(order - 1):
                Dr = D @ Dr
            return L @ Dr

    @property
    def coefficients(self) -> np.ndarray:
        """Monomial coefficients, row k holds ``lambda_k`` (lowest first).

        Exposed for inspection only; evaluation uses the barycentric form.
        """
        ctx = self.ctx
        p1 = self.degree + 1
        with ctx:
            V = ctx.zeros((p1, p1))
            for i, t in enumerate(self.nodes):
                for j in range(p1):
                    V[i, j] = t**j
            return solve(V, ctx.identity(p1)).T


def _diff_matrix(basis: BasisSpec):
    ctx, tau, w = basis.ctx, basis.nodes, basis.weights
    p1 = basis.degree + 1
    D = ctx.zeros((p1, p1))
    with ctx:
        for i in range(p1):
            for j in range(p1):
                if i != j:
                    D[i, j] = (w[j] / w[i]) / (tau[i] - tau[j])
            D[i, i] = -D[i].sum() if p1 > 1 else ctx.scalar(0)
    return D


def _bary_weights(nodes, ctx):
    with ctx:
        w = ctx.ones(len(nodes))
        for j in range(len(nodes)):
            for k in range(len(nodes)):
                if k != j:
                    w[j] = w[j] / (nodes[j] - nodes[k])
    return w


@lru_cache(maxsize=None)
def lagrange_basis(p: int, node_family: str, ctx: PrecisionContext) -> BasisSpec:
    """Lagrange nodal basis of degree ``p`` on [0, 1].

    ``lobatto`` includes both endpoints (requires p >= 1), ``gauss`` uses the
    p + 1 Gauss-Legendre points, ``uniform`` uses ``k / p`` (``0`` for p = 0).
    """
    if p < 0:
        raise ValueError("degree must be nonnegative")
    if node_family not in NODE_FAMILIES:
        raise ValueError(f"unknown node family {node_family!r}")
    with ctx:
        half = ctx.scalar(1) / 2
        if node_family == "lobatto":
            if p < 1:
                raise ValueError("Gauss-Lobatto nodes need p >= 1")
            inner = _lobatto_interior_minus1_1(p, ctx)
            nodes = [ctx.scalar(0)] + [(x + 1) * half for x in inner] + [ctx.scalar(1)]
        elif node_family == "gauss":
            roots, _ = _gauss_legendre_minus1_1(p + 1, ctx)
            nodes = [(x + 1) * half for x in roots]
        else:
            nodes = [ctx.scalar(0)] if p == 0 else [ctx.scalar(k) / p for k in range(p + 1)]
        nodes = ctx.array(nodes)
    return BasisSpec(p, node_family, nodes, _bary_weights(nodes, ctx), ctx)


# -- quadrature ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials up to ``degree``."""

    points: np.ndarray
    weights: np.ndarray
    degree: int
    ctx: PrecisionContext

    @property
    def size(self) -> int:
        return len(self.points)


@lru_cache(maxsize=None)
def gauss_rule(n: int, ctx: PrecisionContext) -> QuadratureRule:
    if n < 1:
        raise ValueError("need at least one quadrature point")
    roots, weights = _gauss_legendre_minus1_1(n, ctx)
    with ctx:
        half = ctx.scalar(1) / 2
        pts = ctx.array([(x + 1) * half for x in roots])
        wts = ctx.array([w * half for w in weights])
    return QuadratureRule(pts, wts, 2 * n - 1, ctx)


def default_rule_size(q: int) -> int:
    """Gauss points per interval for a degree-q solve: ceil((2q + 3) / 2)."""
    return math.ceil((2 * q + 3) / 2)


def integrate(v, a, b, rule: QuadratureRule, panels: int = 1):
    """Composite quadrature of ``v`` over ``[a, b]``; ``v`` may be vector valued."""
    ctx = rule.ctx
    with ctx:
        a, b = ctx.scalar(a), ctx.scalar(b)
        if not a < b:
            raise ValueError("integration needs a < b")
        h = (b - a) / panels
        total = None
        for i in range(panels):
            left = a + i * h
            for x, w in zip(rule.points, rule.weights):
                term = w * h * np.asarray(v(left + x * h))
                total = term if total is None else total + term
    return total[()] if isinstance(total, np.ndarray) and total.ndim == 0 else total


# -- partitions -----------------------------------------------------------------


class Partition:
    """Time nodes ``0 = t_0 < t_1 < ... < t_M = T``."""

    def __init__(self, nodes, ctx: PrecisionContext):
        if ctx.native and isinstance(nodes, np.ndarray) and nodes.dtype == np.float64:
            nodes = np.ascontiguousarray(nodes)
        else:
            nodes = ctx.array(nodes)
        if len(nodes) < 2:
            raise ValueError("a partition needs at least one interval")
        self.nodes = nodes
        self.ctx = ctx
        self._widths = None
        if ctx.native:
            # widths are built on first use; long native sweeps never need them
            if not np.all(nodes[1:] > nodes[:-1]):
                raise ValueError("partition nodes must be strictly increasing")
            self._float_nodes = nodes
        else:
            if any(w <= 0 for w in self.widths):
                raise ValueError("partition nodes must be strictly increasing")
            self._float_nodes = nodes.astype(np.float64)

    @property
    def widths(self):
        """Interval lengths ``t_{m+1} - t_m``."""
        if self._widths is None:
            with self.ctx:
                self._widths = self.nodes[1:] - self.nodes[:-1]
        return self._widths

    @classmethod
    def uniform(cls, T, ctx: PrecisionContext, dt=None, steps: int | None = None):
        """Uniform partition of ``[0, T]``.

        Give either ``steps`` or ``dt``; with ``dt`` the number of steps is
        ``ceil(T / dt)`` (up to a relative slack of 1e-9) and the actual step is
        ``T / steps``.
        """
        with ctx:
            T = ctx.scalar(T)
            if steps is None:
                if dt is None:
                    raise ValueError("give dt or steps")
                ratio = float(T) / float(dt)
                steps = max(1, math.ceil(ratio * (1 - 1e-9)))
            if ctx.native:
                nodes = np.arange(steps + 1, dtype=np.float64)
                nodes /= steps
                nodes *= T
                nodes[-1] = T
            else:
                nodes = [T * m / steps for m in range(steps + 1)]
        return cls(nodes, ctx)

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def T(self):
        return self.nodes[-1]

    @property
    def min_width(self):
        return min(self.widths)

    def locate(self, t) -> int:
        """0-based index m of the interval (t_m, t_{m+1}] containing t."""
        tf = float(t)
        if tf < self._float_nodes[0] or tf > self._float_nodes[-1]:
            # float rounding may misplace t by an ulp; check exactly
            if t < self.nodes[0] or t > self.nodes[-1]:
                raise ValueError(f"t = {t} outside [0, T]")
        m = bisect.bisect_left(self._float_nodes, tf) - 1
        m = min(max(m, 0), self.M - 1)
        # fix float ties against the exact nodes
        while m > 0 and t <= self.nodes[m]:
            m -= 1
        while m < self.M - 1 and t > self.nodes[m + 1]:
            m += 1
        return m

    def refine(self, factor: int) -> "Partition":
        if factor == 1:
            return self
        ctx = self.ctx
        with ctx:
            nodes = [self.nodes[0]]
            for m in range(self.M):
                for r in range(1, factor + 1):
                    nodes.append(
                        self.nodes[m + 1] if r == factor
                        else self.nodes[m] + self.widths[m] * r / factor
                    )
        return Partition(nodes, ctx)

    def __len__(self):
        return self.M


# -- piecewise polynomials -------------------------------------------------------


class PiecewisePolynomial:
    """Vector-valued piecewise polynomial in nodal form.

    ``values[m, k]`` is the value at ``t_m + tau_k * dt_m`` (0-based m) on
    the interval ``(t_m, t_{m+1}]``. The function is left-continuous at
    breakpoints. ``initial`` is the value at ``t = 0`` itself; it defaults
    to the right limit so the jump at ``t_0`` vanishes.
    """

    def __init__(self, partition: Partition, basis: BasisSpec, values, initial=None):
        values = np.asarray(values)
        if values.shape[:2] != (partition.M, basis.degree + 1):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{partition.M} intervals of degree {basis.degree}"
            )
        self.partition = partition
        self.basis = basis
        self.values = values
        self.initial = values[0, 0].copy() if initial is None else np.asarray(initial)
        self.ctx = basis.ctx

    @property
    def degree(self) -> int:
        return self.basis.degree

    @property
    def dimension(self) -> int:
        return self.values.shape[2]

    def _local(self, t):
        part = self.partition
        m = part.locate(t)
        with self.ctx:
            s = (self.ctx.scalar(t) - part.nodes[m]) / part.widths[m]
        return m, s

    def evaluate(self, t) -> np.ndarray:
        """Value at ``t`` (left limit at interior breakpoints)."""
        with self.ctx:
            t = self.ctx.scalar(t)
            if t == self.partition.nodes[0]:
                return self.initial.copy()
            m, s = self._local(t)
            return self.basis.at(s) @ self.values[m]

    __call__ = evaluate

    def right_limit(self, m: int) -> np.ndarray:
        """``U(t_m^+)`` for 0-based interval index m (start of interval m)."""
        with self.ctx:
            return self.basis.values_at_zero @ self.values[m]

    def end_value(self, m: int) -> np.ndarray:
        """``U(t_{m+1})``, the value at the right end of interval m."""
        with self.ctx:
            return self.basis.at(self.ctx.scalar(1)) @ self.values[m]

    def jumps(self) -> np.ndarray:
        """``[U]_m = U(t_m^+) - U(t_m)`` for m = 0..M-1; shape (M, N)."""
        ctx = self.ctx
        with ctx:
            right = self.on_reference(ctx.array([0]))[:, 0, :]
            left = self.on_reference(ctx.array([1]))[:, 0, :]
            out = ctx.zeros(right.shape)
            out[0] = right[0] - self.initial
            out[1:] = right[1:] - left[:-1]
        return out

    def derivative(self, t, order: int = 1) -> np.ndarray:
        """Derivative of the containing interval's polynomial at ``t``."""
        if order < 0:
            raise ValueError("order must be nonnegative")
        ctx = self.ctx
        with ctx:
            t = ctx.scalar(t)
            if order > self.degree:
                self.partition.locate(t)
                return ctx.zeros(self.dimension)
            m, s = self._local(t)
            L = self.basis.derivative_matrix(ctx.array([s]), order)[0]
            return (L @ self.values[m]) / self.partition.widths[m] ** order

    def on_reference(self, s, order: int = 0) -> np.ndarray:
        """Values (or derivatives) at reference points ``s`` on every interval.

        Returns shape ``(M, len(s), N)``.
        """
        ctx = self.ctx
        with ctx:
            L = self.basis.derivative_matrix(s, order)
            out = np.matmul(L, self.values)
            if order:
                scale = self.partition.widths ** order
                out = out / scale[:, None, None]
        return out


def interpolate_pi(v, part: Partition, basis: BasisSpec) -> PiecewisePolynomial:
    """Nodal interpolant of ``v`` on each interval of ``part``.

    ``v`` maps a time scalar to a vector (or scalar). The result is
    left-continuous and takes the value ``v(0)`` at ``t = 0``.
    """
    ctx = basis.ctx
    rows = []
    with ctx:
        for m in range(part.M):
            rows.append([np.atleast_1d(v(part.nodes[m] + tau * part.widths[m]))
                         for tau in basis.nodes])
        values = ctx.array(rows)
        initial = ctx.array(np.atleast_1d(v(part.nodes[0])))
    return PiecewisePolynomial(part, basis, values, initial=initial)


def sample_norm_max(pp: PiecewisePolynomial, s) -> np.ndarray:
    """Per-interval max of the Euclidean norm over reference points ``s``."""
    with pp.ctx:
        return norms(pp.on_reference(s)).max(axis=1)
