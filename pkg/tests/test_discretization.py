import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgq.discretization import (
    Partition,
    PiecewisePolynomial,
    default_rule_size,
    gauss_rule,
    integrate,
    interpolate_pi,
    lagrange_basis,
)
from cgq.numerics import make_context, to_float


def test_lobatto_p3_nodes(ctx64):
    b = lagrange_basis(3, "lobatto", ctx64)
    r5 = mpmath.sqrt(5)
    with mpmath.workdps(80):
        r5 = mpmath.sqrt(5)
        want = [0, (1 - 1 / r5) / 2, (1 + 1 / r5) / 2, 1]
        err = max(abs(mpmath.mpf(str(x)) - w) for x, w in zip(b.nodes, want))
    assert err < mpmath.mpf(10) ** -70


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_gauss_rule_matches_numpy(n, ctx16):
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_rule(n, ctx16)
    assert np.allclose(r.points, (x + 1) / 2, atol=1e-15)
    assert np.allclose(r.weights, w / 2, atol=1e-15)


def test_gauss_exactness_high_precision(ctx64):
    r = gauss_rule(6, ctx64)
    with ctx64:
        for k in range(12):
            s = sum(w * x ** k for x, w in zip(r.points, r.weights))
            assert abs(s - ctx64.scalar(1) / (k + 1)) < 1e-70
        s = sum(w * x ** 12 for x, w in zip(r.points, r.weights))
        assert abs(s - ctx64.scalar(1) / 13) > 1e-20


def test_default_rule_size():
    assert [default_rule_size(q) for q in (1, 2, 3, 100)] == [3, 4, 5, 102]


@pytest.mark.parametrize("family,p", [("lobatto", 1), ("lobatto", 4), ("gauss", 0), ("gauss", 3),
                                      ("uniform", 0), ("uniform", 2)])
def test_partition_of_unity_and_kronecker(family, p, ctx32):
    b = lagrange_basis(p, family, ctx32)
    L = b(b.nodes)
    assert np.allclose(to_float(L), np.eye(p + 1))
    pts = ctx32.array(["0.1", "0.37", "0.9"])
    with ctx32:
        sums = b(pts).sum(axis=1)
    assert all(abs(s - 1) < 1e-35 for s in sums)


def test_bad_basis():
    ctx = make_context(16)
    with pytest.raises(ValueError):
        lagrange_basis(0, "lobatto", ctx)
    with pytest.raises(ValueError):
        lagrange_basis(2, "chebyshev", ctx)


def test_uniform_p0_node_at_zero(ctx16):
    assert lagrange_basis(0, "uniform", ctx16).nodes[0] == 0


def test_derivatives_of_monomial(ctx32):
    # interpolate s^3 exactly with a cubic and differentiate twice: 6 s
    b = lagrange_basis(3, "lobatto", ctx32)
    with ctx32:
        vals = b.nodes ** 3
        s = ctx32.array(["0.25", "0.8"])
        d2 = b.derivative_matrix(s, 2) @ vals
        assert abs(d2[0] - ctx32.scalar("1.5")) < 1e-30
        assert abs(d2[1] - ctx32.scalar("4.8")) < 1e-30
        assert all(v == 0 for v in b.derivative_matrix(s, 4).ravel())


def test_coefficients(ctx32):
    b = lagrange_basis(1, "lobatto", ctx32)
    C = to_float(b.coefficients)
    assert np.allclose(C, [[1, -1], [0, 1]])


def test_high_degree_basis_stays_accurate():
    ctx = make_context(100)
    b = lagrange_basis(40, "lobatto", ctx)
    with ctx:
        vals = ctx.array([mp_exp(x, ctx) for x in b.nodes])
        s = ctx.scalar("0.3141")
        approx = b.at(s) @ vals
        assert abs(approx - mp_exp(s, ctx)) < 1e-60


def mp_exp(x, ctx):
    import gmpy2

    with ctx:
        return gmpy2.exp(x)


def test_integrate_composite(ctx32):
    r = gauss_rule(4, ctx32)
    with ctx32:
        val = integrate(lambda t: t ** 7, 0, 2, r, panels=3)
    assert abs(val - 32) < 1e-28
    with pytest.raises(ValueError):
        integrate(lambda t: t, 1, 0, r)


def test_uniform_partition_step_count(ctx16):
    p = Partition.uniform(1, ctx16, dt=0.1)
    assert p.M == 10 and p.T == 1
    p = Partition.uniform(1, ctx16, dt=0.3)
    assert p.M == 4
    assert math.isclose(p.widths[0], 0.25)


def test_partition_rejects_unsorted(ctx16):
    with pytest.raises(ValueError):
        Partition([0, 0.5, 0.4, 1], ctx16)
    with pytest.raises(ValueError):
        Partition([0], ctx16)


def test_locate_left_continuous(ctx16):
    p = Partition([0, 0.5, 1.0], ctx16)
    assert p.locate(0.0) == 0
    assert p.locate(0.5) == 0
    assert p.locate(0.5000001) == 1
    assert p.locate(1.0) == 1
    with pytest.raises(ValueError):
        p.locate(1.5)


def test_refine(ctx32):
    p = Partition.uniform(1, ctx32, steps=3).refine(4)
    assert p.M == 12
    with ctx32:
        assert abs(p.widths[5] - ctx32.scalar(1) / 12) < 1e-35


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.01, 0.99))
def test_interpolation_exact_for_cubics(coefs, t):
    ctx = make_context(16)
    part = Partition.uniform(1, ctx, steps=3)
    b = lagrange_basis(3, "lobatto", ctx)

    def v(x):
        return np.array([sum(c * x ** k for k, c in enumerate(coefs))])

    pp = interpolate_pi(v, part, b)
    assert np.allclose(pp(t), v(t), atol=1e-11)
    assert np.allclose(to_float(pp.jumps()), 0, atol=1e-12)


def test_piecewise_jumps_and_limits(ctx16):
    part = Partition([0, 1, 2], ctx16)
    b = lagrange_basis(1, "lobatto", ctx16)
    vals = np.array([[[0.0], [1.0]], [[3.0], [4.0]]])
    pp = PiecewisePolynomial(part, b, vals, initial=np.array([-1.0]))
    assert pp(0.0)[0] == -1.0
    assert pp(1.0)[0] == 1.0
    assert pp.right_limit(1)[0] == 3.0
    assert np.allclose(pp.jumps()[:, 0], [1.0, 2.0])
    assert pp.derivative(1.5)[0] == 1.0
    with pytest.raises(ValueError):
        PiecewisePolynomial(part, b, vals[:1])
