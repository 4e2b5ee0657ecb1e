import gmpy2
import numpy as np
import pytest

from cgq.adjoint import (
    DualConfig,
    DualSingular,
    averaged_jacobian,
    dual_propagator,
    fit_growth_rate,
    solve_dual,
    stability_factors,
    stability_growth,
)
from cgq.discretization import (
    Partition,
    PiecewisePolynomial,
    default_rule_size,
    gauss_rule,
    lagrange_basis,
)
from cgq.numerics import sqrt, to_float
from cgq.primal import SolverConfig, solve_cg
from cgq.problems import ProblemDef, linear_test, lorenz, scalar_decay
from cgq.residual import default_residual_rule


def random_matrix(rng, N, radius=1.0):
    A = rng.normal(size=(N, N))
    return A * radius / max(abs(np.linalg.eigvals(A)))


def test_averaged_jacobian_linear(ctx32):
    lp = linear_test([[0, 1], [-3, 0.5]], [1, 1], ctx32)
    traj = solve_cg(lp.problem, SolverConfig(q=1, ctx=ctx32, dt=0.1), 1)
    a = averaged_jacobian(traj, lp.problem, "0.33")
    b = averaged_jacobian(traj, lp.problem, "0.33", "segment_quadrature", lp.solution)
    assert np.allclose(to_float(a), [[0, 1], [-3, 0.5]])
    assert np.allclose(to_float(b), [[0, 1], [-3, 0.5]])
    with pytest.raises(ValueError):
        averaged_jacobian(traj, lp.problem, 0, "segment_quadrature")


def test_averaged_jacobian_square(ctx32):
    # f(u) = u^2, U = 1, u = 0: int_0^1 2s ds = 1 = f(1) - f(0)
    prob = ProblemDef(1, lambda u, t=None: u * u, lambda u, t=None: 2 * u[..., None], (1,), "square")
    part = Partition.uniform(1, ctx32, steps=1)
    U = PiecewisePolynomial(part, lagrange_basis(0, "gauss", ctx32), ctx32.ones((1, 1, 1)))
    J = averaged_jacobian(U, prob, "0.5", "segment_quadrature", lambda t: [0])
    assert J[0, 0] == 1


def test_lorenz_jacobian_delegation(ctx32):
    part = Partition.uniform(1, ctx32, steps=1)
    vals = ctx32.array([[[1, 0, 0]]])
    U = PiecewisePolynomial(part, lagrange_basis(0, "gauss", ctx32), vals)
    J = averaged_jacobian(U, lorenz(), "0.5")
    assert np.allclose(to_float(J), lorenz().jacobian(np.array([1.0, 0, 0])))


def test_zero_jacobian_constant_dual(ctx32):
    prob = ProblemDef(2, lambda u, t=None: 0 * u, lambda u, t=None: 0 * u[..., None], (1, 2), "zero")
    traj = solve_cg(prob, SolverConfig(q=2, ctx=ctx32, dt=0.25), 1)
    z = solve_dual(traj, prob, ctx32.array([3, -1]))
    for t in ("0", "0.3", "1"):
        assert list(to_float(z.evaluate(t))) == [3.0, -1.0]


def test_scalar_decay_dual(ctx64):
    # -z' = -z, z(1) = 1  =>  z(t) = exp(t - 1), z(0) = 1/e
    p = scalar_decay(-1, 1, ctx64)
    traj = solve_cg(p.problem, SolverConfig(q=2, ctx=ctx64, dt=0.1), 1)
    z = solve_dual(traj, p.problem, ctx64.array([1]))
    assert z.evaluate(1)[0] == 1
    with ctx64:
        err = abs(z.evaluate(0)[0] - gmpy2.exp(ctx64.scalar(-1)))
    assert err < 1e-8


def test_dual_matches_matrix_exponential(ctx64):
    rng = np.random.default_rng(1)
    lp = linear_test(random_matrix(rng, 3, 1.5), [1, 0, 0], ctx64)
    traj = solve_cg(lp.problem, SolverConfig(q=3, ctx=ctx64, dt=0.05), 1)
    zT = ctx64.array([1, 2, 3])
    z = solve_dual(traj, lp.problem, zT)
    ref = lp.dual(1, zT)
    for t in ("0", "0.37", "0.9"):
        assert np.max(np.abs(to_float(z.evaluate(t)) - to_float(ref.evaluate(t)))) < 1e-9


def test_unit_terminal_gives_error_component(ctx64):
    rng = np.random.default_rng(2)
    lp = linear_test(random_matrix(rng, 3), [1, -1, 0.5], ctx64)
    traj = solve_cg(lp.problem, SolverConfig(q=1, ctx=ctx64, dt=0.125), 1)
    with ctx64:
        err = traj.evaluate(1) - lp.solution(1)
    for i in range(3):
        e = ctx64.zeros(3)
        e[i] = ctx64.scalar(1)
        with ctx64:
            assert (e * err).sum() == err[i]


def test_adjoint_consistency(ctx64):
    # <z(0), e(0)> = <z_T, e(T)> for exact solution differences of u' = Au
    rng = np.random.default_rng(3)
    A = random_matrix(rng, 2, 1.0)
    lp = linear_test(A, [1, 0], ctx64)
    lp2 = linear_test(A, [0.5, 0.25], ctx64)
    traj = solve_cg(lp.problem, SolverConfig(q=3, ctx=ctx64, dt=0.02), 1)
    zT = ctx64.array([0.3, -1.1])
    z = solve_dual(traj, lp.problem, zT, DualConfig(q_dual=8))
    with ctx64:
        lhs = (z.evaluate(0) * (lp.solution(0) - lp2.solution(0))).sum()
        rhs = (zT * (lp.solution(1) - lp2.solution(1))).sum()
        assert abs(lhs - rhs) <= 1e-32 * abs(rhs)


def test_time_reversal(ctx64):
    # the dual of u' = A^T u carries A back again: z(0) = exp(A) z_T = forward flow
    rng = np.random.default_rng(4)
    A = random_matrix(rng, 2)
    u0 = [1, -0.5]
    fwd = linear_test(A, u0, ctx64)
    uT = solve_cg(fwd.problem, SolverConfig(q=6, ctx=ctx64, dt=0.05), 1).evaluate(1)
    trans = linear_test(A.T, [0, 0], ctx64)
    traj = solve_cg(trans.problem, SolverConfig(q=1, ctx=ctx64, dt=0.05), 1)
    z0 = solve_dual(traj, trans.problem, ctx64.array(u0), DualConfig(q_dual=6)).evaluate(0)
    assert np.max(np.abs(to_float(z0) - to_float(uT))) < 1e-20


def test_constant_dual_factors(ctx32):
    part = Partition.uniform(1, ctx32, steps=4)
    b3 = lagrange_basis(3, "lobatto", ctx32)
    c = ctx32.array([3, 4])
    z = PiecewisePolynomial(part, b3, np.broadcast_to(c, (4, 4, 2)).copy())
    sf = stability_factors(z, lagrange_basis(0, "gauss", ctx32), gauss_rule(4, ctx32), part)
    for name, want in (("S_D", 5), ("S_G", 0), ("S_C", 5), ("S_Q", 5), ("S_C2", 5)):
        assert abs(float(getattr(sf, name)) - want) < 1e-28, name


def test_factor_invariants(ctx32):
    traj = solve_cg(lorenz(), SolverConfig(q=2, ctx=ctx32, dt=0.02), 2)
    prop = dual_propagator(traj, lorenz())
    b = lagrange_basis(1, "gauss", ctx32)
    rule = default_residual_rule(2, 1, ctx32)
    for e in np.eye(3):
        sf = stability_factors(prop.solution(ctx32.array(e)), b, rule, traj.partition)
        with ctx32:
            assert sf.S_C <= sqrt(ctx32.scalar(2)) * sf.S_C2
            assert all(v >= 0 for v in (sf.S_D, sf.S_G, sf.S_C, sf.S_C2, sf.S_Q))
        prof = to_float(sf.profile_C)
        assert np.all(np.diff(prof) >= 0)


def test_degenerate_dual_degree(ctx32):
    traj = solve_cg(lorenz(), SolverConfig(q=2, ctx=ctx32, dt=0.1), 0.5)
    z = solve_dual(traj, lorenz(), ctx32.array([1, 0, 0]), DualConfig(q_dual=1))
    with pytest.raises(ValueError):
        stability_factors(z, lagrange_basis(1, "gauss", ctx32), gauss_rule(4, ctx32), traj.partition)


def test_growth_matches_per_horizon_duals(ctx32):
    traj = solve_cg(lorenz(), SolverConfig(q=2, ctx=ctx32, dt=0.05), 2)
    prop = dual_propagator(traj, lorenz())
    T1 = traj.partition.nodes[20]
    g = stability_growth(prop, [T1, traj.partition.T])
    b = lagrange_basis(1, "gauss", ctx32)
    rule = gauss_rule(default_rule_size(prop.basis.degree), ctx32)
    sub = Partition(traj.partition.nodes[:21], ctx32)
    z = prop.solution(ctx32.array([1, 0, 0]), T=T1)
    sf = stability_factors(z, b, rule, sub)
    assert np.isclose(g[0, 0], float(sf.S_C), rtol=1e-10)
    assert np.all(g[1] >= 0)


def test_fit_growth_rate():
    t = np.linspace(0, 10, 11)
    assert np.isclose(fit_growth_rate(t, 10 ** (0.4 * t + 1)), 0.4)
    assert np.isclose(fit_growth_rate(t, 10 ** (0.4 * t), window=(5, 10)), 0.4)
    with pytest.raises(ValueError):
        fit_growth_rate([1], [1])


def test_singular_interval(ctx32):
    # cG(1) dual block for z' = -20 z with dt = 0.1 is 1 - dt * 20 / 2 = 0
    prob = scalar_decay(20, 1, ctx32).problem
    part = Partition.uniform(ctx32.scalar("0.3"), ctx32, steps=3)
    U = PiecewisePolynomial(part, lagrange_basis(1, "lobatto", ctx32), ctx32.ones((3, 2, 1)))
    with pytest.raises(DualSingular) as err:
        solve_dual(U, prob, ctx32.array([1]), DualConfig(p=0, q_dual=1))
    assert err.value.interval == 2
