import mpmath
import numpy as np
import pytest

from cgq.discretization import Partition
from cgq.numerics import make_context, to_float
from cgq.primal import NonConvergence, SolverConfig, method_tables, solve_cg
from cgq.problems import lorenz, scalar_decay, van_der_pol


def test_cg1_one_step_decay(ctx64):
    # cG(1) is the trapezoidal rule here: U1 = (1 - dt/2) / (1 + dt/2)
    p = scalar_decay(-1, 1, ctx64)
    U = solve_cg(p, SolverConfig(q=1, ctx=ctx64, dt=1), 1, store=False)
    with ctx64:
        assert abs(U[0] - ctx64.scalar(1) / 3) < 1e-70


def test_nodal_weights_reproduce_polynomials(ctx32):
    # for f(t) = t^k with k < 2q the nodal system integrates exactly
    tab = method_tables(3, 5, ctx32)
    with ctx32:
        for k in range(4):
            G = tab.x ** k
            Y = tab.W @ G
            want = tab.basis.nodes[1:] ** (k + 1) / (k + 1)
            assert max(abs(a - b) for a, b in zip(Y, want)) < 1e-35


@pytest.mark.parametrize("q", [1, 2, 3])
def test_compiled_and_generic_agree(q):
    ctx = make_context(16)
    cfg_fast = SolverConfig(q=q, ctx=ctx, dt=0.01)
    cfg_slow = SolverConfig(q=q, ctx=ctx, dt=0.01, fast=False)
    a = solve_cg(lorenz(), cfg_fast, 1)
    b = solve_cg(lorenz(), cfg_slow, 1)
    assert a.stats["path"] == "compiled" and b.stats["path"] == "generic"
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-12)


def test_lorenz_against_taylor_reference():
    ctx = make_context(32)
    with ctx:
        traj = solve_cg(lorenz(), SolverConfig(q=4, ctx=ctx, dt=ctx.scalar("0.005")), 1)
    mpmath.mp.dps = 30
    sol = mpmath.odefun(lambda t, u: [10 * (u[1] - u[0]), 28 * u[0] - u[1] - u[0] * u[2],
                                      u[0] * u[1] - mpmath.mpf(8) / 3 * u[2]], 0, [1, 0, 0])
    ref = [float(v) for v in sol(1)]
    assert np.allclose(to_float(traj(1)), ref, atol=1e-12)


def test_trajectory_is_continuous(ctx32):
    traj = solve_cg(lorenz(), SolverConfig(q=2, ctx=ctx32, dt=0.05), 0.5)
    assert all(v == 0 for v in traj.jumps().ravel())


def test_resume_matches_full_run(ctx16):
    cfg = SolverConfig(q=2, ctx=ctx16, dt=0.01)
    full = solve_cg(lorenz(), cfg, 1)
    head = full.values[:40]
    resumed = solve_cg(lorenz(), cfg, 1, resume=head)
    assert np.array_equal(resumed.values, full.values)


def test_on_intervals_streams_everything(ctx32):
    seen = []
    solve_cg(lorenz(), SolverConfig(q=1, ctx=ctx32, dt=0.1), 1,
             on_intervals=lambda m, b: seen.append((m, len(b))), store=False)
    assert sum(n for _, n in seen) == 10 and seen[0][0] == 0


def test_nonuniform_partition(ctx32):
    part = Partition(["0", "0.1", "0.35", "0.5", "1"], ctx32)
    p = scalar_decay(-1, 1, ctx32)
    traj = solve_cg(p, SolverConfig(q=3, ctx=ctx32, partition=part), 1)
    assert abs(float(traj(1)[0]) - np.exp(-1)) < 1e-6


def test_van_der_pol_needs_newton(ctx16):
    traj = solve_cg(van_der_pol(), SolverConfig(q=2, ctx=ctx16, dt=1e-3), 1)
    assert traj.stats["max_iterations"] > 3  # past the fixed-point sweeps
    with pytest.raises(NonConvergence) as err:
        solve_cg(van_der_pol(), SolverConfig(q=1, ctx=ctx16, dt=1.0, max_iter=5), 5)
    assert err.value.interval >= 0
    assert "smaller" in str(err.value)


def test_config_validation(ctx64):
    with pytest.raises(ValueError):
        SolverConfig(q=0)
    with pytest.raises(ValueError):
        SolverConfig(q=1, ctx=ctx64, tol_fp=1e-100)
    with pytest.raises(ValueError):
        solve_cg(lorenz(), SolverConfig(q=1, ctx=ctx64), 1)
    with pytest.raises(ValueError):
        solve_cg(lorenz(), SolverConfig(q=1, ctx=ctx64, dt=0.1), -1)


def test_precision_mismatch_problem(ctx16, ctx64):
    p = scalar_decay(-1, 1, ctx64)
    with pytest.raises(ValueError):
        solve_cg(p, SolverConfig(q=1, ctx=ctx16, dt=0.1), 1)
