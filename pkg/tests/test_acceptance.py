"""Acceptance criteria. Each test prints one PASS/FAIL line with the numbers
it measured; the lines are repeated in the terminal summary.

Tolerances are pinned here and must not be loosened to turn a line green.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from cgq.adjoint import dual_propagator, stability_factors
from cgq.discretization import lagrange_basis
from cgq.estimator import (
    assemble_bounds,
    error_representation,
    estimate_quadrature_error,
    predict_computability,
    predict_optimal_dt,
    solver_quadrature_basis,
)
from cgq.experiments import error_sweep, lorenz_growth, reference_endpoint, v_shape
from cgq.numerics import make_context, to_float
from cgq.adjoint import fit_growth_rate
from cgq.primal import SolverConfig, solve_cg
from cgq.problems import linear_test, lorenz, scalar_decay
from cgq.residual import default_residual_rule, discrete_residual
from cgq.stochastic import (
    NoiseModel,
    constant_weights,
    random_walk_asymptotic,
    random_walk_enumerate,
    random_walk_expectation,
    rms_scaling_sweep,
    simulate_ec,
)

# pinned tolerances
GALERKIN_FACTOR = 100
ORDER_TOL = 0.1
RMS_SLOPE_TOL = 0.05
VARIANCE_RTOL = 0.05
DISC_SLOPE = (2.0, 0.3)
ROUNDOFF_SLOPE = (-0.5, 0.25)
OPTIMAL_DT_FACTOR = 10
GROWTH_WINDOW = (0.30, 0.50)
REPRESENTATION_RTOL = 1e-10
WALK_RTOL = 0.01


def random_system(rng, N, radius):
    A = rng.normal(size=(N, N))
    return A * rng.uniform(0.1, radius) / max(abs(np.linalg.eigvals(A)))


def test_c1_galerkin_orthogonality(criterion):
    ctx = make_context(64)
    worst = []
    for q in (1, 2, 3):
        cfg = SolverConfig(q=q, ctx=ctx, dt=ctx.scalar("0.01"))
        traj = solve_cg(lorenz(), cfg, 1)
        res = discrete_residual(traj, lorenz())
        worst.append((float(res.max_rbar), float(GALERKIN_FACTOR * cfg.tol_fp)))
    ok = all(r <= b for r, b in worst)
    detail = ", ".join(f"q={q}: max|Rbar|={r:.2e} (limit {b:.2e})" for q, (r, b) in zip((1, 2, 3), worst))
    criterion(1, ok, detail)
    assert ok


def test_c2_convergence_orders(criterion):
    ctx = make_context(64)
    p = scalar_decay(-1, 1, ctx)
    exact = p.solution(1)[0]
    slopes = {}
    for q in (1, 2, 3):
        dts, errs = [], []
        for k in range(3, 9):
            dt = ctx.scalar(2) ** -k
            U = solve_cg(p.problem, SolverConfig(q=q, ctx=ctx, dt=dt), 1, store=False)
            with ctx:
                errs.append(float(abs(U[0] - exact)))
            dts.append(2.0 ** -k)
        slopes[q] = float(np.polyfit(np.log10(dts), np.log10(errs), 1)[0])
    ok = all(abs(slopes[q] - 2 * q) <= ORDER_TOL for q in slopes)
    criterion(2, ok, ", ".join(f"q={q}: slope {s:.3f} (want {2 * q} +- {ORDER_TOL})"
                               for q, s in slopes.items()))
    assert ok


def test_c3_roundoff_model_scaling(criterion):
    dts = np.logspace(-4, -2, 5)
    noise = NoiseModel(eps=2.0 ** -53, seed=2024)
    out = rms_scaling_sweep(lambda dt: constant_weights(dt), dts, noise, 10 ** 4, S_C2=1.0)
    ratios = [r["variance"] / r["exact_rms"] ** 2 for r in out["rows"]]
    slope_ok = abs(out["slope"] + 0.5) <= RMS_SLOPE_TOL
    var_ok = all(abs(v - 1) <= VARIANCE_RTOL for v in ratios)
    ok = slope_ok and var_ok
    criterion(3, ok, f"slope {out['slope']:.4f} (want -0.5 +- {RMS_SLOPE_TOL}); "
                     f"variance/(eps^2 sum z^2) in [{min(ratios):.4f}, {max(ratios):.4f}]")
    assert ok


@pytest.fixture(scope="module")
def lorenz_sweep():
    """cG(1) 16-digit Lorenz errors at T = 10 against a 64-digit cG(3) reference."""
    ref_ctx, ref = reference_endpoint("lorenz", 10, 3, 64, 0.0025)
    dts = list(np.logspace(-5, -2, 10))
    rows = error_sweep("lorenz", 10, 1, 16, dts, ref_ctx, ref, jitter=5)
    return rows, v_shape([r["dt"] for r in rows], [r["error"] for r in rows])


@pytest.mark.slow
def test_c4_solver_roundoff_v_shape(criterion, lorenz_sweep):
    rows, fit = lorenz_sweep
    sd, sr = fit["slope_discretization"], fit["slope_roundoff"]
    disc_ok = sd is not None and abs(sd - DISC_SLOPE[0]) <= DISC_SLOPE[1]
    round_ok = sr is not None and abs(sr - ROUNDOFF_SLOPE[0]) <= ROUNDOFF_SLOPE[1]
    ok = fit["interior_min"] and disc_ok and round_ok
    sr_text = "none (no point below the minimizer)" if sr is None else f"{sr:.3f}"
    criterion(4, ok, f"min error {fit['min_error']:.2e} at dt={fit['argmin_dt']:.2e} "
                     f"(interior: {fit['interior_min']}); discretization slope {sd:.3f}, "
                     f"round-off slope {sr_text}")
    assert ok


@pytest.mark.slow
def test_c5_optimal_step(criterion, lorenz_sweep):
    _, fit = lorenz_sweep
    base = predict_optimal_dt(1, 1e-16)
    # stability ratio S_C / S_G of the T = 10 duals (componentwise max)
    ctx = make_context(16)
    traj = solve_cg(lorenz(), SolverConfig(q=1, ctx=ctx, dt=1e-3), 10)
    prop = dual_propagator(traj, lorenz())
    basis = lagrange_basis(0, "gauss", ctx)
    rule = default_residual_rule(1, 0, ctx)
    sfs = [stability_factors(prop.solution(e), basis, rule, traj.partition) for e in np.eye(3)]
    ratio = max(float(s.S_C) for s in sfs) / max(float(s.S_G) for s in sfs)
    adjusted = predict_optimal_dt(1, 1e-16, stability_ratio=ratio)
    found = fit["argmin_dt"]
    factor = max(found / adjusted, adjusted / found)
    ok = factor <= OPTIMAL_DT_FACTOR
    criterion(5, ok, f"empirical argmin dt={found:.2e}; predicted {base:.2e} (base), "
                     f"{adjusted:.2e} (adjusted, S_C/S_G={ratio:.3g}); factor {factor:.1f} "
                     f"(limit {OPTIMAL_DT_FACTOR})")
    assert ok


@pytest.mark.slow
def test_c6_lorenz_stability_growth(criterion):
    times, _, head = lorenz_growth(30, 0.005, q=3, digits=64, final_times=list(range(5, 31)))
    rate = fit_growth_rate(times, head, (5, 30))
    ok = GROWTH_WINDOW[0] <= rate <= GROWTH_WINDOW[1]
    criterion(6, ok, f"log10 S_C growth rate {rate:.4f} per unit time over [5, 30] "
                     f"(want {GROWTH_WINDOW}); S_C(5)={head[0]:.3g}, S_C(30)={head[-1]:.3g}")
    assert ok


def test_c7_representation_exactness(criterion):
    ctx = make_context(64)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        A = random_system(rng, 3, 2.0)
        lp = linear_test(A, rng.normal(size=3), ctx)
        zT = rng.normal(size=3)
        q = int(rng.integers(1, 4))
        dt = float(rng.choice([1 / 4, 1 / 8, 1 / 16]))
        traj = solve_cg(lp.problem, SolverConfig(q=q, ctx=ctx, dt=dt), 1)
        dual = lp.dual(1, zT)
        with ctx:
            truth = (dual.z_T * (traj.evaluate(1) - lp.solution(1))).sum()
            rep = error_representation(traj, dual, lp.problem)
            worst = max(worst, float(abs(rep - truth) / abs(truth)))
    ok = worst <= REPRESENTATION_RTOL
    criterion(7, ok, f"worst relative deviation {worst:.2e} over 20 systems "
                     f"(limit {REPRESENTATION_RTOL:.0e})")
    assert ok


def test_c8_bound_validity(criterion):
    ctx = make_context(32)
    rng = np.random.default_rng(8)
    covered = covered_no_q = 0
    tightest = math.inf
    for _ in range(100):
        N = int(rng.integers(2, 4))
        lp = linear_test(random_system(rng, N, 2.0), rng.normal(size=N), ctx)
        zT = rng.normal(size=N)
        q = int(rng.integers(1, 4))
        dt = float(rng.choice([1 / 4, 1 / 8, 1 / 16]))
        traj = solve_cg(lp.problem, SolverConfig(q=q, ctx=ctx, dt=dt), 1)
        dual = lp.dual(1, zT)
        basis = lagrange_basis(q - 1, "gauss", ctx)
        res = discrete_residual(traj, lp.problem, basis)
        sf = stability_factors(dual, basis, res.rule, traj.partition)
        eq = estimate_quadrature_error(dual, lp.problem, traj, solver_quadrature_basis(traj), sf.S_Q)
        eb = assemble_bounds(sf, res, 0, ctx, E_Q=eq)
        with ctx:
            err = abs((dual.z_T * (traj.evaluate(1) - lp.solution(1))).sum())
            covered += bool(err <= eb.total)
            covered_no_q += bool(err <= eb.E_D + eb.E_G + eb.E_C)
            if err > 0:
                tightest = min(tightest, float(eb.total / err))
    ok = covered == 100
    criterion(8, ok, f"bound >= |error| in {covered}/100 configs ({covered_no_q}/100 "
                     f"without E_Q); smallest bound/error ratio {tightest:.6f}")
    assert ok


def test_c9_computability_rule(criterion):
    a = predict_computability(16, 0.4)
    b = predict_computability(400, 0.4)
    exact = Fraction(a) == 40 and Fraction(b) == 1000
    criterion(9, exact, f"T(16 digits)={a!r}, T(400 digits)={b!r} at rate 0.4")
    assert exact


def test_c10_random_walk(criterion):
    e4 = random_walk_enumerate(4)
    M = 10 ** 4
    mean = random_walk_expectation(M, 10 ** 5, seed=10)
    rel = abs(mean / random_walk_asymptotic(M) - 1)
    ok = e4 == Fraction(3, 2) and rel <= WALK_RTOL
    criterion(10, ok, f"M=4 enumeration {e4}; M=1e4 mean {mean:.3f} vs "
                      f"sqrt(2M/pi)={random_walk_asymptotic(M):.3f} (rel {rel:.2e}, limit {WALK_RTOL})")
    assert ok
