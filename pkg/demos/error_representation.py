"""
Dual-weighted error representation on a linear system
=====================================================

For u' = A u both the exact solution and the dual are matrix exponentials,
so the representation of <z_T, U(T) - u(T)> can be checked to the last
digit, and every bound can be compared with the true error.
"""

import numpy as np

from cgq import (
    SolverConfig,
    assemble_bounds,
    discrete_residual,
    error_representation,
    estimate_quadrature_error,
    lagrange_basis,
    linear_test,
    make_context,
    solve_cg,
    solver_quadrature_basis,
    stability_factors,
)

ctx = make_context(64)
rng = np.random.default_rng(1)

# a random 3x3 system with spectral radius 1.5
A = rng.normal(size=(3, 3))
A *= 1.5 / max(abs(np.linalg.eigvals(A)))
lp = linear_test(A, [1, 0, 0], ctx)
z_T = [1.0, -2.0, 0.5]

for q in (1, 2, 3):
    traj = solve_cg(lp.problem, SolverConfig(q=q, ctx=ctx, dt=0.1), 1)
    dual = lp.dual(1, z_T)
    with ctx:
        true = (dual.z_T * (traj.evaluate(1) - lp.solution(1))).sum()
    rep = error_representation(traj, dual, lp.problem)

    # bounds with the testing degree p = q - 1
    basis = lagrange_basis(q - 1, "gauss", ctx)
    res = discrete_residual(traj, lp.problem, basis)
    sf = stability_factors(dual, basis, res.rule, traj.partition)
    eq = estimate_quadrature_error(dual, lp.problem, traj, solver_quadrature_basis(traj), sf.S_Q)
    eb = assemble_bounds(sf, res, 0, ctx, E_Q=eq)

    print(f"cG({q})  true {float(true):+.6e}  representation {float(rep):+.6e}"
          f"  rel. diff {float(abs(rep - true) / abs(true)):.1e}")
    print(f"        E_G {float(eb.E_G):.3e}  E_C {float(eb.E_C):.3e}  E_Q {float(eb.E_Q):.3e}"
          f"  total {float(eb.total):.3e}  (E_G mod C_p {float(eb.E_G_modCp):.3e})")
