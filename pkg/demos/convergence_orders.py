"""
Convergence of cG(q) at the end point
=====================================

On u' = -u the end-point error of cG(q) falls like dt^(2q). At 64 digits
round-off stays far below the discretization error for every step used
here, so the log-log slopes come out clean.
"""

import numpy as np

from cgq import SolverConfig, make_context, scalar_decay, solve_cg

ctx = make_context(64)
problem = scalar_decay(-1, 1, ctx)
exact = problem.solution(1)[0]

# one row per (q, dt); steps are powers of two so the partition is exact
rows = []
for q in (1, 2, 3):
    for k in range(3, 9):
        dt = ctx.scalar(2) ** -k
        U = solve_cg(problem.problem, SolverConfig(q=q, ctx=ctx, dt=dt), 1, store=False)
        with ctx:
            rows.append((q, 2.0 ** -k, float(abs(U[0] - exact))))

for q in (1, 2, 3):
    dts = np.array([r[1] for r in rows if r[0] == q])
    errs = np.array([r[2] for r in rows if r[0] == q])
    slope = np.polyfit(np.log10(dts), np.log10(errs), 1)[0]
    print(f"cG({q}): slope {slope:.3f}, error at dt=1/256 {errs[-1]:.3e}")

np.savetxt("convergence_orders.csv", np.array(rows), delimiter=",",
           header="q,dt,error", comments="")
