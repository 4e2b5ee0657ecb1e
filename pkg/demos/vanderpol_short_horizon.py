"""
Van der Pol with mu = 1000 on a short horizon
=============================================

The stiff relaxation oscillator needs Newton iterations on every interval.
On [0, 50] the solution sits on the slow branch. The dual and all bounds
are computed from the double-precision trajectory.
"""

import numpy as np

from cgq import SolverConfig, make_context, solve_cg, van_der_pol
from cgq.experiments import estimate_run

ctx = make_context(16)
problem = van_der_pol(mu=1000)
traj = solve_cg(problem, SolverConfig(q=2, ctx=ctx, dt=0.005), 50)
print(f"{traj.stats['intervals']} intervals, up to {traj.stats['max_iterations']} iterations each")

run = estimate_run(traj, problem)
for key, value in run["headline"].items():
    print(f"  {key:>12}: {value:.3e}")

# running S_C(t) of the first component's dual
_, sf, _ = run["items"][0]
profile = np.column_stack([traj.partition.nodes, sf.profile_C.astype(float)])
np.savetxt("vanderpol_stability.csv", profile, delimiter=",", header="t,S_C", comments="")
