"""
Where round-off overtakes discretization error
==============================================

cG(1) in double precision on Lorenz up to T = 10, compared with a 64-digit
cG(3) reference. Refining the step first lowers the error like dt^2. Below
some step the accumulated round-off, growing like dt^(-1/2), takes over.
At T = 10 the curve only levels off near dt = 1e-7, where the error of the
default reference (about 1e-11) is of the same size.

The step range goes down to 5e-8, i.e. 2e8 intervals per solve. This takes
several minutes. Pass a smaller number of decades as the first argument to
stop earlier.
"""

import sys

import numpy as np

from cgq import make_context, predict_optimal_dt
from cgq.experiments import error_sweep, reference_endpoint, v_shape

decades = float(sys.argv[1]) if len(sys.argv) > 1 else 5.33
dts = list(np.logspace(-2, -2 - decades, int(round(3 * decades)) + 1))

ref_ctx, ref = reference_endpoint("lorenz", 10, 3, 64, 0.0025)
rows = error_sweep("lorenz", 10, 1, 16, dts, ref_ctx, ref, jitter=3)
fit = v_shape([r["dt"] for r in rows], [r["error"] for r in rows])

for r in rows:
    print(f"dt={r['dt']:.2e}  error={r['error']:.3e}  ({r['seconds']:.1f} s)")
print(f"smallest error {fit['min_error']:.2e} at dt={fit['argmin_dt']:.2e}")
print(f"slopes: discretization {fit['slope_discretization']}, round-off {fit['slope_roundoff']}")
print(f"a priori optimal step: {predict_optimal_dt(1, make_context(16)):.2e}")

np.savetxt("roundoff_v_shape.csv", np.array([(r["dt"], r["error"]) for r in rows]),
           delimiter=",", header="dt,error", comments="")
