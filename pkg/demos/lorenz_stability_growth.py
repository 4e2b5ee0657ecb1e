"""
Exponential growth of the Lorenz stability factor
=================================================

S_C(T) measures how residuals committed anywhere in [0, T] are amplified
at the final time. For Lorenz it grows like 10^(rate T). Each final time
T' gets its own dual, and all of them reuse the interval maps of a single
backward sweep. A growth rate r gives a computability horizon of about
n_digits / r for a given precision.

Run time is about a minute at the default settings.
"""

import sys

import numpy as np

from cgq import predict_computability
from cgq.adjoint import fit_growth_rate
from cgq.experiments import lorenz_growth

T = float(sys.argv[1]) if len(sys.argv) > 1 else 30.0

times, per_component, headline = lorenz_growth(T, 0.005, q=3, digits=64,
                                               final_times=list(range(1, int(T) + 1)))
rate = fit_growth_rate(times, headline, (5, T))
print(f"log10 S_C grows at {rate:.3f} per unit time on [5, {T:g}]")
for digits in (16, 64, 420):
    print(f"  {digits:>3} digits: computable to T ~ {predict_computability(digits, rate):.0f}")

np.savetxt("lorenz_stability_growth.csv",
           np.column_stack([times, headline, per_component]), delimiter=",",
           header="T,S_C_max,S_C_x,S_C_y,S_C_z", comments="")
