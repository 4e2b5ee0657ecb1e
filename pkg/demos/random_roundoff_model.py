"""
Random round-off model
======================

Replacing every discrete residual by +-eps with a fair coin turns the
computational error into a weighted random walk. Its RMS is
eps * sqrt(sum z^2), which for a constant dual grows like dt^(-1/2)
instead of the worst-case dt^(-1).
"""

import math

import numpy as np

from cgq.stochastic import (
    NoiseModel,
    constant_weights,
    random_walk_asymptotic,
    random_walk_exact,
    random_walk_expectation,
    rms_scaling_sweep,
    simulate_ec,
)

noise = NoiseModel(eps=2.0 ** -53, seed=7)
dts = np.logspace(-4, -2, 5)
out = rms_scaling_sweep(lambda dt: constant_weights(dt), dts, noise, 10 ** 4, S_C2=1.0)
print(f"RMS slope against dt: {out['slope']:.3f}")
for r in out["rows"]:
    worst = noise.eps / r["dt"]
    print(f"  dt={r['dt']:.1e}  rms={r['rms']:.3e}  exact={r['exact_rms']:.3e}  worst case={worst:.3e}")

# the mean distance of a fair walk after M steps
for M in (1, 4, 100, 10 ** 4):
    exact = float(random_walk_exact(M)) if M <= 10 ** 4 else math.nan
    print(f"M={M:>5}: E|walk| = {exact:.4f}, sampled {random_walk_expectation(M, 10 ** 5):.4f},"
          f" sqrt(2M/pi) = {random_walk_asymptotic(M):.4f}")

# correlated signs keep the dt^(-1/2) law for a constant dual but inflate
# the amplitude by about sqrt((1 + rho) / (1 - rho))
weights = constant_weights(1e-3)
base = simulate_ec(weights, NoiseModel(eps=1.0, seed=7), 2000).rms
for rho in (0.5, 0.9):
    rms = simulate_ec(weights, NoiseModel(eps=1.0, seed=7, rho=rho), 2000).rms
    print(f"rho={rho}: rms ratio {rms / base:.2f}, predicted {math.sqrt((1 + rho) / (1 - rho)):.2f}")
