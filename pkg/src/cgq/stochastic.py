"""Monte Carlo model of round-off in the discrete residuals.

Every discrete residual component is replaced by ``eps * x`` with ``x = +1``
or ``-1`` at random, and the computational error becomes the random sum

    E_C = eps * sum_{m, k, i} z_i(t_m + tau_k dt_m) x_{mki}.

Each trial draws from its own Philox substream keyed by ``(seed, trial)``,
so a given trial is the same no matter how trials are batched.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseModel:
    """Sign noise of size ``eps``.

    ``rho`` in [0, 1) makes consecutive signs (in flattened m, k, i order)
    a Markov chain with lag-one correlation ``rho``; 0 gives independent
    signs.
    """

    eps: float = 1.0
    seed: int = 0
    rho: float = 0.0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")

    def generator(self, trial: int) -> np.random.Generator:
        key = np.array([self.seed & _MASK, trial & _MASK], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def signs(self, trial: int, size: int) -> np.ndarray:
        """``size`` signs of one trial, as float64 +-1."""
        g = self.generator(trial)
        if self.rho == 0:
            return 1.0 - 2.0 * g.integers(0, 2, size=size, dtype=np.int8)
        first = 1.0 - 2.0 * g.integers(0, 2)
        flips = g.random(size - 1) < (1 - self.rho) / 2
        parity = np.concatenate([[0], np.cumsum(flips) & 1])
        return first * (1.0 - 2.0 * parity)


@dataclass
class ECSamples:
    samples: np.ndarray
    noise: NoiseModel

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.samples)))

    @property
    def variance(self) -> float:
        return float(np.var(self.samples, ddof=1)) if len(self.samples) > 1 else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "E_C"])
            for i, v in enumerate(self.samples):
                w.writerow([i, repr(float(v))])


def simulate_ec(dual_weights, noise: NoiseModel, trials: int, batch: int = 256) -> ECSamples:
    """Sample ``E_C = eps * sum z x`` over ``trials`` independent trials.

    ``dual_weights`` holds z at all testing nodes, any shape ending in N
    (typically (M, p + 1, N)); it is flattened in C order.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    z = np.asarray(dual_weights, dtype=np.float64).ravel()
    out = np.empty(trials)
    for t in range(trials):
        out[t] = noise.eps * float(noise.signs(t, z.size) @ z) if z.size else 0.0
    return ECSamples(out, noise)


def expected_rms(dual_weights, eps) -> float:
    """``eps * sqrt(sum z^2)``: the exact RMS of independent sign noise."""
    z = np.asarray(dual_weights, dtype=np.float64)
    return float(eps * np.sqrt(np.sum(z * z)))


def slope_fit(x, y) -> float:
    """Least-squares slope of ``log10 y`` against ``log10 x``."""
    x = np.log10(np.asarray(x, dtype=float))
    y = np.log10(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def constant_weights(dt: float, T: float = 1.0, p: int = 0, N: int = 1, value: float = 1.0):
    """Dual weights of ``z = value`` on a uniform partition of [0, T]."""
    M = max(1, round(T / dt))
    return np.full((M, p + 1, N), value)


def rms_scaling_sweep(weights_for, dts, noise: NoiseModel, trials: int, S_C2=None,
                      min_decades: float = 1.0):
    """Empirical RMS of E_C against the step size.

    ``weights_for(dt)`` returns the dual node weights for step ``dt`` (for
    instance from a stored dual, or :func:`constant_weights`). Returns a
    dict with rows (dt, rms, mean_abs, exact rms, bound ``S_C2 eps/sqrt(dt)``)
    and the fitted log-log slope of rms against dt.
    """
    dts = sorted(float(d) for d in dts)
    if len(dts) < 3:
        raise ValueError("need at least three step sizes")
    if math.log10(dts[-1] / dts[0]) < min_decades:
        raise ValueError(f"step sizes must span at least {min_decades} decade(s)")
    rows = []
    for dt in dts:
        w = weights_for(dt)
        s = simulate_ec(w, noise, trials)
        bound = None if S_C2 is None else float(S_C2 * noise.eps / math.sqrt(dt))
        rows.append({"dt": dt, "rms": s.rms, "mean_abs": s.mean_abs,
                     "variance": s.variance, "exact_rms": expected_rms(w, noise.eps),
                     "bound": bound})
    slope = slope_fit([r["dt"] for r in rows], [r["rms"] for r in rows])
    return {"rows": rows, "slope": slope, "seed": noise.seed, "trials": trials,
            "eps": noise.eps, "rho": noise.rho}


def write_sweep(result: dict, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            keys = ["dt", "rms", "mean_abs", "variance", "exact_rms", "bound"]
            w.writerow(keys)
            for r in result["rows"]:
                w.writerow(["" if r[k] is None else repr(r[k]) for k in keys])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- random walks ---------------------------------------------------------------------


def random_walk_expectation(M: int, trials: int, seed: int = 0) -> float:
    """Sample mean of ``|x_1 + ... + x_M|`` for independent fair signs.

    The sum of M fair signs equals ``2 B - M`` with B binomial(M, 1/2), which
    is how it is sampled.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    g = np.random.Generator(np.random.Philox(key=np.array([seed & _MASK, 0], dtype=np.uint64)))
    walk = 2 * g.binomial(M, 0.5, size=trials) - M
    return float(np.mean(np.abs(walk)))


def random_walk_exact(M: int) -> Fraction:
    """``E|x_1 + ... + x_M|`` exactly, summing over the binomial distribution."""
    if M < 1:
        raise ValueError("M must be at least 1")
    total = sum(math.comb(M, k) * abs(2 * k - M) for k in range(M + 1))
    return Fraction(total, 2 ** M)


def random_walk_enumerate(M: int) -> Fraction:
    """Same as :func:`random_walk_exact` by listing all 2^M sign sequences."""
    if M > 20:
        raise ValueError("enumeration is limited to M <= 20")
    total = 0
    for bits in range(2 ** M):
        ones = bin(bits).count("1")
        total += abs(2 * ones - M)
    return Fraction(total, 2 ** M)


def random_walk_asymptotic(M: int) -> float:
    return math.sqrt(2 * M / math.pi)
