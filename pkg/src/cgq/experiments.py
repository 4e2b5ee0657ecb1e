"""Experiment pipelines shared by the command line, the demos and the tests.

Configs are flat key-value tables (TOML files on disk). Each config has a
sha256 hash over its canonical JSON form, which is written into every output
so results can be traced back to the settings that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adjoint import (
    DualConfig,
    dual_propagator,
    fit_growth_rate,
    stability_factors,
    stability_growth,
    unit_vectors,
)
from .discretization import lagrange_basis
from .estimator import (
    assemble_bounds,
    estimate_quadrature_error,
    predict_optimal_dt,
    solver_quadrature_basis,
)
from .numerics import make_context, norms
from .primal import SolverConfig, solve_cg
from .problems import by_label
from .residual import discrete_residual

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)


def _listify(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    """Settings of one experiment. Keys map one-to-one onto TOML keys.

    ``dt`` and ``digits`` may be lists for sweeps. The reference solution
    used to measure errors runs at ``ref_digits`` (default twice the
    largest working precision, at least 32), degree ``q + ref_q_bump``
    and step ``ref_dt`` (default half the smallest step).
    """

    problem: str = "lorenz"
    mu: float = 1000
    T: float = 1.0
    q: object = 1
    dt: object = 0.01
    digits: object = 16
    p: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    trials: int = 1000
    out: str = "runs"
    zT: str = "units"
    refine: int = 1
    ref_digits: Optional[int] = None
    ref_q_bump: int = 2
    ref_dt: Optional[float] = None
    jitter: int = 1
    growth_times: Optional[list] = None
    growth_window: Optional[list] = None
    mc_dts: Optional[list] = None
    workers: int = 1
    long_run_seconds: float = 120.0
    confirm_long: bool = False

    # keys that do not influence numbers
    _NON_NUMERIC = ("out", "workers", "confirm_long", "long_run_seconds")

    @classmethod
    def from_toml(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict({**data, **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        d = {k: v for k, v in self.as_dict().items() if k not in self._NON_NUMERIC}
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def dts(self) -> list:
        return [float(v) for v in _listify(self.dt)]

    @property
    def digit_list(self) -> list:
        return [int(v) for v in _listify(self.digits)]

    @property
    def qs(self) -> list:
        return [int(v) for v in _listify(self.q)]

    def make_problem(self, ctx):
        return by_label(self.problem, ctx, mu=self.mu)


# -- cost model --------------------------------------------------------------------


def estimate_seconds(q: int, digits: int, T: float, dt: float, N: int = 3,
                     pipeline: bool = True) -> float:
    """Rough wall-clock estimate of a run on a single core.

    Calibrated on double precision with the compiled kernels (about 4e-7 s
    per cG(1) interval for Lorenz) and on 256-bit MPFR for the interpreted
    path (about 5 ms per cG(3) interval in three dimensions). With
    ``pipeline`` the residual and dual post-processing is included (about
    1e-4 s per interval in double precision, 1.5 times the solve otherwise).
    """
    M = math.ceil(T / dt)
    if digits <= 16:
        per = 2e-7 * (q + 1) * (N / 3) ** 2
        post = 1e-4
    else:
        bits = 64 * math.ceil(digits * math.log2(10) / 64)
        per = 5e-3 * (q / 3) ** 2.5 * (N / 3) ** 2 * max(1.0, (bits / 256) ** 1.3)
        post = 1.5 * per
    return M * (per + (post if pipeline else 0.0))


def is_long(cfg: ExperimentConfig, pipeline: bool = True) -> bool:
    worst = max(estimate_seconds(q, d, cfg.T, dt, pipeline=pipeline)
                for q in cfg.qs for d in cfg.digit_list for dt in cfg.dts)
    return worst > cfg.long_run_seconds


# -- endpoint errors and sweeps -----------------------------------------------------------


def reference_endpoint(problem_label, T, q, digits, dt, mu=1000):
    """Reference ``u(T)`` from a high-precision, high-degree solve."""
    ctx = make_context(digits)
    problem = by_label(problem_label, ctx, mu=mu)
    with ctx:
        dt = ctx.scalar(str(dt))
    return ctx, solve_cg(problem, SolverConfig(q=q, ctx=ctx, dt=dt), T, store=False)


def endpoint_error(U, ref_ctx, ref) -> float:
    """Max-norm difference, taken in the reference precision."""
    with ref_ctx:
        diff = ref_ctx.array([ref_ctx.scalar(v) for v in np.asarray(U).ravel()]) - ref
        return float(max(abs(v) for v in diff))


def nearby_steps(dt: float, count: int, spread: float = 0.02) -> list:
    """``count`` step sizes clustered within a few percent around ``dt``."""
    if count <= 1:
        return [dt]
    offsets = np.linspace(-spread, spread, count)
    return [dt * 10 ** o for o in offsets]


def error_sweep(problem_label, T, q, digits, dts, ref_ctx, ref, jitter: int = 1,
                mu=1000, tol=None) -> list:
    """Endpoint error for every step, averaged over ``jitter`` nearby steps."""
    ctx = make_context(digits)
    problem = by_label(problem_label, ctx, mu=mu)
    rows = []
    for dt in dts:
        errs = []
        t0 = time.perf_counter()
        for d in nearby_steps(dt, jitter):
            cfg = SolverConfig(q=q, ctx=ctx, dt=d, tol_fp=tol)
            U = solve_cg(problem, cfg, T, store=False)
            errs.append(endpoint_error(U, ref_ctx, ref))
        rows.append({"dt": dt, "q": q, "digits": digits, "error": float(np.mean(errs)),
                     "errors": errs, "seconds": time.perf_counter() - t0})
        log.info("dt=%.3g q=%d digits=%d error=%.3e", dt, q, digits, rows[-1]["error"])
    return rows


def v_shape(dts, errors) -> dict:
    """Minimum of an error-vs-step curve and log-log slopes on both sides.

    The discretization side is every step at or above the minimizer, the
    round-off side every step at or below it. A side with fewer than two
    points gets slope None.
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    order = np.argsort(dts)
    dts, errors = dts[order], errors[order]
    i = int(np.argmin(errors))

    def slope(sel):
        if sel.sum() < 2:
            return None
        return float(np.polyfit(np.log10(dts[sel]), np.log10(errors[sel]), 1)[0])

    idx = np.arange(len(dts))
    return {"argmin_dt": float(dts[i]), "min_error": float(errors[i]),
            "interior_min": 0 < i < len(dts) - 1,
            "slope_discretization": slope(idx >= i), "slope_roundoff": slope(idx <= i)}


# -- stability and estimates -------------------------------------------------------------


def lorenz_growth(T, dt, q=3, digits=64, final_times=None, p=None):
    """S_C(T') of Lorenz duals with unit terminal vectors, for each T'.

    Returns (final_times, values (len, 3), headline max over components).
    """
    ctx = make_context(digits)
    problem = by_label("lorenz", ctx)
    with ctx:
        traj = solve_cg(problem, SolverConfig(q=q, ctx=ctx, dt=ctx.scalar(str(dt))), T)
    if final_times is None:
        final_times = list(range(1, int(T) + 1))
    prop = dual_propagator(traj, problem, DualConfig(p=p))
    times = [_snap(traj.partition, t) for t in final_times]
    vals = stability_growth(prop, times)
    return np.array([float(t) for t in times]), vals, vals.max(axis=1)


def _snap(part, t):
    """The partition node closest to ``t``."""
    m = int(np.argmin(np.abs(part.nodes.astype(float) - float(t))))
    return part.nodes[m]


def estimate_run(traj, problem, p=None, refine=1, u0_exact=None, terminal=None,
                 quadrature=True):
    """Residuals, duals for each terminal vector and their error bounds.

    Returns a dict with the residual data, a list of (z_T, factors,
    breakdown) and the headline (componentwise max) numbers.
    """
    ctx = traj.ctx
    q = traj.degree
    p = q - 1 if p is None else p
    basis = lagrange_basis(p, "gauss", ctx)
    res = discrete_residual(traj, problem, basis)
    prop = dual_propagator(traj, problem, DualConfig(p=p, refine=refine))
    terminal = terminal if terminal is not None else unit_vectors(traj.dimension, ctx)
    quad_basis = solver_quadrature_basis(traj)
    data_err = 0
    if u0_exact is not None:
        with ctx:
            data_err = norms(traj.evaluate(traj.partition.nodes[0]) - ctx.array(u0_exact))
    items = []
    for zT in terminal:
        dual = prop.solution(zT)
        sf = stability_factors(dual, basis, res.rule, traj.partition)
        eq = estimate_quadrature_error(dual, problem, traj, quad_basis, S_Q=sf.S_Q) if quadrature else None
        eb = assemble_bounds(sf, res, data_err, ctx, E_Q=eq, include_quadrature=quadrature)
        items.append((zT, sf, eb))
    headline = {}
    for key in ("total", "E_D", "E_G", "E_C", "E_C_rms", "E_C_ceiling"):
        headline[key] = max(float(getattr(eb, key)) for _, _, eb in items)
    for key in ("S_D", "S_G", "S_C", "S_C2", "S_Q"):
        headline[key] = max(float(getattr(sf, key)) for _, sf, _ in items)
    headline["max_rbar"] = float(res.max_rbar)
    headline["optimal_dt"] = predict_optimal_dt(q, ctx)
    return {"residual": res, "items": items, "headline": headline, "propagator": prop}


def growth_fit(times, values, window) -> float:
    return fit_growth_rate(times, values, window)


__all__ = [
    "ExperimentConfig", "estimate_seconds", "is_long", "reference_endpoint",
    "endpoint_error", "nearby_steps", "error_sweep", "v_shape", "lorenz_growth",
    "estimate_run", "growth_fit",
]
