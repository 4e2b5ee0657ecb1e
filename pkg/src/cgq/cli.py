"""Command line harness: ``cgq solve|estimate|sweep|mc``.

Settings come from an optional flat TOML file (``--config``) overridden by
flags. Every command writes into ``--out`` and leaves a ``<command>.json`` record
with the config, its hash, timings and the main numbers.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .estimator import predict_computability, predict_optimal_dt, write_report
from .adjoint import DualConfig, dual_propagator
from .discretization import lagrange_basis
from .numerics import make_context, to_float
from .primal import NonConvergence, SolverConfig, solve_cg
from .stochastic import NoiseModel, constant_weights, rms_scaling_sweep, write_sweep
from .storage import (
    StaleTrajectory,
    TrajectoryWriter,
    load_trajectory,
    read_header,
    truncate_to_complete,
)

log = logging.getLogger("cgq")

# long-running recipes; shipped as configs, never run by the tests
RECIPES = {
    "lorenz-reference": {"problem": "lorenz", "q": 100, "dt": 0.0037, "digits": 420, "T": 1000.0},
    "vanderpol-full": {"problem": "vanderpol", "mu": 1000, "q": 5, "dt": 0.001, "digits": 16,
                       "T": 2000.0},
}


def _parse_list(text, cast):
    if text is None:
        return None
    items = [cast(v) for v in str(text).split(",") if v.strip()]
    return items[0] if len(items) == 1 else items


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cgq", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "estimate", "sweep", "mc"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat TOML config file")
        sp.add_argument("--recipe", choices=sorted(RECIPES), help="a shipped long-run config")
        sp.add_argument("--problem", help="lorenz, vanderpol or linear:<file>")
        sp.add_argument("--mu", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--q", help="degree (comma list for sweep)")
        sp.add_argument("--dt", help="step size (comma list for sweep)")
        sp.add_argument("--digits", help="decimal digits (comma list for sweep)")
        sp.add_argument("--p", type=int, help="testing degree, default q - 1")
        sp.add_argument("--tol", type=float, help="iteration tolerance")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--jitter", type=int, help="nearby steps averaged per sweep point")
        sp.add_argument("--out", default=None)
        sp.add_argument("--confirm-long", action="store_true",
                        help="allow configs estimated to run longer than long_run_seconds")
        if name == "estimate":
            sp.add_argument("--trajectory", help="trajectory file from a previous solve")
            sp.add_argument("--refine", type=int)
        if name == "mc":
            sp.add_argument("--synthetic", action="store_true",
                            help="constant unit dual weights instead of a stored dual")
    return ap


def load_config(args) -> ex.ExperimentConfig:
    over = {
        "problem": args.problem, "mu": args.mu, "T": args.T,
        "q": _parse_list(args.q, int), "dt": _parse_list(args.dt, float),
        "digits": _parse_list(args.digits, int), "p": args.p, "tol": args.tol,
        "seed": args.seed, "trials": args.trials, "jitter": args.jitter, "out": args.out,
        "refine": getattr(args, "refine", None),
    }
    over = {k: v for k, v in over.items() if v is not None}
    if args.confirm_long:
        over["confirm_long"] = True
    base = dict(RECIPES[args.recipe]) if args.recipe else {}
    if args.config:
        cfg = ex.ExperimentConfig.from_toml(args.config, **{**base, **over})
    else:
        cfg = ex.ExperimentConfig.from_dict({**base, **over})
    return cfg


def _record(cfg, out: Path, command: str, started: float, **fields) -> dict:
    rec = {"command": command, "config": cfg.as_dict(), "config_hash": cfg.config_hash(),
           "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
           "wall_clock": time.time() - started}
    rec.update(fields)
    with open(out / f"{command}.json", "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return rec


def _guard_long(cfg, pipeline: bool = True) -> None:
    if ex.is_long(cfg, pipeline) and not cfg.confirm_long:
        est = max(ex.estimate_seconds(q, d, cfg.T, dt, pipeline=pipeline)
                  for q in cfg.qs for d in cfg.digit_list for dt in cfg.dts)
        raise SystemExit(
            f"estimated run time {est:.3g} s exceeds {cfg.long_run_seconds:g} s; "
            "pass --confirm-long to run it"
        )


def _single(values, what):
    if len(values) != 1:
        raise SystemExit(f"{what} takes a single value here, got {values}")
    return values[0]


def cmd_solve(cfg: ex.ExperimentConfig) -> dict:
    started = time.time()
    _guard_long(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    q = _single(cfg.qs, "q")
    digits = _single(cfg.digit_list, "digits")
    dt = _single(cfg.dts, "dt")
    ctx = make_context(digits)
    problem = cfg.make_problem(ctx)
    with ctx:
        dt_s = ctx.scalar(str(dt))
    scfg = SolverConfig(q=q, ctx=ctx, dt=dt_s, tol_fp=cfg.tol)
    part = scfg.make_partition(cfg.T)
    path = out / "trajectory.txt"
    h = cfg.config_hash()
    resume = None
    done = 0
    if path.exists():
        head = read_header(path)
        if head.get("config_hash") == h:
            done = truncate_to_complete(path)
            if done:
                resume = load_partial(path)
    writer = TrajectoryWriter(path, ctx, q, problem.dimension, part.T, part.M,
                              config_hash=h, problem=cfg.problem)
    writer.open(append_from=done)
    try:
        if done < part.M:
            solve_cg(problem, scfg, cfg.T, resume=resume, on_intervals=_skip(writer, done),
                     store=False)
    except NonConvergence as err:
        writer.close()
        _record(cfg, out, "solve", started, status="nonconvergence", error=str(err),
                interval=err.interval)
        raise SystemExit(str(err))
    writer.close()
    traj = load_trajectory(path, problem)
    end = traj.end_value(traj.partition.M - 1)
    return _record(cfg, out, "solve", started, status="ok", trajectory=str(path),
                   intervals=part.M, resumed_from=done,
                   final_value=[ctx.to_string(v) for v in end],
                   estimated_seconds=ex.estimate_seconds(q, digits, cfg.T, dt, problem.dimension))


def load_partial(path):
    from .storage import read_values

    return read_values(path)[1]


def _skip(writer, done):
    """Forward only intervals not already on disk."""

    def hook(m_start, block):
        if m_start + len(block) <= done:
            return
        if m_start < done:
            block = block[done - m_start:]
            m_start = done
        writer(m_start, block)

    return hook


def cmd_estimate(cfg: ex.ExperimentConfig, trajectory=None) -> dict:
    started = time.time()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(trajectory) if trajectory else out / "trajectory.txt"
    if not path.exists():
        cmd_solve(cfg)
    digits = _single(cfg.digit_list, "digits")
    ctx = make_context(digits)
    problem = cfg.make_problem(ctx)
    try:
        traj = load_trajectory(path, problem, expect={"config_hash": cfg.config_hash()})
    except StaleTrajectory as err:
        raise SystemExit(f"stale trajectory: {err}")
    run = ex.estimate_run(traj, problem, p=cfg.p, refine=cfg.refine)
    res = run["residual"]
    res.to_csv(out / "residual.csv")
    profiles = []
    for i, (zT, sf, eb) in enumerate(run["items"]):
        sf.to_csv(out / f"stability_{i}.csv")
        write_report(out / f"estimate_{i}.json", eb, sf, res,
                     provenance={"config_hash": cfg.config_hash(), "trajectory": str(path),
                                 "z_T": [ctx.to_string(v) for v in zT]})
        profiles.append(sf.profile_C)
    # headline profile: componentwise max over the unit duals
    with open(out / "stability_max.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "S_C_max"] + [f"S_C_{i}" for i in range(len(profiles))])
        for m, t in enumerate(traj.partition.nodes):
            vals = [float(pr[m]) for pr in profiles]
            w.writerow([repr(float(t)), repr(max(vals))] + [repr(v) for v in vals])
    head = run["headline"]
    growth = None
    if cfg.growth_times:
        from .adjoint import fit_growth_rate, stability_growth

        times = [ex._snap(traj.partition, t) for t in cfg.growth_times]
        vals = stability_growth(run["propagator"], times).max(axis=1)
        tf = [float(t) for t in times]
        window = cfg.growth_window or [tf[0], tf[-1]]
        growth = {"times": tf, "S_C_max": [float(v) for v in vals],
                  "rate": fit_growth_rate(tf, vals, window)}
        if growth["rate"] > 0:
            growth["computable_until"] = predict_computability(16, growth["rate"])
    return _record(cfg, out, "estimate", started, trajectory=str(path), headline=head,
                   growth=growth, optimal_dt=predict_optimal_dt(traj.degree, ctx))


def _reference_for(cfg):
    digits = cfg.ref_digits or max(32, 2 * max(cfg.digit_list))
    q = max(cfg.qs) + cfg.ref_q_bump
    dt = cfg.ref_dt or min(cfg.dts) / 2
    return digits, q, dt


def cmd_sweep(cfg: ex.ExperimentConfig) -> dict:
    started = time.time()
    _guard_long(cfg, pipeline=False)
    if len(cfg.dts) * len(cfg.qs) * len(cfg.digit_list) < 2:
        raise SystemExit("a sweep needs at least two grid points")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rdig, rq, rdt = _reference_for(cfg)
    ref_ctx, ref = ex.reference_endpoint(cfg.problem, cfg.T, rq, rdig, rdt, mu=cfg.mu)
    rows, fits, failures = [], [], []
    for digits in cfg.digit_list:
        for q in cfg.qs:
            try:
                part = ex.error_sweep(cfg.problem, cfg.T, q, digits, cfg.dts, ref_ctx, ref,
                                      jitter=cfg.jitter, mu=cfg.mu, tol=cfg.tol)
            except NonConvergence as err:  # keep going with the other points
                failures.append({"q": q, "digits": digits, "error": str(err)})
                continue
            rows.extend(part)
            if len(part) >= 2:
                fit = ex.v_shape([r["dt"] for r in part], [r["error"] for r in part])
                fit.update(q=q, digits=digits, predicted_optimal_dt=predict_optimal_dt(
                    q, make_context(digits)))
                fits.append(fit)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["digits", "q", "dt", "error", "seconds"])
        for r in rows:
            w.writerow([r["digits"], r["q"], repr(r["dt"]), repr(r["error"]), f"{r['seconds']:.3f}"])
    return _record(cfg, out, "sweep", started, reference={"digits": rdig, "q": rq, "dt": rdt},
                   fits=fits, failures=failures, points=len(rows))


def cmd_mc(cfg: ex.ExperimentConfig, synthetic: bool = True) -> dict:
    started = time.time()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dts = cfg.mc_dts or cfg.dts
    if len(dts) < 3:
        dts = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    digits = _single(cfg.digit_list, "digits")
    ctx = make_context(digits)
    eps = float(ctx.eps_mach) if ctx.native else 1.0
    noise = NoiseModel(eps=eps, seed=cfg.seed)
    p = 0 if cfg.p is None else cfg.p
    if synthetic:
        def weights(dt):
            return constant_weights(dt, T=cfg.T, p=p)
        S_C2 = float(np.sqrt(cfg.T))
    else:
        q = _single(cfg.qs, "q")
        problem = cfg.make_problem(ctx)
        basis = lagrange_basis(q - 1 if cfg.p is None else cfg.p, "gauss", ctx)

        def weights(dt):
            # dual of the first unit vector along a fresh solve at this step
            traj = solve_cg(problem, SolverConfig(q=q, ctx=ctx, dt=dt), cfg.T)
            prop = dual_propagator(traj, problem, DualConfig(p=basis.degree))
            return to_float(_node_values(prop, basis, traj))
        S_C2 = None
    result = rms_scaling_sweep(weights, dts, noise, cfg.trials, S_C2=S_C2)
    write_sweep(result, out / "mc.csv", out / "mc_summary.json")
    return _record(cfg, out, "mc", started, slope=result["slope"], seed=cfg.seed,
                   eps=eps, rows=result["rows"])


def _node_values(prop, basis, traj):
    """Dual values at the testing nodes of every interval, first unit vector."""
    from .adjoint import _dual_on_reference

    dual = prop.solution(traj.ctx.identity(traj.dimension)[0])
    return _dual_on_reference(dual, traj.partition, basis.nodes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args)
    if args.command == "solve":
        rec = cmd_solve(cfg)
    elif args.command == "estimate":
        rec = cmd_estimate(cfg, args.trajectory)
    elif args.command == "sweep":
        rec = cmd_sweep(cfg)
    else:
        rec = cmd_mc(cfg, synthetic=args.synthetic)
    summary = {k: rec[k] for k in rec if k not in ("config", "rows")}
    json.dump(summary, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

__all__ = ["main", "cmd_solve", "cmd_estimate", "cmd_sweep", "cmd_mc", "RECIPES"]
