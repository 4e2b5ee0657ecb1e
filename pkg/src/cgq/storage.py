"""Append-only trajectory files.

Layout: a first line ``# cgq-trajectory 1``, a second line ``# `` followed
by a JSON header, then one line per interval holding the interval index and
all (q + 1) * N nodal values as decimal strings at full working precision.
Lines are flushed as intervals complete; a file cut short by an interrupted
run is resumed from its last complete line.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .discretization import Partition, lagrange_basis
from .numerics import PrecisionContext, make_context
from .primal import Trajectory

MAGIC = "# cgq-trajectory 1"


class StaleTrajectory(ValueError):
    """A trajectory file does not belong to the requested configuration."""


def _header_fields(ctx: PrecisionContext, q: int, N: int, T, steps: int, extra: dict) -> dict:
    head = {"digits": ctx.digits, "bits": ctx.bits, "q": q, "N": N,
            "T": ctx.to_string(T) if not ctx.native else repr(float(T)), "steps": steps}
    head.update(extra)
    return head


class TrajectoryWriter:
    """Stream nodal values to ``path``; use as the ``on_intervals`` hook."""

    def __init__(self, path, ctx: PrecisionContext, q: int, N: int, T, steps: int, **extra):
        self.path = path
        self.ctx = ctx
        self.header = _header_fields(ctx, q, N, T, steps, extra)
        self.count = 0
        self._fh = None

    def open(self, append_from: int = 0):
        if append_from:
            self._fh = open(self.path, "a")
            self.count = append_from
        else:
            self._fh = open(self.path, "w")
            self._fh.write(MAGIC + "\n")
            self._fh.write("# " + json.dumps(self.header, sort_keys=True) + "\n")
            self._fh.flush()
        return self

    def __call__(self, m_start: int, block) -> None:
        fmt = self.ctx.to_string
        for i, vals in enumerate(block):
            row = " ".join(fmt(v) for v in np.asarray(vals).ravel())
            self._fh.write(f"{m_start + i} {row}\n")
        self._fh.flush()
        self.count = m_start + len(block)

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path) -> dict:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        line = fh.readline()
        if not line.startswith("# "):
            raise ValueError(f"{path}: missing header")
        return json.loads(line[2:])


def read_values(path, ctx: PrecisionContext | None = None):
    """Header and nodal values of all complete lines; shape (m, q + 1, N)."""
    head = read_header(path)
    ctx = ctx or make_context(head["digits"])
    q, N = head["q"], head["N"]
    width = (q + 1) * N
    rows = []
    with open(path) as fh:
        fh.readline()
        fh.readline()
        for line in fh:
            if not line.endswith("\n"):
                break  # partial write
            parts = line.split()
            if len(parts) != width + 1 or int(parts[0]) != len(rows):
                break
            rows.append(parts[1:])
    if ctx.native:
        vals = np.array(rows, dtype=np.float64).reshape(len(rows), q + 1, N)
    else:
        vals = ctx.array(rows).reshape(len(rows), q + 1, N) if rows else np.empty((0, q + 1, N), dtype=object)
    return head, vals


def truncate_to_complete(path) -> int:
    """Drop a trailing partial line; returns the number of complete intervals."""
    head, vals = read_values(path)
    with open(path, "r+") as fh:
        lines = fh.readlines()
        keep = lines[: 2 + len(vals)]
        fh.seek(0)
        fh.writelines(keep)
        fh.truncate()
    return len(vals)


def load_trajectory(path, problem=None, expect: dict | None = None) -> Trajectory:
    """Rebuild a complete trajectory from a file.

    ``expect`` lists header fields (for example the config hash) that must
    match; a mismatch raises :class:`StaleTrajectory`.
    """
    head, vals = read_values(path)
    for key, want in (expect or {}).items():
        if head.get(key) != want:
            raise StaleTrajectory(f"{path}: header {key}={head.get(key)!r}, expected {want!r}")
    if len(vals) != head["steps"]:
        raise StaleTrajectory(f"{path}: {len(vals)} of {head['steps']} intervals present")
    ctx = make_context(head["digits"])
    part = Partition.uniform(ctx.scalar(head["T"]), ctx, steps=head["steps"])
    basis = lagrange_basis(head["q"], "lobatto", ctx)
    return Trajectory(part, basis, vals, problem=problem, stats={"loaded_from": os.fspath(path)})
