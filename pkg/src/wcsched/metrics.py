"""Quality-of-control and scheduling statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

DIVERGENCE_FACTOR = 100.0


class IaeAccumulator:
    """Per-loop integral of absolute error, trapezoid rule on the plant sub-steps."""

    def __init__(self, n_loops: int):
        self.values = [0.0] * n_loops

    def add(self, loop_id: int, ref: float, y0: float, y1: float, dt: float):
        accumulate_iae(self, loop_id, ref, (y0, y1), dt)

    @property
    def total(self) -> float:
        return math.fsum(self.values)


def accumulate_iae(acc: IaeAccumulator, loop_id: int, ref: float, y, dt: float) -> None:
    """Add ``|ref - y| dt``; ``y`` is a scalar or an ``(y_start, y_end)`` pair."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(y, tuple):
        e = 0.5 * (abs(ref - y[0]) + abs(ref - y[1]))
    else:
        e = abs(ref - y)
    acc.values[loop_id] += e * dt


@dataclass
class MetricsReport:
    duration_us: int
    per_loop_iae: list
    sum_iae: float
    dmr_windows: list  # [(t_us, rho), ...] for windows that held samples
    dmr_mean: float
    dmr_max: float
    dmr_pooled: float
    executions: int
    unstable: bool
    max_abs_y: float
    frames: dict = field(default_factory=dict)

    def rows(self):
        yield "duration_us", self.duration_us
        for i, v in enumerate(self.per_loop_iae):
            yield f"iae_loop{i}", repr(float(v))
        yield "sum_iae", repr(float(self.sum_iae))
        yield "dmr_mean", repr(float(self.dmr_mean))
        yield "dmr_max", repr(float(self.dmr_max))
        yield "dmr_pooled", repr(float(self.dmr_pooled))
        yield "dmr_windows", len(self.dmr_windows)
        yield "executions", self.executions
        yield "unstable", int(self.unstable)
        yield "max_abs_y", repr(float(self.max_abs_y))
        for k in sorted(self.frames):
            yield f"frames_{k}", self.frames[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.rows():
            w.writerow([k, v])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [
            f"duration        {self.duration_us / 1e6:g} s",
            "IAE per loop    " + ", ".join(f"{v:.4f}" for v in self.per_loop_iae),
            f"sum IAE         {self.sum_iae:.4f}",
            f"DMR mean / max  {self.dmr_mean:.3f} / {self.dmr_max:.3f} over {len(self.dmr_windows)} windows",
            f"DMR pooled      {self.dmr_pooled:.3f}",
            f"FS executions   {self.executions}",
            f"unstable        {'yes' if self.unstable else 'no'} (max |y| = {self.max_abs_y:.3g})",
        ]
        if self.frames:
            lines.append("frames          " + ", ".join(f"{k}={v}" for k, v in sorted(self.frames.items())))
        return "\n".join(lines)


def finalize(duration_us: int, iae: IaeAccumulator, windows, executions: int,
             max_abs_y: float, ref_amplitude: float = 1.0, met: int = 0, missed: int = 0,
             frames: Optional[dict] = None) -> MetricsReport:
    """Assemble a report; pure, so finalizing twice yields identical output."""
    rhos = [rho for _, rho in windows]
    total = met + missed
    return MetricsReport(
        duration_us=duration_us,
        per_loop_iae=list(iae.values),
        sum_iae=iae.total,
        dmr_windows=list(windows),
        dmr_mean=float(np.mean(rhos)) if rhos else 0.0,
        dmr_max=max(rhos) if rhos else 0.0,
        dmr_pooled=missed / total if total else 0.0,
        executions=executions,
        unstable=max_abs_y > DIVERGENCE_FACTOR * ref_amplitude,
        max_abs_y=max_abs_y,
        frames=dict(frames or {}),
    )


def window_dmr_from_frames(frames, edges):
    """Recompute per-window DMR from frame records alone.

    A sample is one sensor frame; it is met iff the command frame of the same
    sample was delivered on time.  Samples belong to the window
    ``[edges[i-1], edges[i])`` containing their deadline.
    """
    from .dcf import ON_TIME

    met_by_sample = {}
    for f in frames:
        if f.kind == "sensor":
            met_by_sample.setdefault(id(f.sample), (f.deadline, False))
    for f in frames:
        if f.kind == "command" and f.fate == ON_TIME:
            met_by_sample[id(f.sample)] = (f.deadline, True)
    out = []
    lo = 0
    for hi in edges:
        sel = [m for d, m in met_by_sample.values() if lo <= d < hi]
        out.append((hi, (sum(1 for m in sel if not m) / len(sel)) if sel else None))
        lo = hi
    return out


def summarize_replications(reports, seeds):
    """CSV with one row per seed followed by mean and std rows."""
    cols = ["sum_iae", "dmr_mean", "dmr_max", "dmr_pooled", "executions", "unstable"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed"] + cols)
    table = []
    for seed, rep in zip(seeds, reports):
        vals = [float(rep.sum_iae), rep.dmr_mean, rep.dmr_max, rep.dmr_pooled,
                rep.executions, int(rep.unstable)]
        table.append(vals)
        w.writerow([seed] + [repr(float(v)) for v in vals])
    arr = np.array(table, dtype=float)
    w.writerow(["mean"] + [repr(float(v)) for v in arr.mean(axis=0)])
    w.writerow(["std"] + [repr(float(v)) for v in arr.std(axis=0)])
    return buf.getvalue()


def report_dict(rep: MetricsReport) -> dict:
    return asdict(rep)
