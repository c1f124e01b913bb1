"""Scenario assembly and the experiment drivers (single run, DMR sweep, mode comparison)."""

from __future__ import annotations

import csv
import heapq
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .config import ScenarioConfig, with_changes
from .dcf import DROPPED, ON_TIME, Frame, TxOutcome, Wlan
from .kernel import Kernel
from .loop import (
    LoopState, PidContinuous, Plant, Reference, Sample, pid_compute, pid_discretize,
    plant_advance,
)
from .scheduler import NONE, FeedbackScheduler, record_outcome

SENSOR, CONTROLLER, ACTUATOR = 0, 1, 2


@dataclass
class SimulationResult:
    config: ScenarioConfig
    seed: int
    report: metrics.MetricsReport
    loops: list
    scheduler_trace: list
    frames: list
    outcomes: list
    tx_log: Optional[list] = None
    window_edges: list = field(default_factory=list)

    def loop_series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_us", "loop_id", "y", "u", "ref", "h_us"])
        rows = sorted(r for lp in self.loops for r in lp.series)
        for t, lid, y, u, ref, h in rows:
            w.writerow([t, lid, repr(y), repr(u), repr(ref), h])
        return buf.getvalue()

    def scheduler_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_us", "mode", "rho", "rho_r", "K", "h_us", "executed", "rate"])
        mode = self.config.sched.mode
        for d in self.scheduler_trace:
            w.writerow([d.t_us, mode, repr(d.rho), repr(d.rho_r),
                        "" if d.gain is None else repr(d.gain),
                        int(round(d.h * 1e6)), int(d.executed), repr(d.rate)])
        return buf.getvalue()

    def frames_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame_id", "kind", "loop_id", "release_us", "fate", "delivery_us", "retries"])
        by_id = {f.id: f for f in self.frames}
        for o in self.outcomes:
            f = by_id[o.frame_id]
            w.writerow([o.frame_id, f.kind, "" if f.loop_id is None else f.loop_id,
                        f.release_time, o.fate,
                        "" if o.delivery_time is None else o.delivery_time, o.retries])
        return buf.getvalue()

    def write(self, out_dir: str, prefix: str = ""):
        os.makedirs(out_dir, exist_ok=True)
        files = {
            "report.csv": self.report.to_csv(),
            "summary.txt": self.report.summary() + "\n",
            "loops.csv": self.loop_series_csv(),
            "scheduler.csv": self.scheduler_csv(),
            "frames.csv": self.frames_csv(),
        }
        for name, text in files.items():
            with open(os.path.join(out_dir, prefix + name), "w") as fh:
                fh.write(text)


class Simulation:
    """One wireless control system run: N loops plus an optional interferer on one cell.

    Node ids: loop ``i`` uses ``3i`` (sensor), ``3i+1`` (controller) and
    ``3i+2`` (actuator); the interferer pair takes ``3N`` and ``3N+1``.
    """

    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None, trace=None,
                 keep_tx_log: bool = False):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.kernel = Kernel(self.seed, trace=trace)
        self.wlan = Wlan(self.kernel, cfg.mac, cfg.rates[0][1], listener=self._on_frame_done,
                         keep_tx_log=keep_tx_log)
        self.rate = cfg.rates[0][1]
        self.reference = Reference(cfg.reference_steps())
        self.pid_c = PidContinuous(cfg.kp, cfg.ki, cfg.kd)
        self.scheduler = FeedbackScheduler(cfg.sched, self.rate)
        self.iae = metrics.IaeAccumulator(cfg.n_loops)
        self._pending = []  # heap of (deadline, seq, sample)
        self._seq = 0
        self.met = 0
        self.missed = 0
        self.windows = []
        self.window_edges = []
        h_us = int(round(cfg.sched.h0 * 1e6))
        self.loops = []
        for i in range(cfg.n_loops):
            for role in (SENSOR, CONTROLLER, ACTUATOR):
                self.wlan.add_node(3 * i + role)
            pid = pid_discretize(self.pid_c, cfg.sched.h0, cfg.sched.h_min, cfg.sched.h_max,
                                 method=cfg.pid_method)
            self.loops.append(LoopState(i, Plant(), pid, h_us, self.reference))
        self._tick_tokens = [0] * cfg.n_loops
        if cfg.interference is not None:
            self.wlan.add_node(3 * cfg.n_loops)
            self.wlan.add_node(3 * cfg.n_loops + 1)

    # plant / IAE ---------------------------------------------------------

    def _advance(self, lp: LoopState, t: int):
        ref = self.reference
        acc = self.iae
        lid = lp.loop_id

        def substep(t0, t1, y0, y1):
            acc.add(lid, ref(t0), y0, y1, (t1 - t0) * 1e-6)
            a = abs(y1)
            if a > lp.max_abs_y:
                lp.max_abs_y = a

        plant_advance(lp.plant, lp.u_held, t, substep)

    def _advance_all(self):
        t = self.kernel.now()
        for lp in self.loops:
            self._advance(lp, t)

    # sensing / control / actuation --------------------------------------

    def _schedule_tick(self, lp: LoopState, t: int):
        self._tick_tokens[lp.loop_id] += 1
        token = self._tick_tokens[lp.loop_id]
        lp.next_tick = t
        self.kernel.at(t, "sample", lambda: self._sensor_tick(lp, token), 3 * lp.loop_id)

    def _sensor_tick(self, lp: LoopState, token: int):
        if token != self._tick_tokens[lp.loop_id]:
            return
        t = self.kernel.now()
        self._advance(lp, t)
        y = lp.plant.y
        sample = Sample(lp.loop_id, lp.samples, t, t + lp.h_us, lp.h_us, y)
        lp.samples += 1
        lp.last_tick = t
        lp.series.append((t, lp.loop_id, y, lp.u_held, self.reference(t), lp.h_us))
        heapq.heappush(self._pending, (sample.deadline, self._seq, sample))
        self._seq += 1
        base = 3 * lp.loop_id
        f = self.wlan.new_frame("sensor", lp.loop_id, self.cfg.payload_bytes, sample.deadline,
                                base + SENSOR, base + CONTROLLER, sample, y)
        self._schedule_tick(lp, t + lp.h_us)
        self.wlan.enqueue(f)

    def _on_frame_done(self, frame: Frame, outcome: TxOutcome):
        if frame.kind == "interference":
            return
        sample = frame.sample
        lp = self.loops[frame.loop_id]
        if outcome.fate == DROPPED:
            sample.met = False
            return
        if frame.kind == "sensor":
            self._controller(lp, frame)
        else:
            self.actuate(lp, frame.value)
            sample.met = outcome.fate == ON_TIME

    def actuate(self, lp: LoopState, value: float):
        """Apply a command now; the plant first runs up to now under the old held input."""
        self._advance(lp, self.kernel.now())
        lp.u_held = value

    def _controller(self, lp: LoopState, frame: Frame):
        # zero computation time: the command is queued the instant the sample lands
        sample = frame.sample
        h = sample.h_us * 1e-6
        if abs(lp.pid.h - h) > 1e-12:
            s = self.cfg.sched
            lp.pid = pid_discretize(self.pid_c, h, s.h_min, s.h_max, carry=lp.pid,
                                    method=self.cfg.pid_method)
        u = pid_compute(lp.pid, self.reference(self.kernel.now()), sample.y)
        base = 3 * lp.loop_id
        cmd = self.wlan.new_frame("command", lp.loop_id, self.cfg.payload_bytes, sample.deadline,
                                  base + CONTROLLER, base + ACTUATOR, sample, u)
        self.wlan.enqueue(cmd)

    # scheduler ------------------------------------------------------------

    def _close_window(self, t: int):
        win = self.scheduler.window
        while self._pending and self._pending[0][0] < t:
            _, _, sample = heapq.heappop(self._pending)
            sample.counted = True
            missed = sample.met is not True
            record_outcome(win, missed)
            if missed:
                self.missed += 1
            else:
                self.met += 1

    def _scheduler_tick(self):
        t = self.kernel.now()
        self._close_window(t)
        self.window_edges.append(t)
        dec = self.scheduler.tick(t, self.rate)
        if dec is None:
            return
        self.windows.append((t, dec.rho))
        if dec.executed:
            self.set_period(int(round(dec.h * 1e6)))

    def set_period(self, h_us: int):
        """Give every loop a new period; the pending sample moves to last sample + new period."""
        t = self.kernel.now()
        for lp in self.loops:
            if h_us == lp.h_us:
                continue
            lp.h_us = h_us
            if lp.samples:
                self._schedule_tick(lp, max(t, lp.last_tick + h_us))

    def _set_rate(self, r: float):
        self.rate = r
        self.wlan.set_rate(r)

    def _interference(self):
        n = 3 * self.cfg.n_loops
        f = self.wlan.new_frame("interference", None, self.cfg.interference.payload_bytes,
                                None, n, n + 1)
        self.wlan.enqueue(f)

    # driver -------------------------------------------------------------

    def run(self) -> SimulationResult:
        cfg = self.cfg
        end = cfg.duration_us
        k = self.kernel
        if end > 0:
            for t, r in cfg.rates[1:]:
                if t <= end:
                    k.at(t, "rate_change", lambda r=r: self._set_rate(r))
            for t in self.reference.breakpoints():
                if 0 < t <= end:
                    k.at(t, "reference", self._advance_all)
            period = self.scheduler.tick_period_us
            for t in range(period, end + 1, period):
                k.at(t, "detector" if cfg.sched.mode != "time_triggered" else "fs_tick",
                     self._scheduler_tick)
            if cfg.interference is not None:
                n = 3 * cfg.n_loops
                for t in range(0, end + 1, cfg.interference.period_us):
                    k.at(t, "interference", self._interference, n)
            for lp in self.loops:
                t0 = lp.loop_id * cfg.phase_offset_us
                if t0 <= end:
                    self._schedule_tick(lp, t0)
        k.run(end)
        self._advance_all()
        frames = self.wlan.fate_counts()
        report = metrics.finalize(
            end, self.iae, self.windows, self.scheduler.state.executions,
            max((lp.max_abs_y for lp in self.loops), default=0.0),
            self.reference.amplitude, self.met, self.missed, frames)
        return SimulationResult(cfg, self.seed, report, self.loops, self.scheduler.trace,
                                self.wlan.frames, self.wlan.outcomes, self.wlan.tx_log,
                                list(self.window_edges))


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, trace=None,
                 keep_tx_log: bool = False) -> SimulationResult:
    return Simulation(cfg, seed=seed, trace=trace, keep_tx_log=keep_tx_log).run()


def _run_report(args):
    cfg, seed = args
    return run_scenario(cfg, seed).report


def run_many(cfg: ScenarioConfig, seeds, jobs: int = 1):
    """Reports for independent seeded runs, optionally on a process pool."""
    work = [(cfg, s) for s in seeds]
    if jobs <= 1 or len(work) <= 1:
        return [_run_report(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_report, work))


def replication_seeds(cfg: ScenarioConfig, replications: Optional[int] = None):
    n = cfg.replications if replications is None else replications
    return [cfg.seed + i for i in range(n)]


SWEEP_RATES = (5.5, 11.0)
SWEEP_PERIODS_MS = tuple(range(8, 31, 2))


@dataclass
class SweepPoint:
    rate: float
    h_ms: float
    dmr_mean: float
    dmr_std: float
    dmrs: list


def sweep(cfg: ScenarioConfig, rates=SWEEP_RATES, periods_ms=SWEEP_PERIODS_MS,
          replications: int = 10, duration_us: int = 3_000_000, jobs: int = 1):
    """DMR surface over (rate, fixed period) without feedback scheduling or interference.

    Each grid point is the arithmetic mean of the per-run pooled DMRs.
    """
    work = []
    points = []
    seeds = replication_seeds(cfg, replications)
    for r in rates:
        for h in periods_ms:
            h_s = h / 1000.0
            pcfg = with_changes(
                cfg, rates=((0, float(r)),), duration_us=duration_us, interference=None,
                sched={"mode": NONE, "h0": h_s, "h_max": max(cfg.sched.h_max, h_s),
                       "h_min": min(cfg.sched.h_min, h_s / 2)})
            points.append((float(r), float(h)))
            work.extend((pcfg, s) for s in seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_report, work, chunksize=4))
    else:
        reports = [_run_report(w) for w in work]
    out = []
    n = len(seeds)
    for i, (r, h) in enumerate(points):
        dmrs = [rep.dmr_pooled for rep in reports[i * n:(i + 1) * n]]
        out.append(SweepPoint(r, h, float(np.mean(dmrs)), float(np.std(dmrs)), dmrs))
    return out


def sweep_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rate", "h_ms", "dmr_mean", "dmr_std"])
    for p in points:
        w.writerow([repr(p.rate), repr(p.h_ms), repr(p.dmr_mean), repr(p.dmr_std)])
    return buf.getvalue()


@dataclass
class ModeSummary:
    mode: str
    reports: list
    seeds: list

    def mean(self, attr: str) -> float:
        return float(np.mean([float(getattr(r, attr)) for r in self.reports]))


def compare(cfg: ScenarioConfig, modes=("none", "time_triggered", "event_triggered"),
            replications: Optional[int] = None, jobs: int = 1):
    """Run the same seed set under each invocation mode."""
    seeds = replication_seeds(cfg, replications)
    out = []
    for mode in modes:
        mcfg = with_changes(cfg, sched={"mode": mode})
        out.append(ModeSummary(mode, run_many(mcfg, seeds, jobs), seeds))
    return out


def compare_csv(summaries) -> str:
    """Metrics as rows, modes as columns (the layout of the ET/TT comparison table)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + [s.mode for s in summaries])
    for attr, label in (("sum_iae", "sum_iae"), ("executions", "executions"),
                        ("dmr_mean", "dmr_mean"), ("unstable", "unstable")):
        w.writerow([label] + [repr(s.mean(attr)) for s in summaries])
    return buf.getvalue()
