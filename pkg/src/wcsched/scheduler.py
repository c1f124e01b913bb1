"""Cross-layer adaptive feedback scheduling of sampling periods.

The scheduler closes a loop around the deadline miss ratio (DMR): a
proportional law moves the shared sampling period by ``K * (rho - rho_r)``,
where both the gain and the setpoint depend on the transmission rate reported
by the PHY.  It is invoked either on a fixed grid or, in event-triggered mode,
only when a periodic detector sees the DMR drift at least ``delta`` away from
its setpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

NONE = "none"
TIME_TRIGGERED = "time_triggered"
EVENT_TRIGGERED = "event_triggered"
MODES = (NONE, TIME_TRIGGERED, EVENT_TRIGGERED)

DEFAULT_SETPOINTS = {5.5: 0.10, 11.0: 0.05}
DEFAULT_K0 = {5.5: 0.008, 11.0: 0.018}


class SchedulerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    mode: str = EVENT_TRIGGERED
    t_ed_us: int = 500_000
    t_fs_us: int = 500_000
    delta: float = 0.03
    k0: dict = field(default_factory=lambda: dict(DEFAULT_K0))
    setpoints: dict = field(default_factory=lambda: dict(DEFAULT_SETPOINTS))
    delta_plus: float = 0.1
    delta_minus: float = 0.08
    h0: float = 0.015
    h_min: float = 0.002
    h_max: float = 0.050

    def validate(self, rates=()):
        if self.mode not in MODES:
            raise SchedulerConfigError(f"mode must be one of {MODES}")
        if self.delta < 0:
            raise SchedulerConfigError("delta must be >= 0")
        if self.delta_plus <= 0 or self.delta_minus <= 0:
            raise SchedulerConfigError("delta_plus and delta_minus must be > 0")
        if not (0 < self.h_min < self.h0 <= self.h_max):
            raise SchedulerConfigError("need 0 < h_min < h0 <= h_max")
        if self.t_ed_us <= 0 or self.t_fs_us <= 0:
            raise SchedulerConfigError("t_ed and t_fs must be positive")
        for r, rho in self.setpoints.items():
            if not 0 < rho < 1:
                raise SchedulerConfigError(f"setpoint for rate {r} must lie in (0, 1)")
        if self.mode != NONE:
            for r in rates:
                setpoint_for_rate(r, self.setpoints)
                gain_for_rate(r, self.k0)
        return self


@dataclass
class DmrWindow:
    met: int = 0
    missed: int = 0

    def reset(self):
        self.met = 0
        self.missed = 0


@dataclass(frozen=True)
class SchedulerState:
    h: float
    k0: float
    rho_r: float
    rate: Optional[float]
    executions: int = 0
    last_gain: Optional[float] = None


def measure_dmr(window: DmrWindow) -> Optional[float]:
    """Miss ratio of the window, or None when it holds no sample."""
    total = window.met + window.missed
    if total == 0:
        return None
    return window.missed / total


def record_outcome(window: DmrWindow, outcome) -> None:
    """Count one control sample; ``outcome`` is a TxOutcome or a plain missed flag."""
    missed = outcome if isinstance(outcome, bool) else outcome.missed
    if missed:
        window.missed += 1
    else:
        window.met += 1


def _lookup(table: dict, r: float, what: str) -> float:
    try:
        return table[float(r)]
    except KeyError:
        raise SchedulerConfigError(f"no {what} configured for rate {r} Mb/s") from None


def setpoint_for_rate(r: float, table: dict = DEFAULT_SETPOINTS) -> float:
    return _lookup(table, r, "DMR setpoint")


def gain_for_rate(r: float, table: dict = DEFAULT_K0) -> float:
    return _lookup(table, r, "base gain k0")


def adapt_gain(rho: float, rho_r: float, k0: float, delta_plus: float = 0.1,
               delta_minus: float = 0.08) -> float:
    if rho > rho_r + delta_plus:
        return k0 / 2
    if rho < rho_r - delta_minus:
        return 2 * k0
    return k0


def compute_period(h_prev: float, gain: float, e: float, h_min: float = 0.002,
                   h_max: float = 0.050) -> float:
    return min(max(h_prev + gain * e, h_min), h_max)


def detect_event(rho: float, rho_r: float, delta: float) -> bool:
    return abs(rho - rho_r) >= delta


def initial_state(cfg: SchedulerConfig, rate: float) -> SchedulerState:
    if cfg.mode == NONE:
        return SchedulerState(cfg.h0, 0.0, cfg.setpoints.get(float(rate), 0.0), float(rate))
    return SchedulerState(cfg.h0, gain_for_rate(rate, cfg.k0),
                          setpoint_for_rate(rate, cfg.setpoints), float(rate))


def scheduler_run(state: SchedulerState, rho: float, r: float,
                  cfg: SchedulerConfig) -> SchedulerState:
    """One full pass of the adaptive algorithm; pure in (state, rho, r, cfg)."""
    k0, rho_r = state.k0, state.rho_r
    if state.rate is None or float(r) != state.rate:
        k0 = gain_for_rate(r, cfg.k0)
        rho_r = setpoint_for_rate(r, cfg.setpoints)
    gain = adapt_gain(rho, rho_r, k0, cfg.delta_plus, cfg.delta_minus)
    e = rho - rho_r
    h = compute_period(state.h, gain, e, cfg.h_min, cfg.h_max)
    return replace(state, h=h, k0=k0, rho_r=rho_r, rate=float(r),
                   executions=state.executions + 1, last_gain=gain)


@dataclass
class TickDecision:
    """What one detector / T_FS tick did, as written to the scheduler trace."""

    t_us: int
    rho: Optional[float]
    rho_r: float
    gain: Optional[float]
    h: float
    executed: bool
    rate: float


class FeedbackScheduler:
    """Invocation logic around :func:`scheduler_run` for the three modes."""

    def __init__(self, cfg: SchedulerConfig, rate: float):
        self.cfg = cfg
        self.state = initial_state(cfg, rate)
        self.window = DmrWindow()
        self.trace: list[TickDecision] = []

    @property
    def tick_period_us(self) -> int:
        return self.cfg.t_fs_us if self.cfg.mode == TIME_TRIGGERED else self.cfg.t_ed_us

    def tick(self, t_us: int, rate: float) -> Optional[TickDecision]:
        """Close the current DMR window and decide whether to run the algorithm.

        An empty window skips the tick and its (zero) counts carry forward.
        """
        rho = measure_dmr(self.window)
        if rho is None:
            return None
        self.window.reset()
        mode = self.cfg.mode
        run = False
        if mode == TIME_TRIGGERED:
            run = True
        elif mode == EVENT_TRIGGERED:
            rho_r_now = setpoint_for_rate(rate, self.cfg.setpoints)
            run = detect_event(rho, rho_r_now, self.cfg.delta)
        if run:
            self.state = scheduler_run(self.state, rho, rate, self.cfg)
        dec = TickDecision(t_us, rho, self.state.rho_r,
                           self.state.last_gain if run else None, self.state.h, run, float(rate))
        self.trace.append(dec)
        return dec
