"""Flat ``key = value`` scenario files.

One assignment per line, ``#`` starts a comment.  Durations accept ``us``,
``ms`` or ``s`` suffixes (a bare number means seconds).  Lists are
comma-separated ``a:b`` pairs, e.g. ``rate = 0:11, 4s:5.5``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .dcf import RATES, ConfigurationError, MacParams
from .scheduler import MODES, SchedulerConfig, SchedulerConfigError


class ConfigError(ValueError):
    def __init__(self, key: Optional[str], line: Optional[int], msg: str):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{msg}")


@dataclass(frozen=True)
class Interference:
    period_us: int = 10_000
    payload_bytes: int = 1024


@dataclass(frozen=True)
class ScenarioConfig:
    n_loops: int = 3
    rates: tuple = ((0, 11.0),)
    interference: Optional[Interference] = None
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    duration_us: int = 8_000_000
    seed: int = 1
    replications: int = 1
    output: str = "out"
    mac: MacParams = field(default_factory=MacParams)
    payload_bytes: int = 1024
    reference: Optional[tuple] = None  # ((t_us, value), ...); None = step up at 0, down at half-time
    pid_method: str = "euler"
    kp: float = 0.1701
    ki: float = 0.378
    kd: float = 0.0
    phase_offset_us: int = 0

    def reference_steps(self):
        if self.reference is not None:
            return list(self.reference)
        return [(0, 1.0), (self.duration_us // 2, 0.0)]

    def rate_at(self, t_us: int) -> float:
        r = self.rates[0][1]
        for t, v in self.rates:
            if t <= t_us:
                r = v
        return r

    def validate(self):
        if self.n_loops < 1:
            raise ConfigError("n_loops", None, "must be >= 1")
        if self.duration_us < 0:
            raise ConfigError("duration", None, "must be >= 0")
        if self.replications < 1:
            raise ConfigError("replications", None, "must be >= 1")
        if not self.rates or self.rates[0][0] != 0:
            raise ConfigError("rate", None, "schedule must start at time 0")
        for _, r in self.rates:
            if r not in RATES:
                raise ConfigError("rate", None, f"{r} Mb/s is not an 802.11b rate {RATES}")
            if self.sched.mode != "none" and (r not in self.sched.setpoints or r not in self.sched.k0):
                raise ConfigError("rate", None, f"no rho_r / k0 entry for {r} Mb/s")
        if self.payload_bytes <= 0:
            raise ConfigError("payload", None, "must be positive")
        if self.pid_method not in ("euler", "tustin"):
            raise ConfigError("pid_method", None, "must be euler or tustin")
        if self.phase_offset_us < 0:
            raise ConfigError("phase_offset", None, "must be >= 0")
        if self.interference is not None and (self.interference.period_us <= 0
                                              or self.interference.payload_bytes <= 0):
            raise ConfigError("interference", None, "period and payload must be positive")
        try:
            self.mac.validate()
        except ConfigurationError as exc:
            raise ConfigError("mac", None, str(exc)) from None
        try:
            self.sched.validate(rates=[r for _, r in self.rates])
        except SchedulerConfigError as exc:
            raise ConfigError(_sched_key(str(exc)), None, str(exc)) from None
        return self


def _sched_key(msg: str) -> str:
    for key in ("delta_plus", "delta_minus", "delta", "mode", "k0", "setpoint", "h0", "t_ed"):
        if key in msg:
            return "rho_r" if key == "setpoint" else key
    return "scheduler"


_UNITS = {"us": 1, "ms": 1_000, "s": 1_000_000}
_DUR = re.compile(r"^\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*(us|ms|s)?\s*$")


def parse_duration(text: str) -> int:
    m = _DUR.match(text)
    if not m:
        raise ValueError(f"not a duration: {text!r}")
    return int(round(float(m.group(1)) * _UNITS[m.group(2) or "s"]))


def _pairs(text: str, first, second):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        a, sep, b = item.partition(":")
        if not sep:
            raise ValueError(f"expected a:b pair, got {item!r}")
        out.append((first(a.strip()), second(b.strip())))
    if not out:
        raise ValueError("empty list")
    return tuple(out)


def _rate(text: str) -> float:
    return float(text.strip().lower().removesuffix("mbps").removesuffix("mb/s"))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _interference(text: str):
    if text.strip().lower() in ("none", "off", ""):
        return None
    period, _, payload = text.partition(",")
    return Interference(parse_duration(period), int(payload) if payload.strip() else 1024)


# key -> (target, field, converter); target is "top", "sched" or "mac"
_KEYS = {
    "n_loops": ("top", "n_loops", int),
    "rate": ("top", "rates", lambda v: _pairs(v, parse_duration, _rate)),
    "interference": ("top", "interference", _interference),
    "duration": ("top", "duration_us", parse_duration),
    "seed": ("top", "seed", int),
    "replications": ("top", "replications", int),
    "output": ("top", "output", str),
    "payload": ("top", "payload_bytes", int),
    "reference": ("top", "reference", lambda v: _pairs(v, parse_duration, float)),
    "pid_method": ("top", "pid_method", str),
    "kp": ("top", "kp", float),
    "ki": ("top", "ki", float),
    "kd": ("top", "kd", float),
    "phase_offset": ("top", "phase_offset_us", parse_duration),
    "mode": ("sched", "mode", str),
    "t_ed": ("sched", "t_ed_us", parse_duration),
    "t_fs": ("sched", "t_fs_us", parse_duration),
    "delta": ("sched", "delta", float),
    "delta_plus": ("sched", "delta_plus", float),
    "delta_minus": ("sched", "delta_minus", float),
    "k0": ("sched", "k0", lambda v: dict(_pairs(v, _rate, float))),
    "rho_r": ("sched", "setpoints", lambda v: dict(_pairs(v, _rate, float))),
    "h0": ("sched", "h0", lambda v: parse_duration(v) / 1e6),
    "h_min": ("sched", "h_min", lambda v: parse_duration(v) / 1e6),
    "h_max": ("sched", "h_max", lambda v: parse_duration(v) / 1e6),
    "slot_time": ("mac", "slot_time", parse_duration),
    "difs": ("mac", "difs", parse_duration),
    "sifs": ("mac", "sifs", parse_duration),
    "phy_overhead": ("mac", "phy_overhead", parse_duration),
    "cw_min": ("mac", "cw_min", int),
    "cw_max": ("mac", "cw_max", int),
    "retry_limit": ("mac", "retry_limit", int),
    "mac_header": ("mac", "mac_header", int),
    "ack_bytes": ("mac", "ack_bytes", int),
}

# bare numbers for MAC timings mean microseconds, not seconds
_MAC_TIMES = {"slot_time", "difs", "sifs", "phy_overhead"}


def parse_config(text: str, **overrides) -> ScenarioConfig:
    """Parse and validate a scenario file; ``overrides`` use the file's key names."""
    top, sched, mac = {}, {}, {}
    dest = {"top": top, "sched": sched, "mac": mac}
    lines = {}
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key or None, lineno, "expected 'key = value'")
        items.append((key, value.strip(), lineno))
    for key, value in overrides.items():
        items.append((key, str(value), None))
    for key, value, lineno in items:
        if key not in _KEYS:
            raise ConfigError(key, lineno, "unknown key")
        target, name, conv = _KEYS[key]
        if key in _MAC_TIMES and re.fullmatch(r"\s*\d+\s*", value):
            value = value.strip() + "us"
        try:
            dest[target][name] = conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(key, lineno, f"malformed value {value!r} ({exc})") from None
        lines[key] = lineno
    if "mode" in sched and sched["mode"] not in MODES:
        raise ConfigError("mode", lines.get("mode"), f"must be one of {MODES}")
    cfg = ScenarioConfig(**top, sched=SchedulerConfig(**sched), mac=MacParams(**mac))
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(exc.key, lines.get(exc.key), str(exc).split(": ", 1)[-1]) from None


def load_config(path, **overrides) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


def _dur(us: int) -> str:
    return f"{int(us)}us"


def _num(v: float) -> str:
    return repr(float(v))


def emit_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; ``parse_config(emit_config(c)) == c``."""
    s, m = cfg.sched, cfg.mac
    out = [
        f"n_loops = {cfg.n_loops}",
        "rate = " + ", ".join(f"{_dur(t)}:{_num(r)}" for t, r in cfg.rates),
        "interference = " + ("none" if cfg.interference is None else
                             f"{_dur(cfg.interference.period_us)},{cfg.interference.payload_bytes}"),
        f"duration = {_dur(cfg.duration_us)}",
        f"seed = {cfg.seed}",
        f"replications = {cfg.replications}",
        f"output = {cfg.output}",
        f"payload = {cfg.payload_bytes}",
    ]
    if cfg.reference is not None:
        out.append("reference = " + ", ".join(f"{_dur(t)}:{_num(v)}" for t, v in cfg.reference))
    out += [
        f"pid_method = {cfg.pid_method}",
        f"kp = {_num(cfg.kp)}",
        f"ki = {_num(cfg.ki)}",
        f"kd = {_num(cfg.kd)}",
        f"phase_offset = {_dur(cfg.phase_offset_us)}",
        f"mode = {s.mode}",
        f"t_ed = {_dur(s.t_ed_us)}",
        f"t_fs = {_dur(s.t_fs_us)}",
        f"delta = {_num(s.delta)}",
        f"delta_plus = {_num(s.delta_plus)}",
        f"delta_minus = {_num(s.delta_minus)}",
        "k0 = " + ", ".join(f"{_num(r)}:{_num(v)}" for r, v in sorted(s.k0.items())),
        "rho_r = " + ", ".join(f"{_num(r)}:{_num(v)}" for r, v in sorted(s.setpoints.items())),
        f"h0 = {repr(s.h0)}s",
        f"h_min = {repr(s.h_min)}s",
        f"h_max = {repr(s.h_max)}s",
    ]
    for f in fields(MacParams):
        v = getattr(m, f.name)
        out.append(f"{f.name} = {_dur(v) if f.name in _MAC_TIMES else v}")
    return "\n".join(out) + "\n"


def with_changes(cfg: ScenarioConfig, sched=None, mac=None, **kw) -> ScenarioConfig:
    """Copy with top-level, scheduler (dict) and MAC (dict) fields replaced, then validate."""
    if sched:
        kw["sched"] = replace(cfg.sched, **sched)
    if mac:
        kw["mac"] = replace(cfg.mac, **mac)
    return replace(cfg, **kw).validate()
