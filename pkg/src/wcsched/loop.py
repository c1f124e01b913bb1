"""Control loops: DC-motor plant, discretized PID, sensor and ZOH actuator."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .kernel import SimulationFault

MOTOR_GAIN = 2029.826
MOTOR_POLES = (-26.29, -2.296)

# IAE / plant sub-step grid, microseconds
SUBSTEP_US = 1000


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @classmethod
    def from_poles(cls, gain=MOTOR_GAIN, poles=MOTOR_POLES):
        """Controllable canonical realization of gain / ((s - p1)(s - p2))."""
        p1, p2 = poles
        a0 = p1 * p2
        a1 = -(p1 + p2)
        A = np.array([[0.0, 1.0], [-a0, -a1]])
        B = np.array([[0.0], [1.0]])
        C = np.array([[gain, 0.0]])
        return cls(A, B, C)

    def dc_gain(self) -> float:
        return float((self.C @ np.linalg.solve(-self.A, self.B))[0, 0])


DC_MOTOR = PlantModel.from_poles()


def zoh_discretize(plant: PlantModel, dt: float):
    """Exact zero-order-hold pair (Ad, Bd) for a step of ``dt`` seconds.

    Uses Sylvester's formula when A has two distinct real eigenvalues; any
    other A falls back to scipy's expm on the augmented matrix.
    """
    if dt <= 0:
        raise SimulationFault(f"zoh_discretize needs dt > 0, got {dt}")
    A, B = plant.A, plant.B
    n = A.shape[0]
    lam = np.linalg.eigvals(A)
    if n == 2 and np.all(np.isreal(lam)) and abs(lam[0] - lam[1]) > 1e-9 * max(1.0, abs(lam[0])):
        l1, l2 = float(lam[0].real), float(lam[1].real)
        eye = np.eye(2)
        M1 = (A - l2 * eye) / (l1 - l2)
        M2 = (A - l1 * eye) / (l2 - l1)
        Ad = np.exp(l1 * dt) * M1 + np.exp(l2 * dt) * M2
        phi1 = np.expm1(l1 * dt) / l1 if l1 != 0 else dt
        phi2 = np.expm1(l2 * dt) / l2 if l2 != 0 else dt
        Bd = (phi1 * M1 + phi2 * M2) @ B
        return Ad, Bd
    m = B.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = scipy.linalg.expm(aug * dt)
    return E[:n, :n], E[:n, n:]


@functools.lru_cache(maxsize=8192)
def _zoh_coeffs(a: tuple, b: tuple, dt_us: int):
    model = PlantModel(np.array(a).reshape(2, 2), np.array(b).reshape(2, 1), np.zeros((1, 2)))
    Ad, Bd = zoh_discretize(model, dt_us * 1e-6)
    return (Ad[0, 0], Ad[0, 1], Ad[1, 0], Ad[1, 1], Bd[0, 0], Bd[1, 0])


class Plant:
    """Continuous 2-state plant advanced exactly under a held input.

    ZOH matrices are cached per integer-microsecond step length.
    """

    def __init__(self, model: PlantModel = DC_MOTOR):
        self.model = model
        self.x0 = 0.0
        self.x1 = 0.0
        self.last_update = 0
        self._key = (tuple(model.A.ravel().tolist()), tuple(model.B.ravel().tolist()))
        self._c = tuple(float(v) for v in model.C[0])

    @property
    def x(self):
        return np.array([self.x0, self.x1])

    @property
    def y(self) -> float:
        return self._c[0] * self.x0 + self._c[1] * self.x1

    def _coeffs(self, dt_us: int):
        return _zoh_coeffs(self._key[0], self._key[1], dt_us)

    def step(self, u: float, dt_us: int):
        if dt_us < 0:
            raise SimulationFault("plant time reversal")
        if dt_us == 0:
            return
        a, b, c, d, e, f = self._coeffs(dt_us)
        x0, x1 = self.x0, self.x1
        self.x0 = a * x0 + b * x1 + e * u
        self.x1 = c * x0 + d * x1 + f * u
        self.last_update += dt_us


def plant_advance(plant: Plant, u: float, until: int, on_substep=None) -> Plant:
    """Advance ``plant`` to ``until`` (us) on a grid aligned to whole milliseconds.

    ``on_substep(t0, t1, y0, y1)`` is called for every sub-step, which is how
    the IAE integral is fed.
    """
    if until < plant.last_update:
        raise SimulationFault(f"plant_advance back in time: {until} < {plant.last_update}")
    while plant.last_update < until:
        t0 = plant.last_update
        t1 = min(until, (t0 // SUBSTEP_US + 1) * SUBSTEP_US)
        y0 = plant.y
        plant.step(u, t1 - t0)
        if on_substep is not None:
            on_substep(t0, t1, y0, plant.y)
    return plant


@dataclass(frozen=True)
class PidContinuous:
    kp: float = 0.1701
    ki: float = 0.378
    kd: float = 0.0


@dataclass
class PidDiscrete:
    kp: float
    ki_step: float
    kd_step: float
    h: float
    integral: float = 0.0
    method: str = "euler"
    e_prev: float = 0.0


def pid_discretize(c: PidContinuous, h: float, h_min: float = 0.002, h_max: float = 0.05,
                   carry: Optional[PidDiscrete] = None, method: str = "euler") -> PidDiscrete:
    """Discrete PID for period ``h`` seconds; the integral state carries over from ``carry``."""
    if not (h_min - 1e-12 <= h <= h_max + 1e-12):
        raise SimulationFault(f"sampling period {h} outside [{h_min}, {h_max}]")
    if method not in ("euler", "tustin"):
        raise SimulationFault(f"unknown discretization {method!r}")
    integral = carry.integral if carry is not None else 0.0
    e_prev = carry.e_prev if carry is not None else 0.0
    return PidDiscrete(c.kp, c.ki * h, c.kd / h, h, integral, method, e_prev)


def pid_compute(pid: PidDiscrete, ref: float, y: float) -> float:
    e = ref - y
    if pid.method == "tustin":
        pid.integral += pid.ki_step * 0.5 * (e + pid.e_prev)
    else:
        pid.integral += pid.ki_step * e
    u = pid.kp * e + pid.integral + pid.kd_step * (e - pid.e_prev)
    pid.e_prev = e
    return u


class Reference:
    """Piecewise-constant setpoint given as ``[(t_us, value), ...]``."""

    def __init__(self, steps):
        self.steps = sorted((int(t), float(v)) for t, v in steps)

    def __call__(self, t_us: float) -> float:
        val = 0.0
        for t, v in self.steps:
            if t <= t_us:
                val = v
            else:
                break
        return val

    @property
    def amplitude(self) -> float:
        return max((abs(v) for _, v in self.steps), default=0.0) or 1.0

    def breakpoints(self):
        return [t for t, _ in self.steps]


@dataclass
class Sample:
    loop_id: int
    index: int
    release: int
    deadline: int
    h_us: int
    y: float = 0.0
    met: Optional[bool] = None
    counted: bool = False


@dataclass
class LoopState:
    loop_id: int
    plant: Plant
    pid: PidDiscrete
    h_us: int
    reference: Reference
    u_held: float = 0.0
    last_tick: int = 0
    next_tick: int = 0
    samples: int = 0
    iae: float = 0.0
    max_abs_y: float = 0.0
    series: list = field(default_factory=list)


def simulate_ideal_loop(h_us: int, duration_us: int, reference: Optional[Reference] = None,
                        pid_c: PidContinuous = PidContinuous(), model: PlantModel = DC_MOTOR,
                        method: str = "euler"):
    """One loop closed over a zero-delay, lossless channel at a fixed period.

    Returns ``(iae, samples)`` where ``samples`` holds ``(t_us, y, u)`` at each
    sampling instant.
    """
    from .metrics import IaeAccumulator

    ref = reference or Reference([(0, 1.0)])
    plant = Plant(model)
    pid = pid_discretize(pid_c, h_us * 1e-6, h_min=h_us * 1e-6, h_max=h_us * 1e-6, method=method)
    acc = IaeAccumulator(1)
    samples = []
    t = 0
    while t <= duration_us:
        y = plant.y
        u = pid_compute(pid, ref(t), y)
        samples.append((t, y, u))
        nxt = min(t + h_us, duration_us)
        if nxt > t:
            plant_advance(plant, u, nxt,
                          lambda t0, t1, y0, y1: acc.add(0, ref(t0), y0, y1, (t1 - t0) * 1e-6))
        if nxt == duration_us:
            break
        t = nxt
    return acc.total, samples
