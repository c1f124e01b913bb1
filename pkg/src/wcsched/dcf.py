"""IEEE 802.11b DCF medium access over a single shared cell.

All nodes hear each other; there is no capture, no hidden terminal and no bit
error, so a frame is lost only through collisions and retry exhaustion.

Idle-medium contention is resolved in closed form: while the medium is idle,
each contender would start transmitting at
``countdown_start + DIFS + backoff * slot``.  The earliest such instant wins,
every contender sharing that instant collides with it, and the others freeze
their counters after subtracting the whole slots they saw elapse.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .kernel import Kernel, RngStream, SimulationFault

RATES = (1.0, 2.0, 5.5, 11.0)

ON_TIME = "delivered_on_time"
LATE = "delivered_late"
DROPPED = "dropped"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MacParams:
    """802.11b DSSS timing; all durations in microseconds."""

    slot_time: int = 20
    difs: int = 50
    sifs: int = 10
    cw_min: int = 31
    cw_max: int = 1023
    retry_limit: int = 7
    phy_overhead: int = 192
    mac_header: int = 34
    ack_bytes: int = 14

    def validate(self):
        for name in ("slot_time", "difs", "sifs", "phy_overhead"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.cw_min < 0 or self.cw_min > self.cw_max:
            raise ConfigurationError("need 0 <= cw_min <= cw_max")
        if self.retry_limit < 0 or self.mac_header < 0 or self.ack_bytes <= 0:
            raise ConfigurationError("retry_limit, mac_header must be >= 0 and ack_bytes > 0")
        return self


def _check_rate(rate: float) -> int:
    """Return twice the rate as an int so airtimes stay in exact integer arithmetic."""
    if float(rate) not in RATES:
        raise ConfigurationError(f"unsupported rate {rate} Mb/s; choose one of {RATES}")
    return int(round(2 * float(rate)))


def _bits_airtime(bits: int, rate: float) -> int:
    r2 = _check_rate(rate)
    return -(-(2 * bits) // r2)


def frame_airtime(payload_bytes: int, rate: float, params: MacParams = MacParams()) -> int:
    """Airtime of a data frame in microseconds, rounded up to the next microsecond."""
    if payload_bytes <= 0:
        raise ConfigurationError("payload_bytes must be positive")
    return _bits_airtime((payload_bytes + params.mac_header) * 8, rate) + params.phy_overhead


def ack_airtime(rate: float, params: MacParams = MacParams()) -> int:
    # ACKs go out at the data rate
    return _bits_airtime(params.ack_bytes * 8, rate) + params.phy_overhead


@dataclass
class Frame:
    id: int
    kind: str  # "sensor" | "command" | "interference"
    loop_id: Optional[int]
    payload_bytes: int
    release_time: int
    deadline: Optional[int]
    src: int
    dst: int
    sample: object = None
    value: float = 0.0
    retries: int = 0
    fate: Optional[str] = None
    delivery_time: Optional[int] = None

    def __post_init__(self):
        # a command inherits its sample's deadline, which may already have passed
        if self.kind == "sensor" and (self.deadline is None or self.deadline <= self.release_time):
            raise SimulationFault(f"sensor frame {self.id} needs deadline > release_time")
        if self.kind == "command" and self.deadline is None:
            raise SimulationFault(f"command frame {self.id} needs a deadline")


@dataclass(frozen=True)
class TxOutcome:
    frame_id: int
    fate: str
    delivery_time: Optional[int] = None
    drop_reason: Optional[str] = None
    retries: int = 0

    @property
    def missed(self) -> bool:
        return self.fate != ON_TIME


def classify_outcome(frame: Frame, delivery: Optional[int]) -> TxOutcome:
    """``delivery=None`` means the frame was dropped after exhausting its retries."""
    if delivery is None:
        return TxOutcome(frame.id, DROPPED, None, "retry_exhausted", frame.retries)
    if frame.deadline is not None and delivery > frame.deadline:
        return TxOutcome(frame.id, LATE, delivery, None, frame.retries)
    return TxOutcome(frame.id, ON_TIME, delivery, None, frame.retries)


def resolve_channel(transmissions):
    """Map each ``(node, start, end)`` to True (success) or False (collision).

    A transmission succeeds iff no other transmission overlaps it in time.
    """
    txs = list(transmissions)
    result = {}
    for i, (node, s, e) in enumerate(txs):
        ok = True
        for j, (_, s2, e2) in enumerate(txs):
            if i != j and s < e2 and s2 < e:
                ok = False
                break
        result[node] = ok
    return result


IDLE = "idle"
DIFS_WAIT = "difs_wait"
BACKOFF = "backoff"
TRANSMITTING = "transmitting"
AWAIT_ACK = "await_ack"


@dataclass
class MacNode:
    node_id: int
    rng: RngStream
    params: MacParams = field(default_factory=MacParams)
    state: str = IDLE
    queue: deque = field(default_factory=deque)
    backoff_slots_remaining: Optional[int] = None
    cw: int = -1
    retry_count: int = 0
    # instant the node (re)entered contention
    ready_time: int = 0

    def __post_init__(self):
        if self.cw < 0:
            self.cw = self.params.cw_min

    @property
    def contending(self) -> bool:
        return self.state in (DIFS_WAIT, BACKOFF)

    def draw_backoff(self) -> int:
        return draw_backoff(self)

    def _next_or_idle(self, actions):
        self.cw = self.params.cw_min
        self.retry_count = 0
        if self.queue:
            # post-transmission backoff before the next queued frame
            self.state = BACKOFF
            self.backoff_slots_remaining = self.draw_backoff()
            actions.append(("contend",))
        else:
            self.state = IDLE
            self.backoff_slots_remaining = None
        return actions

    def mac_step(self, trigger: str, frame: Optional[Frame] = None,
                 medium_idle: bool = True, slots: int = 0):
        return mac_step(self, trigger, frame=frame, medium_idle=medium_idle, slots=slots)


def draw_backoff(node: MacNode) -> int:
    return node.rng.uniform_int(0, node.cw)


def mac_step(node: MacNode, trigger: str, frame: Optional[Frame] = None,
             medium_idle: bool = True, slots: int = 0):
    """Advance one node's DCF state machine and return the resulting actions.

    Triggers: ``frame-queued``, ``medium-idle`` (medium idle for DIFS),
    ``slot-elapsed`` (``slots`` idle slots counted down), ``medium-busy``,
    ``tx-end``, ``ack-received``, ``ack-timeout``.  Actions are tuples:
    ``("contend",)``, ``("transmit", frame)``, ``("delivered", frame)``,
    ``("dropped", frame)``.
    """
    st = node.state
    actions = []
    if trigger == "frame-queued":
        node.queue.append(frame)
        if st == IDLE:
            if medium_idle:
                node.state = DIFS_WAIT
                node.backoff_slots_remaining = None
            else:
                node.state = BACKOFF
                node.backoff_slots_remaining = node.draw_backoff()
            actions.append(("contend",))
        return actions

    if trigger == "medium-idle":
        if st == DIFS_WAIT or (st == BACKOFF and node.backoff_slots_remaining == 0):
            node.state = TRANSMITTING
            node.backoff_slots_remaining = None
            actions.append(("transmit", node.queue[0]))
            return actions
        if st == BACKOFF:
            return actions
    elif trigger == "slot-elapsed":
        if st == BACKOFF and 0 < slots <= node.backoff_slots_remaining:
            node.backoff_slots_remaining -= slots
            if node.backoff_slots_remaining == 0:
                node.state = TRANSMITTING
                node.backoff_slots_remaining = None
                actions.append(("transmit", node.queue[0]))
            return actions
    elif trigger == "medium-busy":
        if st == DIFS_WAIT:
            node.state = BACKOFF
            node.backoff_slots_remaining = node.draw_backoff()
            return actions
        if st in (BACKOFF, IDLE, AWAIT_ACK):
            return actions
    elif trigger == "tx-end":
        if st == TRANSMITTING:
            node.state = AWAIT_ACK
            return actions
    elif trigger == "ack-received":
        if st == AWAIT_ACK:
            done = node.queue.popleft()
            actions.append(("delivered", done))
            return node._next_or_idle(actions)
    elif trigger == "ack-timeout":
        if st == AWAIT_ACK:
            head = node.queue[0]
            if node.retry_count >= node.params.retry_limit:
                node.queue.popleft()
                actions.append(("dropped", head))
                return node._next_or_idle(actions)
            node.retry_count += 1
            head.retries = node.retry_count
            node.cw = min(2 * node.cw + 1, node.params.cw_max)
            node.state = BACKOFF
            node.backoff_slots_remaining = node.draw_backoff()
            actions.append(("contend",))
            return actions
    raise SimulationFault(f"node {node.node_id}: trigger {trigger!r} invalid in state {st!r}")


@dataclass
class TxRecord:
    node: int
    frame_id: int
    start: int
    end: int
    success: bool


class Wlan:
    """Shared single-cell channel coordinating every MacNode through the kernel."""

    def __init__(self, kernel: Kernel, params: MacParams, rate: float,
                 listener: Optional[Callable[[Frame, TxOutcome], None]] = None,
                 keep_tx_log: bool = False):
        self.kernel = kernel
        self.params = params.validate()
        self.set_rate(rate)
        self.listener = listener
        self.nodes: dict[int, MacNode] = {}
        self.busy = False
        self.idle_since = 0
        self._token = 0
        self._next_frame_id = 0
        self.frames: list[Frame] = []
        self.outcomes: list[TxOutcome] = []
        self.tx_log: Optional[list[TxRecord]] = [] if keep_tx_log else None

    def set_rate(self, rate: float):
        _check_rate(rate)
        self.rate = float(rate)

    def add_node(self, node_id: int) -> MacNode:
        node = MacNode(node_id, self.kernel.stream(node_id), self.params)
        self.nodes[node_id] = node
        return node

    def new_frame(self, kind, loop_id, payload_bytes, deadline, src, dst, sample=None, value=0.0):
        f = Frame(self._next_frame_id, kind, loop_id, payload_bytes, self.kernel.now(),
                  deadline, src, dst, sample, value)
        self._next_frame_id += 1
        self.frames.append(f)
        return f

    def enqueue(self, frame: Frame):
        node = self.nodes[frame.src]
        acts = node.mac_step("frame-queued", frame=frame, medium_idle=not self.busy)
        if acts:
            node.ready_time = self.kernel.now()
            self._reschedule()

    # contention -----------------------------------------------------------

    def _countdown_start(self, node: MacNode) -> int:
        return max(self.idle_since, node.ready_time)

    def _tx_instant(self, node: MacNode) -> int:
        b = node.backoff_slots_remaining or 0
        return self._countdown_start(node) + self.params.difs + b * self.params.slot_time

    def _reschedule(self):
        self._token += 1
        if self.busy:
            return
        contenders = [n for n in self.nodes.values() if n.contending]
        if not contenders:
            return
        t_star = min(self._tx_instant(n) for n in contenders)
        token = self._token
        self.kernel.at(t_star, "contention_end", lambda: self._on_contention_end(token))

    def _on_contention_end(self, token: int):
        if token != self._token:
            return
        now = self.kernel.now()
        p = self.params
        starters = []
        for node in self.nodes.values():
            if not node.contending:
                continue
            t_n = self._tx_instant(node)
            if t_n == now:
                if node.state == BACKOFF and node.backoff_slots_remaining:
                    acts = node.mac_step("slot-elapsed", slots=node.backoff_slots_remaining)
                else:
                    acts = node.mac_step("medium-idle")
                starters.append((node, acts[0][1]))
            else:
                counted = now - self._countdown_start(node) - p.difs
                if node.state == BACKOFF and counted >= p.slot_time:
                    node.mac_step("slot-elapsed", slots=counted // p.slot_time)
                node.mac_step("medium-busy")
        self._start_transmissions(starters)

    def _start_transmissions(self, starters):
        now = self.kernel.now()
        p = self.params
        self.busy = True
        self._token += 1
        spans = []
        for node, frame in starters:
            spans.append((node.node_id, now, now + frame_airtime(frame.payload_bytes, self.rate, p)))
        ok = resolve_channel(spans)
        ack_t = p.sifs + ack_airtime(self.rate, p)
        if self.tx_log is not None:
            for (nid, s, e), (_, frame) in zip(spans, starters):
                self.tx_log.append(TxRecord(nid, frame.id, s, e, ok[nid]))
        if len(starters) == 1 and ok[starters[0][0].node_id]:
            node = starters[0][0]
            end = spans[0][2]
            self.kernel.at(end, "tx_end", lambda: node.mac_step("tx-end"), node.node_id)
            self.kernel.at(end + ack_t, "ack", lambda: self._on_ack(node), node.node_id)
            return
        busy_end = max(e for _, _, e in spans)
        for (nid, _, e), (node, _) in zip(spans, starters):
            self.kernel.at(e, "tx_end", lambda n=node: n.mac_step("tx-end"), nid)
            self.kernel.at(e + ack_t, "ack_timeout", lambda n=node: self._on_ack_timeout(n), nid)
        self.kernel.at(busy_end, "medium_idle", self._on_medium_idle)

    def _on_medium_idle(self):
        self.busy = False
        self.idle_since = self.kernel.now()
        self._reschedule()

    def _on_ack(self, node: MacNode):
        self.busy = False
        self.idle_since = self.kernel.now()
        self._handle(node, node.mac_step("ack-received"))
        self._reschedule()

    def _on_ack_timeout(self, node: MacNode):
        self._handle(node, node.mac_step("ack-timeout"))
        self._reschedule()

    def _handle(self, node: MacNode, actions):
        now = self.kernel.now()
        if any(act[0] == "contend" for act in actions):
            node.ready_time = now
        for act in actions:
            if act[0] == "delivered":
                self._finish(act[1], now)
            elif act[0] == "dropped":
                self._finish(act[1], None)

    def _finish(self, frame: Frame, delivery: Optional[int]):
        out = classify_outcome(frame, delivery)
        frame.fate = out.fate
        frame.delivery_time = delivery
        self.outcomes.append(out)
        if self.listener is not None:
            self.listener(frame, out)

    def fate_counts(self) -> dict:
        counts = {ON_TIME: 0, LATE: 0, DROPPED: 0, "pending": 0}
        for f in self.frames:
            counts[f.fate or "pending"] += 1
        counts["enqueued"] = len(self.frames)
        return counts


__all__ = [
    "MacParams", "Frame", "TxOutcome", "MacNode", "Wlan", "TxRecord",
    "frame_airtime", "ack_airtime", "draw_backoff", "mac_step", "resolve_channel",
    "classify_outcome", "ConfigurationError", "RATES", "ON_TIME", "LATE", "DROPPED",
]
