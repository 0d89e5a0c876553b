"""Deterministic discrete-event transport and fault injection.

A single-threaded scheduler executes events in (tick, sequence) order:
message deliveries, timer expiries and scenario actions. Coordination
and sidechain block clocks are bound to the tick stream (block_number =
tick // interval) and advance exactly at block boundaries as simulated
time moves. The full run is captured as a line-oriented trace whose
byte content is a pure function of (scenario, seed).

Faults arm on a named protocol step or at a tick, and act on node
crashes, message drops/delays, partitions, share corruption and
validator removal. Crashed nodes receive no deliveries and fire no
timers after their crash instant.
"""

import hashlib
import heapq
import random
from dataclasses import dataclass, fields, is_dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple


class NodeCrashed(Exception):
    """Raised inside a handler when a crash fault fires at a step."""


class FaultError(ValueError):
    pass


CRASH_NODE = "crash_node"
DROP_MESSAGE = "drop_message"
PARTITION = "partition"
DELAY_MESSAGE = "delay_message"
CORRUPT_SHARE = "corrupt_share"
REMOVE_VALIDATOR = "remove_validator"

FAULT_KINDS = (CRASH_NODE, DROP_MESSAGE, PARTITION, DELAY_MESSAGE,
               CORRUPT_SHARE, REMOVE_VALIDATOR)


@dataclass
class FaultSpec:
    """One injected fault: what happens, where, and when it arms."""

    kind: str
    node: Optional[str] = None            # target node id
    at_step: Optional[str] = None         # arm when this node emits this step
    at_tick: Optional[int] = None         # or arm at a tick (default 0)
    mtype: Optional[str] = None           # message-type filter (drop/delay)
    link: Optional[Tuple[str, str]] = None        # (sender, recipient) filter
    groups: Optional[Tuple[frozenset, frozenset]] = None  # partition sides
    duration: Optional[int] = None        # ticks the fault stays active
    extra_delay: int = 0                  # for delay_message
    count: Optional[int] = None           # max number of applications

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise FaultError(f"unknown fault kind {self.kind!r}")
        if self.kind == PARTITION and not self.groups:
            raise FaultError("partition fault needs two node groups")


@dataclass
class _ArmedFault:
    spec: FaultSpec
    armed_at: int
    remaining: Optional[int]

    def active(self, tick: int) -> bool:
        if self.spec.duration is not None and tick >= self.armed_at + self.spec.duration:
            return False
        if self.remaining is not None and self.remaining <= 0:
            return False
        return True


@dataclass(frozen=True)
class Message:
    sender: str
    recipient: str
    mtype: str
    body: dict
    req_id: Optional[int] = None
    reply_to: Optional[int] = None


def _canon(obj) -> str:
    """Stable textual form for payload digests."""
    if obj is None:
        return "~"
    if isinstance(obj, bool):
        return "T" if obj else "F"
    if isinstance(obj, (bytes, bytearray)):
        return "x" + bytes(obj).hex()
    if isinstance(obj, str):
        return "s" + obj
    if isinstance(obj, Enum):
        return f"e{obj.__class__.__name__}.{obj.name}"
    if is_dataclass(obj) and not isinstance(obj, type):
        inner = ",".join(
            f"{f.name}={_canon(getattr(obj, f.name))}" for f in fields(obj))
        return f"{obj.__class__.__name__}({inner})"
    if isinstance(obj, dict):
        inner = ",".join(
            f"{_canon(k)}:{_canon(v)}" for k, v in sorted(
                obj.items(), key=lambda kv: _canon(kv[0])))
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    try:
        return "i" + str(int(obj))  # covers int and gmpy2.mpz
    except (TypeError, ValueError):
        return "r" + repr(obj)


def payload_digest(obj) -> str:
    # trace digests are diagnostic, not protocol material: sha256 is
    # stable across runs and much faster than the pure-python keccak
    if obj is None:
        return "-"
    return hashlib.sha256(_canon(obj).encode()).hexdigest()[:8]


def tag_str(tag) -> str:
    """Compact, space-free rendering of timer tags and identifiers."""
    if isinstance(tag, tuple):
        return ":".join(tag_str(part) for part in tag)
    short = getattr(tag, "short", None)
    if callable(short):
        return short()
    return str(tag).replace(" ", "_")


@dataclass
class TraceRecord:
    tick: int
    node: str
    kind: str
    reason: str
    digest: str

    def line(self) -> str:
        reason = self.reason.replace(" ", "_")
        return (f"tick={self.tick} node={self.node} kind={self.kind} "
                f"reason={reason} digest={self.digest}")


class SimNet:
    """The event loop, clock bindings, trace sink and fault registry."""

    def __init__(self, seed: int = 0, default_latency: int = 3,
                 jitter: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)
        self.default_latency = default_latency
        self.jitter = jitter
        self.tick = 0
        self._seq = 0
        self._queue: List[tuple] = []
        self._nodes: Dict[str, object] = {}
        self.crashed: set = set()
        self.trace: List[TraceRecord] = []
        self._faults: List[_ArmedFault] = []
        self._pending_faults: List[FaultSpec] = []
        self._clocks: List[tuple] = []  # (name, chain_obj, interval)
        self._fault_listeners: List[Callable] = []
        self.tick_limit_hit = False

    # -- registration ------------------------------------------------------

    def register(self, node_id: str, node) -> None:
        if node_id in self._nodes:
            raise FaultError(f"duplicate node id {node_id}")
        self._nodes[node_id] = node

    def bind_clock(self, name: str, chain, interval: int) -> None:
        """Drive chain.advance_block so block_number == tick // interval."""
        if interval < 1:
            raise FaultError("block interval must be >= 1")
        self._clocks.append((name, chain, interval))

    def on_fault_armed(self, listener: Callable) -> None:
        self._fault_listeners.append(listener)

    # -- trace --------------------------------------------------------------

    def record(self, node: str, kind: str, reason: str, payload=None) -> None:
        self.trace.append(TraceRecord(self.tick, node, kind, reason,
                                      payload_digest(payload)))

    def trace_lines(self) -> str:
        return "\n".join(r.line() for r in self.trace) + ("\n" if self.trace else "")

    # -- faults ---------------------------------------------------------------

    def inject(self, spec: FaultSpec) -> None:
        if spec.at_step is not None:
            self._pending_faults.append(spec)
        else:
            at = spec.at_tick or 0
            if at <= self.tick:
                self._arm(spec)
            else:
                self._push(at, "arm_fault", spec)

    def _arm(self, spec: FaultSpec) -> None:
        armed = _ArmedFault(spec=spec, armed_at=self.tick, remaining=spec.count)
        self._faults.append(armed)
        self.record(spec.node or "-", "fault", f"armed:{spec.kind}", spec)
        for listener in self._fault_listeners:
            listener(spec)
        if spec.kind == CRASH_NODE and spec.node is not None:
            self._crash(spec.node)

    def _crash(self, node_id: str) -> None:
        if node_id not in self.crashed:
            self.crashed.add(node_id)
            self.record(node_id, "crash", "node-crashed")

    def is_fault_active(self, kind: str, node_id: str) -> bool:
        return any(f.spec.kind == kind and f.spec.node == node_id
                   and f.active(self.tick) for f in self._faults)

    def step(self, node_id: str, reason: str, payload=None) -> None:
        """Protocol-step hook: traces the step, arms step-triggered
        faults, and raises NodeCrashed when a crash fault fires here."""
        if node_id in self.crashed:
            raise NodeCrashed(node_id)
        self.record(node_id, "step", reason, payload)
        fired = [f for f in self._pending_faults
                 if f.at_step == reason and (f.node is None or f.node == node_id)]
        for spec in fired:
            self._pending_faults.remove(spec)
            self._arm(spec)
        if node_id in self.crashed:
            raise NodeCrashed(node_id)

    def _message_intercepted(self, msg: Message) -> Optional[str]:
        for armed in self._faults:
            spec = armed.spec
            if not armed.active(self.tick):
                continue
            if spec.kind == PARTITION:
                a, b = spec.groups
                if ((msg.sender in a and msg.recipient in b)
                        or (msg.sender in b and msg.recipient in a)):
                    return "partitioned"
            elif spec.kind == DROP_MESSAGE:
                if spec.mtype is not None and spec.mtype != msg.mtype:
                    continue
                if spec.link is not None and spec.link != (msg.sender, msg.recipient):
                    continue
                if spec.node is not None and spec.node not in (msg.sender, msg.recipient):
                    continue
                if armed.remaining is not None:
                    armed.remaining -= 1
                return "dropped"
        return None

    def _message_delay(self, msg: Message) -> int:
        extra = 0
        for armed in self._faults:
            spec = armed.spec
            if spec.kind != DELAY_MESSAGE or not armed.active(self.tick):
                continue
            if spec.mtype is not None and spec.mtype != msg.mtype:
                continue
            if spec.node is not None and spec.node not in (msg.sender, msg.recipient):
                continue
            if armed.remaining is not None:
                armed.remaining -= 1
            extra += spec.extra_delay
        return extra

    # -- scheduling ---------------------------------------------------------

    def _push(self, tick: int, kind: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (tick, self._seq, kind, payload))

    def send(self, msg: Message, latency: Optional[int] = None) -> None:
        """Schedule delivery after latency plus seeded jitter, unless a
        fault intercepts (drops are silent to the sender, logged)."""
        verdict = self._message_intercepted(msg)
        if verdict is not None:
            self.record(msg.sender, "drop", f"{verdict}:{msg.mtype}", msg.body)
            return
        lat = self.default_latency if latency is None else latency
        lat += self._message_delay(msg)
        if self.jitter:
            lat += self.rng.randrange(self.jitter + 1)
        self.record(msg.sender, "send", msg.mtype, msg.body)
        self._push(self.tick + max(lat, 0), "deliver", msg)

    def set_timer(self, node_id: str, tag, at_tick: int) -> None:
        self._push(max(at_tick, self.tick), "timer", (node_id, tag))

    def call_soon(self, fn: Callable, delay: int = 0) -> None:
        """Schedule a scenario action or engine continuation."""
        self._push(self.tick + delay, "action", fn)

    # -- the loop ------------------------------------------------------------

    def _advance_clocks(self, new_tick: int) -> None:
        for name, chain, interval in self._clocks:
            target = new_tick // interval
            while chain.block_number < target:
                chain.advance_block(1)
                self.record(name, "block", f"height:{chain.block_number}")

    def run_until_quiescent(self, max_ticks: int = 100_000) -> List[TraceRecord]:
        """Execute events in total order until the queue drains or the
        tick limit is exceeded (reported in the trace, not raised)."""
        while self._queue:
            tick, _seq, kind, payload = self._queue[0]
            if tick > max_ticks:
                self.tick_limit_hit = True
                self.record("-", "halt", f"tick-limit:{max_ticks}")
                break
            heapq.heappop(self._queue)
            if tick > self.tick:
                self._advance_clocks(tick)
                self.tick = tick
            self._dispatch(kind, payload)
        return self.trace

    def _dispatch(self, kind: str, payload) -> None:
        if kind == "arm_fault":
            self._arm(payload)
            return
        if kind == "action":
            try:
                payload()
            except NodeCrashed:
                pass
            return
        if kind == "deliver":
            msg: Message = payload
            if msg.recipient in self.crashed:
                self.record(msg.recipient, "drop", f"recipient-crashed:{msg.mtype}")
                return
            node = self._nodes.get(msg.recipient)
            if node is None:
                self.record(msg.recipient, "drop", f"unknown-recipient:{msg.mtype}")
                return
            self.record(msg.recipient, "deliver", msg.mtype, msg.body)
            try:
                node.on_message(msg)
            except NodeCrashed:
                pass
            return
        if kind == "timer":
            node_id, tag = payload
            if node_id in self.crashed:
                return
            node = self._nodes.get(node_id)
            if node is None:
                return
            self.record(node_id, "timer", tag_str(tag))
            try:
                node.on_timer(tag)
            except NodeCrashed:
                pass
