"""Deterministic discrete-event core: timeline, node clocks and radio links.

Events are ordered by ``(at_ms, seq)``; ``seq`` is a global insertion
counter, so simultaneous events run in the order they were scheduled.

All randomness comes from one ``random.Random`` seeded by the scenario.
Every ``send_frame`` call draws, in this order:

1. one uniform variate deciding loss (drawn even when ``loss_prob`` is 0);
2. if the frame survives, one uniform variate for the latency jitter.
"""

from __future__ import annotations

import enum
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

MAX_DRIFT_PPM = 200.0


class Role(enum.Enum):
    BASE_STATION = "base"
    MOTHERSHIP = "mothership"
    MASTER_FF = "master"
    SLAVE_FF = "slave"
    DEBRIS = "debris"


@dataclass(frozen=True, order=True)
class NodeId:
    role: Role
    index: int = 0

    @property
    def name(self) -> str:
        return self.role.value if self.index == 0 else f"{self.role.value}{self.index}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class NodeClock:
    """Local time = global + offset + drift (ppm) * global."""

    offset_ms: float = 0.0
    drift_ppm: float = 0.0
    max_drift_ppm: float = MAX_DRIFT_PPM

    def __post_init__(self):
        if abs(self.drift_ppm) > self.max_drift_ppm:
            raise ValueError(f"|drift| {self.drift_ppm} ppm exceeds {self.max_drift_ppm} ppm")

    def local_now(self, global_ms: float) -> float:
        return global_ms + self.offset_ms + self.drift_ppm * global_ms / 1e6

    def to_global(self, local_ms: float) -> float:
        return (local_ms - self.offset_ms) / (1.0 + self.drift_ppm / 1e6)


def local_now(clock: NodeClock, global_ms: float) -> float:
    return clock.local_now(global_ms)


@dataclass(frozen=True)
class LinkModel:
    base_latency_ms: float = 5.0
    jitter_ms: float = 2.0
    loss_prob: float = 0.0
    framing_overhead_bytes: int = 58

    def __post_init__(self):
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        if self.jitter_ms > self.base_latency_ms:
            raise ValueError("jitter half-width must not exceed the base latency")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")
        if self.framing_overhead_bytes < 0:
            raise ValueError("framing overhead must be non-negative")


class EventKind(enum.Enum):
    DELIVER = "deliver"
    TIMER = "timer"
    PHYSICS = "physics"


@dataclass(frozen=True)
class Frame:
    src: str
    dst: str
    data: bytes
    on_air_bytes: int


@dataclass(order=True)
class SimEvent:
    at_ms: float
    seq: int
    kind: EventKind = field(compare=False)
    node: str = field(compare=False)
    frame: Optional[Frame] = field(default=None, compare=False)
    tag: str = field(default="", compare=False)
    data: Dict[str, Any] = field(default_factory=dict, compare=False)
    cancelled: bool = field(default=False, compare=False)


class SimulationError(RuntimeError):
    pass


@dataclass
class Counters:
    sent: int = 0
    delivered: int = 0
    lost: int = 0
    retransmitted: int = 0

    @property
    def in_flight(self) -> int:
        return self.sent - self.delivered - self.lost


def send_frame(
    src: str,
    dst: str,
    data: bytes,
    now_ms: float,
    link: LinkModel,
    rng: random.Random,
    seq: int = 0,
) -> Optional[SimEvent]:
    """Deliver event for a frame, or None if the link drops it."""
    if src == dst:
        raise ValueError("source and destination must differ")
    if rng.random() < link.loss_prob:
        return None
    jitter = (2.0 * rng.random() - 1.0) * link.jitter_ms
    frame = Frame(src, dst, bytes(data), link.framing_overhead_bytes + len(data))
    return SimEvent(now_ms + link.base_latency_ms + jitter, seq, EventKind.DELIVER, dst, frame)


Handler = Callable[["Simulator", SimEvent], Optional[Dict[str, Any]]]


def _round(t: float) -> float:
    return round(t, 6)


class Simulator:
    """Single-threaded event loop; nodes register one handler each.

    A handler returns a dict describing what it did; that dict becomes the
    ``detail`` field of the event's log record.
    """

    def __init__(
        self,
        seed: int = 0,
        default_link: LinkModel = LinkModel(),
        links: Optional[Dict[str, LinkModel]] = None,
    ):
        self.rng = random.Random(seed)
        self.default_link = default_link
        self.links = dict(links or {})
        self.now = 0.0
        self.counters = Counters()
        self.log: List[Dict[str, Any]] = []
        self._queue: List[SimEvent] = []
        self._seq = 0
        self._handlers: Dict[str, Handler] = {}

    def register(self, node: str, handler: Handler) -> None:
        self._handlers[node] = handler

    def link_for(self, src: str, dst: str) -> LinkModel:
        return self.links.get(src) or self.links.get(dst) or self.default_link

    def _push(self, event: SimEvent) -> SimEvent:
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule(self, at_ms: float, kind: EventKind, node: str, tag: str = "", **data) -> SimEvent:
        if at_ms < self.now:
            raise SimulationError(f"cannot schedule {kind.value}:{tag} for {node} in the past ({at_ms} < {self.now})")
        return self._push(SimEvent(at_ms, 0, kind, node, tag=tag, data=data))

    @staticmethod
    def cancel(event: Optional[SimEvent]) -> None:
        """Drop a scheduled timer; it is neither dispatched nor logged."""
        if event is not None:
            if event.kind is EventKind.DELIVER:
                raise SimulationError("frames in flight cannot be cancelled")
            event.cancelled = True

    def send(self, src: str, dst: str, data: bytes) -> Optional[SimEvent]:
        self.counters.sent += 1
        event = send_frame(src, dst, data, self.now, self.link_for(src, dst), self.rng)
        if event is None:
            self.counters.lost += 1
            return None
        return self._push(event)

    @property
    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def run_until(self, t_end_ms: float) -> "Simulator":
        if t_end_ms < self.now:
            raise SimulationError(f"t_end {t_end_ms} is before current time {self.now}")
        while self._queue and self._queue[0].at_ms <= t_end_ms:
            event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            self.now = event.at_ms
            if event.kind is EventKind.DELIVER:
                self.counters.delivered += 1
            handler = self._handlers.get(event.node)
            if handler is None:
                raise SimulationError(f"no handler for node {event.node!r} (event {self.describe(event)})")
            try:
                detail = handler(self, event)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(f"handler failed on {self.describe(event)}: {exc}") from exc
            self.log.append(
                {
                    "t_global": _round(event.at_ms),
                    "node": event.node,
                    "kind": event.kind.value,
                    "detail": detail or {},
                }
            )
        self.now = t_end_ms
        return self

    @staticmethod
    def describe(event: SimEvent) -> str:
        what = event.tag or (f"frame from {event.frame.src}" if event.frame else "")
        return f"{event.kind.value}@{event.at_ms:.6f} node={event.node} {what}".rstrip()

    def events_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=False, separators=(",", ":")) + "\n" for rec in self.log)
