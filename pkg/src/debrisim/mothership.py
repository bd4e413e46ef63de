"""Mothership CoAP server: the ``/mission`` and ``/logging`` resources.

The mission resource walks a fixed cycle of phases::

    Idle -> Announced -> Scheduled -> Running -> Done -> Idle

The base station announces parameters, the master registers a start time,
the slave polls until it sees that start time, and the server resets itself
once the mission window has elapsed so another round can follow.

Payloads are ASCII ``key:value`` pairs separated by commas, e.g.
``speed:40,len:1500,start:660``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Tuple

from . import coap
from .coap import CoapMessage, Code, MessageType

MISSION_PATH = "mission"
LOGGING_PATH = "logging"


class MissionPhase(enum.Enum):
    IDLE = "Idle"
    ANNOUNCED = "Announced"
    SCHEDULED = "Scheduled"
    RUNNING = "Running"
    DONE = "Done"


_NEXT_PHASE = {
    MissionPhase.IDLE: MissionPhase.ANNOUNCED,
    MissionPhase.ANNOUNCED: MissionPhase.SCHEDULED,
    MissionPhase.SCHEDULED: MissionPhase.RUNNING,
    MissionPhase.RUNNING: MissionPhase.DONE,
    MissionPhase.DONE: MissionPhase.IDLE,
}


class MissionError(Exception):
    """A request the mission resource refuses; carries the response code."""

    def __init__(self, code: Code, reason: str):
        super().__init__(reason)
        self.code = code


class PayloadError(ValueError):
    pass


@dataclass(frozen=True)
class MissionParams:
    motor_speed: int
    mission_length_ms: int

    def __post_init__(self):
        if not 0 <= self.motor_speed <= 100:
            raise ValueError(f"motor_speed {self.motor_speed} outside 0..100")
        if self.mission_length_ms <= 0:
            raise ValueError("mission_length_ms must be positive")


@dataclass
class MissionRecord:
    params: Optional[MissionParams] = None
    start_time_ms: Optional[int] = None
    phase: MissionPhase = MissionPhase.IDLE


@dataclass(frozen=True)
class LogEntry:
    source: str
    server_rx_time_ms: float
    payload: str


_PAIR_RE = re.compile(r"([a-z]+):(\d+)\Z")
_KEYS = ("speed", "len", "start")


def parse_payload(text: str) -> Dict[str, int]:
    if not text:
        raise PayloadError("empty payload")
    fields: Dict[str, int] = {}
    for part in text.split(","):
        m = _PAIR_RE.match(part)
        if m is None:
            raise PayloadError(f"malformed pair {part!r}")
        key, value = m.group(1), int(m.group(2))
        if key not in _KEYS:
            raise PayloadError(f"unknown key {key!r}")
        if key in fields:
            raise PayloadError(f"duplicate key {key!r}")
        fields[key] = value
    return fields


def format_payload(**fields: int) -> str:
    return ",".join(f"{k}:{fields[k]}" for k in _KEYS if fields.get(k) is not None)


class Mothership:
    """Mission/logging resources plus CoAP request dispatch.

    ``now_ms`` arguments are on the server's own clock.
    """

    def __init__(self, name: str = "mothership"):
        self.name = name
        self.record = MissionRecord()
        self.logs: List[LogEntry] = []
        self.transitions: List[Tuple[float, MissionPhase, MissionPhase]] = []
        self._responses: Dict[Tuple[Hashable, int], CoapMessage] = {}
        self._mids = coap.MessageIds()

    @property
    def phase(self) -> MissionPhase:
        return self.record.phase

    def _advance(self, target: MissionPhase, now_ms: float) -> None:
        current = self.record.phase
        if _NEXT_PHASE[current] is not target:
            raise RuntimeError(f"illegal phase transition {current.value} -> {target.value}")
        self.record.phase = target
        self.transitions.append((now_ms, current, target))

    # -- resource operations --------------------------------------------------

    def put_mission_params(self, params: MissionParams, now_ms: float) -> None:
        if self.record.phase is not MissionPhase.IDLE:
            raise MissionError(Code.BAD_REQUEST, "mission already in progress")
        self.record.params = params
        self._advance(MissionPhase.ANNOUNCED, now_ms)

    def get_mission(self) -> str:
        rec = self.record
        if rec.phase is MissionPhase.IDLE or rec.params is None:
            raise MissionError(Code.NOT_FOUND, "no mission announced")
        return format_payload(
            speed=rec.params.motor_speed,
            len=rec.params.mission_length_ms,
            start=rec.start_time_ms,
        )

    def put_start_time(self, start_time_ms: int, now_ms: float) -> None:
        if self.record.phase is not MissionPhase.ANNOUNCED:
            raise MissionError(Code.BAD_REQUEST, f"cannot schedule in phase {self.record.phase.value}")
        if start_time_ms <= now_ms:
            raise MissionError(Code.BAD_REQUEST, f"start {start_time_ms} is not after now {now_ms}")
        self.record.start_time_ms = start_time_ms
        self._advance(MissionPhase.SCHEDULED, now_ms)

    def put_log(self, source: str, payload: str, now_ms: float) -> LogEntry:
        entry = LogEntry(source, now_ms, payload)
        self.logs.append(entry)
        return entry

    def tick(self, now_ms: float) -> Optional[MissionPhase]:
        """Advance the mission clock; at most one transition per tick."""
        rec = self.record
        if rec.phase is MissionPhase.SCHEDULED and now_ms >= rec.start_time_ms:
            self._advance(MissionPhase.RUNNING, now_ms)
        elif rec.phase is MissionPhase.RUNNING and now_ms >= rec.start_time_ms + rec.params.mission_length_ms:
            self._advance(MissionPhase.DONE, now_ms)
        elif rec.phase is MissionPhase.DONE:
            rec.params = None
            rec.start_time_ms = None
            self._advance(MissionPhase.IDLE, now_ms)
        else:
            return None
        return rec.phase

    # -- CoAP dispatch ------------------------------------------------------------

    def _put_mission(self, payload: str, now_ms: float) -> Code:
        try:
            fields = parse_payload(payload)
        except PayloadError as exc:
            raise MissionError(Code.BAD_REQUEST, str(exc)) from None
        if set(fields) == {"speed", "len"}:
            try:
                params = MissionParams(fields["speed"], fields["len"])
            except ValueError as exc:
                raise MissionError(Code.BAD_REQUEST, str(exc)) from None
            self.put_mission_params(params, now_ms)
        elif set(fields) == {"start"}:
            self.put_start_time(fields["start"], now_ms)
        else:
            raise MissionError(Code.BAD_REQUEST, "expected speed+len or start")
        return Code.CHANGED

    def _dispatch(self, req: CoapMessage, source: str, now_ms: float) -> Tuple[Code, bytes]:
        path = req.uri_path
        try:
            text = req.payload.decode("ascii")
        except UnicodeDecodeError:
            return Code.BAD_REQUEST, b""
        try:
            if path == MISSION_PATH and req.code == Code.GET:
                return Code.CONTENT, self.get_mission().encode()
            if path == MISSION_PATH and req.code == Code.PUT:
                return self._put_mission(text, now_ms), b""
            if path == LOGGING_PATH and req.code == Code.PUT:
                self.put_log(source, text, now_ms)
                return Code.CHANGED, b""
        except MissionError as exc:
            return exc.code, b""
        return Code.NOT_FOUND, b""

    def handle_request(self, req: CoapMessage, source: str, now_ms: float) -> Optional[CoapMessage]:
        """Serve one request and build its response.

        Confirmable requests get a piggybacked ACK; a retransmitted request
        (same peer and message ID) is answered from the cache without being
        applied twice. Incoming ACK/RST messages need no reply.
        """
        if not req.code.is_request or req.mtype in (MessageType.ACK, MessageType.RST):
            return None
        key = (source, req.message_id)
        if req.mtype == MessageType.CON and key in self._responses:
            return self._responses[key]
        code, payload = self._dispatch(req, source, now_ms)
        if req.mtype == MessageType.CON:
            response = coap.piggybacked(req, code, payload)
            self._responses[key] = response
        else:
            response = CoapMessage(MessageType.NON, code, self._mids.allocate(), req.token, (), payload)
        return response
