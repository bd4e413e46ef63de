"""End-to-end mission: node hosts wired to the event loop, plus reporting.

Node roles:

* ``base``: announces mission parameters with a PUT to ``/mission``.
* ``mothership``: CoAP server; schedules its own phase ticks.
* ``master`` / ``slave``: free-flyers, each running an AgentSpeak agent whose
  external actions become CoAP requests or local timers.
* ``debris``: planar rigid body integrated lazily between push events.

Every agent action that talks to the server is charged to the energy
ledger when it is dispatched, and completes no earlier than its measured
duration after dispatch.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from . import coap
from .agentspeak import ActionRequest, Agent, Atom, Num, Term, struct
from .coap import CoapMessage, Code
from .energy import EnergyLedger, synth_trace
from .mothership import (
    MISSION_PATH,
    MissionPhase,
    Mothership,
    PayloadError,
    format_payload,
    parse_payload,
)
from .physics import PushCommand, RigidBody2D, WorldState, advance, trajectory_csv
from .scenario import AgentConfig, Scenario
from .simnet import EventKind, NodeClock, SimEvent, Simulator

log = logging.getLogger(__name__)

MOTHERSHIP = "mothership"
BASE = "base"
DEBRIS = "debris"
RESET_DELAY_MS = 1.0


@dataclass
class _Outstanding:
    message_id: int
    data: bytes
    on_response: Callable[[Simulator, Optional[CoapMessage]], None]
    attempts: int = 0
    timer: Optional[SimEvent] = None


class _Node:
    def __init__(self, name: str, clock: NodeClock):
        self.name = name
        self.clock = clock

    def local(self, sim: Simulator) -> float:
        return self.clock.local_now(sim.now)


class _Client(_Node):
    """CoAP client with one confirmable request outstanding at a time."""

    def __init__(self, name: str, clock: NodeClock):
        super().__init__(name, clock)
        self.mids = coap.MessageIds()
        self.outstanding: Optional[_Outstanding] = None

    def request(self, sim: Simulator, code: Code, payload: str, on_response) -> CoapMessage:
        msg = coap.request(code, MISSION_PATH, self.mids.allocate(), payload.encode())
        data = coap.encode_message(msg)
        self.outstanding = _Outstanding(msg.message_id, data, on_response)
        sim.send(self.name, MOTHERSHIP, data)
        self.outstanding.timer = sim.schedule(
            sim.now + coap.ACK_TIMEOUT_MS, EventKind.TIMER, self.name, "retransmit", mid=msg.message_id, attempt=0
        )
        return msg

    def on_retransmit(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        out = self.outstanding
        detail: Dict[str, Any] = {"tag": "retransmit", "mid": event.data["mid"]}
        if out is None or out.message_id != event.data["mid"] or out.attempts != event.data["attempt"]:
            detail["stale"] = True
            return detail
        if out.attempts < coap.MAX_RETRANSMIT:
            out.attempts += 1
            sim.counters.retransmitted += 1
            sim.send(self.name, MOTHERSHIP, out.data)
            out.timer = sim.schedule(
                sim.now + coap.ACK_TIMEOUT_MS, EventKind.TIMER, self.name, "retransmit", mid=out.message_id, attempt=out.attempts
            )
            detail["attempt"] = out.attempts
            return detail
        self.outstanding = None
        detail["gave_up"] = True
        out.on_response(sim, None)
        return detail

    def on_deliver(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        frame = event.frame
        detail: Dict[str, Any] = {"from": frame.src, "bytes": frame.on_air_bytes}
        try:
            msg = coap.decode_message(frame.data)
        except coap.DecodeError as exc:
            detail["error"] = str(exc)
            return detail
        detail["msg"] = msg.describe()
        detail["code"] = msg.code.dotted
        if msg.payload:
            detail["payload"] = msg.payload.decode("ascii", "replace")
        out = self.outstanding
        keys = [coap.RequestKey(MOTHERSHIP, out.message_id)] if out else []
        match = coap.match_response(keys, msg, frame.src)
        if match is None:
            detail["unmatched"] = True
            return detail
        self.outstanding = None
        sim.cancel(out.timer)
        out.on_response(sim, None if match.rejected else msg)
        return detail


class BaseStation(_Client):
    def __init__(self, clock: NodeClock, scenario: Scenario):
        super().__init__(BASE, clock)
        self.scenario = scenario
        self.results: List[Optional[str]] = []

    def handle(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        if event.kind is EventKind.DELIVER:
            return self.on_deliver(sim, event)
        if event.tag == "retransmit":
            return self.on_retransmit(sim, event)
        p = self.scenario.params
        payload = format_payload(speed=p.motor_speed, len=p.mission_length_ms)
        msg = self.request(sim, Code.PUT, payload, self._done)
        return {"tag": event.tag, "round": event.data["round"], "sent": msg.describe(), "payload": payload}

    def _done(self, sim: Simulator, response: Optional[CoapMessage]) -> None:
        self.results.append(response.code.dotted if response else None)


class FreeFlyer(_Client):
    """Host for one agent: maps its actions onto CoAP requests and timers."""

    def __init__(self, cfg: AgentConfig, scenario: Scenario, ledger: EnergyLedger):
        super().__init__(cfg.name, cfg.clock)
        self.agent = Agent(cfg.program, cfg.name)
        self.scenario = scenario
        self.ledger = ledger
        self.booted = False
        self._current = ""
        self.actuations: List[Dict[str, float]] = []
        self._dispatched_at = 0.0
        self._actions: List[str] = []

    # -- event handling ----------------------------------------------------------

    def handle(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        self._actions = []
        if event.kind is EventKind.DELIVER:
            detail = self.on_deliver(sim, event)
        elif event.tag == "retransmit":
            detail = self.on_retransmit(sim, event)
        elif event.tag == "wake":
            detail = {"tag": "wake", "round": event.data["round"]}
            self._wake()
        elif event.tag == "resolve":
            detail = {"tag": "resolve", "result": str(event.data["result"])}
            self.agent.resolve(event.data["result"])
        elif event.tag == "actuate":
            detail = self._actuate(sim, event)
        else:
            raise ValueError(f"unknown timer {event.tag!r}")
        self._pump(sim)
        if self._actions:
            detail["actions"] = self._actions
        return detail

    def _wake(self) -> None:
        if not self.booted:
            self.agent.state.belief_base[struct("poll_interval", self.scenario.poll_interval_ms)] = None
            self.agent.boot()
            self.booted = True
        else:
            self.agent.post_initial_goals()

    def _pump(self, sim: Simulator) -> None:
        while True:
            request = self.agent.run()
            if request is None:
                return
            self._actions.append(str(request))
            if not self._perform(sim, request):
                return

    def _finish(self, sim: Simulator, result: Term) -> None:
        done_at = self._dispatched_at + self.ledger.table[self._current].duration_ms
        if sim.now >= done_at:
            self.agent.resolve(result)
            self._pump(sim)
        else:
            sim.schedule(done_at, EventKind.TIMER, self.name, "resolve", result=result)

    # -- actions -----------------------------------------------------------------

    def _perform(self, sim: Simulator, req: ActionRequest) -> bool:
        """Start an action; True if it completed synchronously."""
        name = req.name
        if name in ("listen_gs", "listen_server"):
            self._charge(sim, name)
            parse = _gs_result if name == "listen_gs" else _poll_result
            self.request(sim, Code.GET, "", lambda s, r: self._finish(s, parse(r)))
            return False
        if name == "announce_perform_mission":
            self._charge(sim, name)
            start = int(round(self.local(sim) + self.scenario.lead_time_ms))
            self.request(sim, Code.PUT, format_payload(start=start), lambda s, r: self._finish(s, _announce_result(r, start)))
            return False
        if name == "wait":
            (delay,) = _numbers(req)
            at = max(sim.now, self.clock.to_global(self.local(sim) + delay))
            sim.schedule(at, EventKind.TIMER, self.name, "resolve", result=Atom("ok"))
            return False
        if name == "perform_mission":
            start, speed, length = _numbers(req)
            at = self.clock.to_global(start)
            late = at < sim.now
            sim.schedule(max(at, sim.now), EventKind.TIMER, self.name, "actuate", start=start, speed=speed, length=length, late=late)
            self.agent.resolve(Atom("ok"))
            return True
        raise ValueError(f"{self.name}: no host implementation for action {name!r}")

    def _charge(self, sim: Simulator, action: str) -> None:
        self.ledger.charge(self.name, action, sim.now)
        self._current = action
        self._dispatched_at = sim.now

    def _actuate(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        d = event.data
        self.actuations.append({"t_global": sim.now, "start": d["start"]})
        duration = d["length"] / (1.0 + self.clock.drift_ppm / 1e6)
        if self.scenario.physics_enabled:
            sim.schedule(sim.now, EventKind.PHYSICS, DEBRIS, "push", issuer=self.name, speed=d["speed"], duration=duration)
        detail = {"tag": "actuate", "start": int(d["start"]), "local_ms": round(self.local(sim), 6), "mode": self.scenario.actuation}
        if d["late"]:
            detail["late"] = True
        return detail


def _numbers(req: ActionRequest) -> List[float]:
    values = []
    for arg in req.args:
        if not isinstance(arg, Num):
            raise ValueError(f"{req}: expected numeric arguments")
        values.append(arg.value)
    return values


def _fields(response: Optional[CoapMessage]) -> Optional[Dict[str, int]]:
    if response is None or response.code != Code.CONTENT:
        return None
    try:
        return parse_payload(response.payload.decode("ascii"))
    except (PayloadError, UnicodeDecodeError):
        return None


def _gs_result(response: Optional[CoapMessage]) -> Term:
    if response is None:
        return Atom("timeout")
    fields = _fields(response)
    if fields is None or "speed" not in fields or "len" not in fields:
        return Atom("not_found")
    return struct("mission", fields["speed"], fields["len"])


def _poll_result(response: Optional[CoapMessage]) -> Term:
    if response is None:
        return Atom("timeout")
    fields = _fields(response)
    if fields is None or "start" not in fields:
        return Atom("pending")
    return struct("mission", fields["speed"], fields["len"], fields["start"])


def _announce_result(response: Optional[CoapMessage], start: int) -> Term:
    if response is None:
        return Atom("timeout")
    if response.code == Code.CHANGED:
        return struct("scheduled", start)
    return Atom("rejected")


class MothershipNode(_Node):
    def __init__(self, clock: NodeClock):
        super().__init__(MOTHERSHIP, clock)
        self.server = Mothership(MOTHERSHIP)

    def handle(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        if event.kind is EventKind.TIMER:
            return self._tick(sim, event)
        frame = event.frame
        detail: Dict[str, Any] = {"from": frame.src, "bytes": frame.on_air_bytes}
        try:
            req = coap.decode_message(frame.data)
        except coap.DecodeError as exc:
            detail["error"] = str(exc)
            return detail
        detail["msg"] = req.describe()
        if req.payload:
            detail["payload"] = req.payload.decode("ascii", "replace")
        before = self.server.phase
        response = self.server.handle_request(req, frame.src, self.local(sim))
        if response is None:
            return detail
        detail["response"] = response.code.dotted
        if response.payload:
            detail["response_payload"] = response.payload.decode("ascii")
        after = self.server.phase
        if after is not before:
            detail["phase"] = after.value
        if before is MissionPhase.ANNOUNCED and after is MissionPhase.SCHEDULED:
            rec = self.server.record
            for target in (rec.start_time_ms, rec.start_time_ms + rec.params.mission_length_ms):
                at = max(sim.now, self.clock.to_global(target))
                sim.schedule(at, EventKind.TIMER, MOTHERSHIP, "tick", local_ms=target)
        sim.send(MOTHERSHIP, frame.src, coap.encode_message(response))
        return detail

    def _tick(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        # guard against the clock round trip landing a hair before the target
        now_local = max(self.local(sim), event.data["local_ms"])
        phase = self.server.tick(now_local)
        detail: Dict[str, Any] = {"tag": "tick", "phase": self.server.phase.value}
        if phase is None:
            detail["unchanged"] = True
        if phase is MissionPhase.DONE:
            target = now_local + RESET_DELAY_MS
            sim.schedule(max(sim.now, self.clock.to_global(target)), EventKind.TIMER, MOTHERSHIP, "tick", local_ms=target)
        return detail


class DebrisNode:
    def __init__(self, scenario: Scenario):
        g = scenario.geometry
        self.geometry = g
        self.world = WorldState(RigidBody2D(g.mass_kg, g.inertia_kgm2), dt_ms=g.dt_ms)
        self.interval = scenario.trajectory_interval_ms
        self.trajectory = [(0.0, self.world.debris)]
        self._next_sample = self.interval

    def _record(self, world: WorldState) -> None:
        if world.t_ms >= self._next_sample - 1e-9:
            self.trajectory.append((world.t_ms, world.debris))
            while self._next_sample <= world.t_ms + 1e-9:
                self._next_sample += self.interval

    def handle(self, sim: Simulator, event: SimEvent) -> Dict[str, Any]:
        advance(self.world, sim.now, on_step=self._record)
        detail: Dict[str, Any] = {"tag": event.tag}
        if event.tag == "push":
            d = event.data
            g = self.geometry
            master = d["issuer"] == "master"
            push = PushCommand(
                g.master_point if master else g.slave_point,
                g.force(d["speed"]),
                g.master_direction if master else g.slave_direction,
                sim.now,
                d["duration"],
            )
            self.world.add_push(push, d["issuer"])
            sim.schedule(push.end_ms, EventKind.PHYSICS, DEBRIS, "push_end", issuer=d["issuer"])
            detail["issuer"] = d["issuer"]
            detail["force_n"] = round(push.force_n, 9)
        elif event.tag == "push_end":
            detail["issuer"] = event.data["issuer"]
        b = self.world.debris
        detail["pose"] = [round(b.x, 9), round(b.y, 9), round(b.theta, 9)]
        detail["omega"] = round(b.omega, 9)
        return detail

    def finish(self, t_ms: float) -> None:
        advance(self.world, t_ms, on_step=self._record)
        if self.trajectory[-1][0] < self.world.t_ms:
            self.trajectory.append((self.world.t_ms, self.world.debris))


# -- report ------------------------------------------------------------------

@dataclass
class MissionOutcome:
    start_time_ms: int
    master_actuation_ms: Optional[float]
    slave_actuation_ms: Optional[float]
    sync_error_ms: Optional[float]
    slave_polls: int


@dataclass
class RunReport:
    sync_error_ms: Optional[float]
    mission_incomplete: bool
    stall_phase: Optional[str]
    missions: List[MissionOutcome]
    energy: Dict[str, Dict[str, Any]]
    phase_trace: List[Dict[str, Any]]
    messages: Dict[str, int]
    debris: Optional[Dict[str, float]]
    diagnostics: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _action_name(text: str) -> str:
    return text.split("(", 1)[0]


def actions_from_log(events: List[Dict[str, Any]], agent: str) -> List[tuple]:
    """(t_global, action name) for every action an agent dispatched."""
    return [
        (rec["t_global"], _action_name(a))
        for rec in events
        if rec["node"] == agent
        for a in rec["detail"].get("actions", ())
    ]


def energy_from_log(events, agent: str, table) -> Dict[str, Any]:
    charged = [name for _, name in actions_from_log(events, agent) if name in table]
    counts: Dict[str, int] = {}
    for name in charged:
        counts[name] = counts.get(name, 0) + 1
    return {
        "energy_uj": sum(table[n].energy_uj for n in charged),
        "busy_ms": round(sum(table[n].duration_ms for n in charged), 9),
        "actions": dict(sorted(counts.items())),
    }


def build_report(sim_result: "Simulation") -> RunReport:
    scenario = sim_result.scenario
    events = sim_result.sim.log
    table = scenario.costs

    actuations: Dict[str, Dict[int, float]] = {"master": {}, "slave": {}}
    for rec in events:
        d = rec["detail"]
        if rec["kind"] == "timer" and d.get("tag") == "actuate":
            actuations[rec["node"]].setdefault(d["start"], rec["t_global"])

    trace = [
        {"t_global": round(t, 6), "from": a.value, "to": b.value}
        for t_local, a, b in sim_result.mothership.server.transitions
        for t in [sim_result.mothership.clock.to_global(t_local)]
    ]
    starts = [
        int(rec["detail"]["payload"].split(":")[1])
        for rec in events
        if rec["node"] == MOTHERSHIP and rec["detail"].get("phase") == MissionPhase.SCHEDULED.value
    ]

    polls = [t for t, name in actions_from_log(events, "slave") if name == "listen_server"]
    missions = []
    previous = float("-inf")
    for start in starts:
        m = actuations["master"].get(start)
        s = actuations["slave"].get(start)
        sync = round(abs(m - s), 6) if m is not None and s is not None else None
        until = s if s is not None else float("inf")
        count = sum(1 for t in polls if previous < t <= until)
        previous = until
        missions.append(MissionOutcome(start, m, s, sync, count))

    complete = [m for m in missions if m.sync_error_ms is not None]
    incomplete = len(complete) < scenario.repeat
    stall = None
    if incomplete:
        if len(starts) < scenario.repeat:
            stall = sim_result.mothership.server.phase.value if not trace else _highest_phase(trace, len(starts))
        else:
            stall = MissionPhase.SCHEDULED.value

    c = sim_result.sim.counters
    debris = None
    if scenario.physics_enabled:
        b = sim_result.debris.world.debris
        debris = {
            "x": b.x,
            "y": b.y,
            "theta": b.theta,
            "vx": b.vx,
            "vy": b.vy,
            "omega": b.omega,
            "peak_omega": sim_result.debris.world.peak_omega,
        }
    return RunReport(
        sync_error_ms=max((m.sync_error_ms for m in complete), default=None),
        mission_incomplete=incomplete,
        stall_phase=stall,
        missions=missions,
        energy={name: energy_from_log(events, name, table) for name in ("master", "slave")},
        phase_trace=trace,
        messages={
            "sent": c.sent,
            "delivered": c.delivered,
            "lost": c.lost,
            "in_flight": c.in_flight,
            "retransmitted": c.retransmitted,
        },
        debris=debris,
        diagnostics={name: asdict(ff.agent.state.diagnostics) for name, ff in sim_result.agents.items()},
    )


_PHASE_ORDER = [p.value for p in MissionPhase]


def _highest_phase(trace, scheduled_rounds: int) -> str:
    """Furthest phase reached in the first round that never got scheduled."""
    rounds: List[List[str]] = [[]]
    for t in trace:
        if t["to"] == MissionPhase.IDLE.value:
            rounds.append([])
        else:
            rounds[-1].append(t["to"])
    phases = rounds[scheduled_rounds] if scheduled_rounds < len(rounds) else []
    if not phases:
        return MissionPhase.IDLE.value
    return max(phases, key=_PHASE_ORDER.index)


# -- simulation ------------------------------------------------------------------

@dataclass
class Simulation:
    scenario: Scenario
    sim: Simulator
    ledger: EnergyLedger
    base: BaseStation
    mothership: MothershipNode
    agents: Dict[str, FreeFlyer]
    debris: DebrisNode
    report: Optional[RunReport] = None

    @property
    def events_jsonl(self) -> str:
        return self.sim.events_jsonl()

    def master_trace(self):
        s = self.scenario
        return synth_trace(
            self.ledger.for_agent("master"),
            fs_hz=s.fs_hz,
            supply_v=s.supply_v,
            baseline_ma=s.idle_ma,
            t0_ms=0.0,
            t_end_ms=s.t_end_ms,
        )


def simulate(scenario: Scenario) -> Simulation:
    sim = Simulator(scenario.seed, scenario.link, scenario.links)
    ledger = EnergyLedger(dict(scenario.costs))
    base = BaseStation(scenario.base_clock, scenario)
    ship = MothershipNode(scenario.mothership_clock)
    agents = {cfg.name: FreeFlyer(cfg, scenario, ledger) for cfg in scenario.agents}
    debris = DebrisNode(scenario)
    sim.register(BASE, base.handle)
    sim.register(MOTHERSHIP, ship.handle)
    for name, ff in agents.items():
        sim.register(name, ff.handle)
    sim.register(DEBRIS, debris.handle)

    for k in range(scenario.repeat):
        shift = k * scenario.period_ms
        sim.schedule(scenario.announce_at_ms + shift, EventKind.TIMER, BASE, "announce", round=k)
        for cfg in scenario.agents:
            sim.schedule(cfg.wake_ms + shift, EventKind.TIMER, cfg.name, "wake", round=k)
    sim.run_until(scenario.t_end_ms)
    if scenario.physics_enabled:
        debris.finish(scenario.t_end_ms)

    result = Simulation(scenario, sim, ledger, base, ship, agents, debris)
    result.report = build_report(result)
    log.debug("run finished: %s events, sync error %s", len(sim.log), result.report.sync_error_ms)
    return result


def run(scenario: Scenario) -> RunReport:
    return simulate(scenario).report


def emit_outputs(result: Simulation, out_dir, physics: bool = True) -> List[Path]:
    """Write events.jsonl, report.json, trace.csv and (with physics) trajectory.csv."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    files = {
        "events.jsonl": result.events_jsonl,
        "report.json": result.report.to_json(),
        "trace.csv": result.master_trace().to_csv(),
    }
    if physics and result.scenario.physics_enabled:
        files["trajectory.csv"] = trajectory_csv(result.debris.trajectory)
    written = []
    for name, text in files.items():
        path = out / name
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written
