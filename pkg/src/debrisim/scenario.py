"""Scenario files: a nested YAML mapping merged over built-in defaults.

See ``scenarios/default.yaml`` in the repository for an annotated example.
Program paths are resolved relative to the scenario file; the special
values ``builtin:master`` and ``builtin:slave`` select the bundled agent
programs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml

from .agentspeak import AgentProgram, canonical_source, parse_program
from .energy import ActionCost, default_cost_table
from .mothership import MissionParams
from .physics import PushGeometry
from .simnet import LinkModel, NodeClock, Role

DEFAULTS: Dict[str, Any] = {
    "seed": 42,
    "t_end_ms": 10000.0,
    "topology": ["base", "mothership", "master", "slave", "debris"],
    "link": {
        "base_latency_ms": 5.0,
        "jitter_ms": 2.0,
        "loss_prob": 0.0,
        "framing_overhead_bytes": 58,
    },
    "links": {},
    "base_station": {"announce_at_ms": 100.0, "clock": {}},
    "mothership": {"clock": {}},
    "agents": {
        "master": {"program": "builtin:master", "wake_ms": 150.0, "clock": {}},
        "slave": {"program": "builtin:slave", "wake_ms": 180.0, "clock": {}},
    },
    "mission": {
        "motor_speed": 40,
        "mission_length_ms": 1500,
        "lead_time_ms": 500.0,
        "poll_interval_ms": 100.0,
        "repeat": 1,
        "period_ms": 4000.0,
        "actuation": "push",
    },
    "costs": {},
    "energy": {"supply_v": 3.3, "idle_ma": 5.0, "fs_hz": 500.0, "cutoff_hz": 50.0},
    "physics": {
        "enabled": True,
        "mass_kg": 12.0,
        "inertia_kgm2": 0.1,
        "contact_x": -0.11,
        "contact_y": 0.11,
        "f_max_n": 0.5,
        "dt_ms": 1.0,
        "trajectory_interval_ms": 10.0,
    },
}

# short names accepted by ``sweep --param``
ALIASES = {
    "clock_offset_master": "agents.master.clock.offset_ms",
    "clock_offset_slave": "agents.slave.clock.offset_ms",
    "clock_drift_master": "agents.master.clock.drift_ppm",
    "clock_drift_slave": "agents.slave.clock.drift_ppm",
    "jitter_ms": "link.jitter_ms",
    "latency_ms": "link.base_latency_ms",
    "loss_prob": "link.loss_prob",
    "lead_time_ms": "mission.lead_time_ms",
    "poll_interval_ms": "mission.poll_interval_ms",
}

HOST_ACTIONS = frozenset({"wait", "perform_mission"})


class ScenarioError(ValueError):
    pass


def _merge(base: Dict[str, Any], over: Mapping[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(raw: Dict[str, Any], key: str, value: Any) -> Dict[str, Any]:
    """Copy of ``raw`` with the dotted (or aliased) key set to ``value``."""
    path = ALIASES.get(key, key).split(".")
    out = copy.deepcopy(raw)
    node = out
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ScenarioError(f"cannot override {key!r}: {part!r} is not a mapping")
    node[path[-1]] = value
    return out


@dataclass
class AgentConfig:
    name: str
    program: AgentProgram
    program_ref: str
    wake_ms: float
    clock: NodeClock


@dataclass
class Scenario:
    seed: int
    t_end_ms: float
    link: LinkModel
    links: Dict[str, LinkModel]
    master: AgentConfig
    slave: AgentConfig
    base_clock: NodeClock
    mothership_clock: NodeClock
    announce_at_ms: float
    params: MissionParams
    lead_time_ms: float
    poll_interval_ms: float
    repeat: int
    period_ms: float
    actuation: str
    costs: Dict[str, ActionCost]
    geometry: PushGeometry
    physics_enabled: bool
    trajectory_interval_ms: float
    supply_v: float
    idle_ma: float
    fs_hz: float
    cutoff_hz: float
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)
    base_dir: Optional[Path] = field(default=None, repr=False)

    @property
    def agents(self) -> List[AgentConfig]:
        return [self.master, self.slave]

    def with_override(self, key: str, value: Any) -> "Scenario":
        return Scenario.from_dict(apply_override(self.raw, key, value), self.base_dir)

    @classmethod
    def default(cls) -> "Scenario":
        return cls.from_dict({})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "Scenario":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        raw = _merge(DEFAULTS, data)
        try:
            return cls._build(raw, base_dir)
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc

    @classmethod
    def _build(cls, raw: Dict[str, Any], base_dir: Optional[Path]) -> "Scenario":
        _check_topology(raw["topology"])
        link = LinkModel(**raw["link"])
        links = {name: LinkModel(**_merge(raw["link"], over)) for name, over in raw["links"].items()}
        m = raw["mission"]
        if m["actuation"] not in ("led", "push"):
            raise ScenarioError(f"actuation must be 'led' or 'push', got {m['actuation']!r}")
        if m["poll_interval_ms"] <= 0 or m["lead_time_ms"] <= 0:
            raise ScenarioError("lead_time_ms and poll_interval_ms must be positive")
        if int(m["repeat"]) < 1:
            raise ScenarioError("mission.repeat must be at least 1")
        costs = default_cost_table(raw["costs"])
        agents = {
            name: _agent(name, raw["agents"][name], base_dir)
            for name in ("master", "slave")
        }
        for cfg in agents.values():
            missing = cfg.program.actions() - set(costs) - HOST_ACTIONS
            if missing:
                raise ScenarioError(f"{cfg.name} program uses actions without a cost entry: {', '.join(sorted(missing))}")
        p = raw["physics"]
        geometry = PushGeometry(
            mass_kg=p["mass_kg"],
            inertia_kgm2=p["inertia_kgm2"],
            contact_x=p["contact_x"],
            contact_y=p["contact_y"],
            f_max_n=p["f_max_n"],
            dt_ms=p["dt_ms"],
        )
        e = raw["energy"]
        return cls(
            seed=int(raw["seed"]),
            t_end_ms=float(raw["t_end_ms"]),
            link=link,
            links=links,
            master=agents["master"],
            slave=agents["slave"],
            base_clock=NodeClock(**raw["base_station"].get("clock", {})),
            mothership_clock=NodeClock(**raw["mothership"].get("clock", {})),
            announce_at_ms=float(raw["base_station"]["announce_at_ms"]),
            params=MissionParams(int(m["motor_speed"]), int(m["mission_length_ms"])),
            lead_time_ms=float(m["lead_time_ms"]),
            poll_interval_ms=float(m["poll_interval_ms"]),
            repeat=int(m["repeat"]),
            period_ms=float(m["period_ms"]),
            actuation=m["actuation"],
            costs=costs,
            geometry=geometry,
            physics_enabled=bool(p["enabled"]) and m["actuation"] == "push",
            trajectory_interval_ms=float(p["trajectory_interval_ms"]),
            supply_v=float(e["supply_v"]),
            idle_ma=float(e["idle_ma"]),
            fs_hz=float(e["fs_hz"]),
            cutoff_hz=float(e["cutoff_hz"]),
            raw=raw,
            base_dir=base_dir,
        )


def _check_topology(nodes) -> None:
    roles = [Role(n) for n in nodes]
    for role in (Role.BASE_STATION, Role.MOTHERSHIP, Role.MASTER_FF, Role.SLAVE_FF):
        if roles.count(role) != 1:
            raise ScenarioError(f"topology needs exactly one {role.value!r} node, found {roles.count(role)}")


def _agent(name: str, cfg: Mapping[str, Any], base_dir: Optional[Path]) -> AgentConfig:
    ref = cfg["program"]
    if ref.startswith("builtin:"):
        try:
            source = canonical_source(ref.split(":", 1)[1])
        except FileNotFoundError:
            raise ScenarioError(f"{name}: no bundled program {ref!r}") from None
    else:
        path = Path(ref)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ScenarioError(f"{name} program not found: {path}")
        source = path.read_text(encoding="utf-8")
    return AgentConfig(
        name=name,
        program=parse_program(source),
        program_ref=ref,
        wake_ms=float(cfg["wake_ms"]),
        clock=NodeClock(**cfg.get("clock", {})),
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return Scenario.from_dict(data, path.parent)
