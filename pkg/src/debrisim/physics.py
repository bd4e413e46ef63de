"""Planar frictionless rigid body pushed by timed external forces.

Forces are piecewise constant in time, so each step integrates the
time-averaged force over the step: a push that starts or stops mid-step
contributes in proportion to its overlap with the step. Velocities are
updated first and poses from the new velocities (semi-implicit Euler).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

DEFAULT_DT_MS = 1.0
DEFAULT_F_MAX_N = 0.5


class PhysicsError(RuntimeError):
    pass


@dataclass(frozen=True)
class RigidBody2D:
    mass_kg: float
    inertia_kgm2: float
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.mass_kg <= 0 or self.inertia_kgm2 <= 0:
            raise ValueError("mass and inertia must be positive")

    @property
    def pose(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    @property
    def velocity(self) -> Tuple[float, float, float]:
        return (self.vx, self.vy, self.omega)


@dataclass(frozen=True)
class PushCommand:
    body_point: Tuple[float, float]
    force_n: float
    direction: Tuple[float, float]
    start_ms: float
    duration_ms: float

    def __post_init__(self):
        if abs(math.hypot(*self.direction) - 1.0) > 1e-12:
            raise ValueError("push direction must be a unit vector")
        if self.force_n < 0:
            raise ValueError("force must be non-negative")
        if self.duration_ms <= 0:
            raise ValueError("duration must be positive")

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.duration_ms

    def overlap_ms(self, t0: float, t1: float) -> float:
        return max(0.0, min(t1, self.end_ms) - max(t0, self.start_ms))


@dataclass
class WorldState:
    debris: RigidBody2D
    pushes: List[Tuple[PushCommand, str]] = field(default_factory=list)
    dt_ms: float = DEFAULT_DT_MS
    t_ms: float = 0.0
    peak_omega: float = 0.0

    def __post_init__(self):
        if self.dt_ms <= 0:
            raise ValueError("dt_ms must be positive")

    def add_push(self, push: PushCommand, issuer: str) -> None:
        self.pushes.append((push, issuer))


def net_load(body: RigidBody2D, pushes, t0_ms: float, t1_ms: float) -> Tuple[float, float, float]:
    """Average world-frame force and torque over ``[t0, t1]``."""
    span = t1_ms - t0_ms
    c, s = math.cos(body.theta), math.sin(body.theta)
    fx = fy = tau = 0.0
    for push, _ in pushes:
        share = push.overlap_ms(t0_ms, t1_ms) / span
        if share <= 0.0 or push.force_n == 0.0:
            continue
        dx, dy = push.direction
        f = push.force_n * share
        wfx, wfy = f * (c * dx - s * dy), f * (s * dx + c * dy)
        px, py = push.body_point
        rx, ry = c * px - s * py, s * px + c * py
        fx += wfx
        fy += wfy
        tau += rx * wfy - ry * wfx
    return fx, fy, tau


def step(world: WorldState, dt_ms: Optional[float] = None) -> WorldState:
    """Advance the world by one step (in place) and return it."""
    dt_ms = world.dt_ms if dt_ms is None else dt_ms
    if dt_ms <= 0:
        raise ValueError("dt must be positive")
    b = world.debris
    fx, fy, tau = net_load(b, world.pushes, world.t_ms, world.t_ms + dt_ms)
    h = dt_ms / 1000.0
    vx = b.vx + fx / b.mass_kg * h
    vy = b.vy + fy / b.mass_kg * h
    omega = b.omega + tau / b.inertia_kgm2 * h
    nb = replace(b, vx=vx, vy=vy, omega=omega, x=b.x + vx * h, y=b.y + vy * h, theta=b.theta + omega * h)
    state = (nb.x, nb.y, nb.theta, nb.vx, nb.vy, nb.omega)
    if not all(math.isfinite(v) for v in state):
        raise PhysicsError(f"non-finite debris state at t={world.t_ms + dt_ms} ms: {state}")
    world.debris = nb
    world.t_ms += dt_ms
    world.peak_omega = max(world.peak_omega, abs(omega))
    return world


def advance(world: WorldState, t_end_ms: float, on_step=None) -> WorldState:
    """Step until ``t_end_ms``; the last step is shortened to land exactly."""
    while world.t_ms < t_end_ms - 1e-9:
        step(world, min(world.dt_ms, t_end_ms - world.t_ms))
        if on_step is not None:
            on_step(world)
    return world


@dataclass(frozen=True)
class PushGeometry:
    """Two mirror-image contact points on the debris, pushing along +x by default.

    Defaults describe a 22 cm wide mock-up: contacts on the rear face at
    half the width either side of the centre line.
    """

    mass_kg: float = 12.0
    inertia_kgm2: float = 0.1
    contact_x: float = -0.11
    contact_y: float = 0.11
    direction: Tuple[float, float] = (1.0, 0.0)
    f_max_n: float = DEFAULT_F_MAX_N
    dt_ms: float = DEFAULT_DT_MS

    @property
    def master_point(self) -> Tuple[float, float]:
        return (self.contact_x, self.contact_y)

    @property
    def slave_point(self) -> Tuple[float, float]:
        return (self.contact_x, -self.contact_y)

    @property
    def master_direction(self) -> Tuple[float, float]:
        return self.direction

    @property
    def slave_direction(self) -> Tuple[float, float]:
        return (self.direction[0], -self.direction[1])

    def force(self, motor_speed: float) -> float:
        return motor_speed / 100.0 * self.f_max_n

    def check_symmetric(self, master: PushCommand, slave: PushCommand) -> None:
        (mx, my), (sx, sy) = master.body_point, slave.body_point
        (mdx, mdy), (sdx, sdy) = master.direction, slave.direction
        mirrored = (
            math.isclose(mx, sx, abs_tol=1e-12)
            and math.isclose(my, -sy, abs_tol=1e-12)
            and math.isclose(mdx, sdx, abs_tol=1e-12)
            and math.isclose(mdy, -sdy, abs_tol=1e-12)
        )
        if not mirrored or master.force_n != slave.force_n:
            raise ValueError("pushes must be mirror-symmetric about the debris centre with equal force")


@dataclass(frozen=True)
class PushResult:
    pose: Tuple[float, float, float]
    peak_omega: float
    debris: RigidBody2D


def run_push_scenario(
    motor_speed: float,
    mission_length_ms: float,
    offsets_ms: Tuple[float, float] = (0.0, 0.0),
    geometry: PushGeometry = PushGeometry(),
    swap_sides: bool = False,
) -> PushResult:
    """Two timed pushes with actuation offsets (master, slave) in ms.

    Runs until both pushes have ended and reports the final pose and the
    peak angular speed, which is zero for perfectly synchronized pushes.
    """
    f = geometry.force(motor_speed)
    t0 = min(offsets_ms)
    points = [geometry.master_point, geometry.slave_point]
    dirs = [geometry.master_direction, geometry.slave_direction]
    if swap_sides:
        points.reverse()
        dirs.reverse()
    master = PushCommand(points[0], f, dirs[0], offsets_ms[0] - t0, mission_length_ms)
    slave = PushCommand(points[1], f, dirs[1], offsets_ms[1] - t0, mission_length_ms)
    geometry.check_symmetric(master, slave)
    world = WorldState(RigidBody2D(geometry.mass_kg, geometry.inertia_kgm2), dt_ms=geometry.dt_ms)
    world.add_push(master, "master")
    world.add_push(slave, "slave")
    advance(world, max(master.end_ms, slave.end_ms))
    return PushResult(world.debris.pose, world.peak_omega, world.debris)


def trajectory_csv(rows) -> str:
    """CSV with header ``t_ms,x,y,theta,vx,vy,omega``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_ms", "x", "y", "theta", "vx", "vy", "omega"])
    for t, b in rows:
        writer.writerow([f"{t:.6f}"] + [f"{v:.12g}" for v in (b.x, b.y, b.theta, b.vx, b.vy, b.omega)])
    return buf.getvalue()
