"""Deterministic planar flight simulation: room and window geometry, the
first-order rudder actuator, constant-speed turn dynamics, random spawning,
exact segment termination tests, and the sense-decide-act episode loop.

The vehicle flies at fixed speed and fixed height; the rudder command from
the behaviour tree drives a low-pass-filtered turn rate. Physics integrates
at decision_rate * physics_substeps Hz underneath the 10 Hz decision loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import bt, vision

WINDOW_WALLS = ("north", "south", "east", "west")

# Outward wall normals in the room frame.
_WALL_NORMALS = {
    "north": (0.0, 1.0),
    "south": (0.0, -1.0),
    "east": (1.0, 0.0),
    "west": (-1.0, 0.0),
}


@dataclass
class RoomConfig:
    """Front room footprint and the window cutout. An identical back room
    lies behind the window wall; flight happens in the front room only.

    window_offset displaces the window centre from the wall midpoint, along
    +x for the north/south walls and +y for east/west.
    """

    width: float = 8.0
    length: float = 8.0
    height: float = 3.0
    window_wall: str = "north"
    window_offset: float = 0.0
    window_width: float = 0.8
    window_height: float = 0.8
    window_centre_z: float = 1.5

    def validate(self) -> None:
        if self.window_wall not in WINDOW_WALLS:
            raise ValueError(f"unknown window wall {self.window_wall!r}")
        if min(self.width, self.length, self.height) <= 0:
            raise ValueError("room dimensions must be positive")
        lo, hi = window_span(self)
        extent = self.width if self.window_wall in ("north", "south") else self.length
        if lo < 0 or hi > extent:
            raise ValueError("window does not fit within its wall")
        if (self.window_centre_z - self.window_height / 2 < 0
                or self.window_centre_z + self.window_height / 2 > self.height):
            raise ValueError("window does not fit below the ceiling")


def window_span(room: RoomConfig) -> tuple[float, float]:
    """Horizontal extent of the window along its wall."""
    if room.window_wall in ("north", "south"):
        centre = room.width / 2 + room.window_offset
    else:
        centre = room.length / 2 + room.window_offset
    return centre - room.window_width / 2, centre + room.window_width / 2


def window_centre(room: RoomConfig) -> tuple[float, float]:
    """Window centre in room-frame x, y."""
    lo, hi = window_span(room)
    mid = (lo + hi) / 2
    if room.window_wall == "north":
        return mid, room.length
    if room.window_wall == "south":
        return mid, 0.0
    if room.window_wall == "east":
        return room.width, mid
    return 0.0, mid


@dataclass
class SimParams:
    speed: float = 0.5
    max_turn_rate: float = 0.4
    actuator_tau: float = 1.0
    decision_rate: float = 10.0
    physics_substeps: int = 10
    timeout: float = 100.0
    camera_height: float = 1.5
    spawn_margin: float = 0.5

    def validate(self) -> None:
        if self.speed <= 0 or self.max_turn_rate <= 0 or self.actuator_tau <= 0:
            raise ValueError("speed, max_turn_rate and actuator_tau must be positive")
        if self.decision_rate <= 0 or self.physics_substeps < 1:
            raise ValueError("decision_rate must be positive and substeps at least 1")
        if self.timeout <= 0 or self.spawn_margin < 0:
            raise ValueError("timeout must be positive and spawn_margin non-negative")


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    rudder_actual: float = 0.0
    rudder_command: float = 0.0
    time: float = 0.0

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y


@dataclass(frozen=True)
class SpawnPose:
    x: float
    y: float
    heading: float


class Outcome(Enum):
    SUCCESS = "Success"
    CRASH = "Crash"
    TIMEOUT = "Timeout"


class TraceRow(NamedTuple):
    t: float
    x: float
    y: float
    heading: float
    rudder_actual: float
    bb_x: float
    bb_sigma: float
    bb_Sigma: float
    bb_Delta: float
    r_cmd: float
    mode: int | None


TRACE_COLUMNS = ("t", "x", "y", "heading", "rudder_actual", "bb_x", "bb_sigma",
                 "bb_Sigma", "bb_Delta", "r_cmd", "mode")


@dataclass
class EpisodeResult:
    outcome: Outcome
    final_position: tuple[float, float]
    e: tuple[float, float]
    flight_time: float
    approach_angle: float | None
    centre_offset: float | None
    path: list[TraceRow] | None


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def step(state: VehicleState, rudder_command: float, dt: float,
         params: SimParams) -> VehicleState:
    """One integration substep: first-order rudder lag toward the command,
    then heading at the filtered turn rate, then position along the new
    heading at constant speed."""
    alpha = 1.0 - math.exp(-dt / params.actuator_tau)
    actual = state.rudder_actual + (rudder_command - state.rudder_actual) * alpha
    heading = wrap_angle(state.heading + actual * params.max_turn_rate * dt)
    return VehicleState(
        x=state.x + params.speed * dt * math.cos(heading),
        y=state.y + params.speed * dt * math.sin(heading),
        heading=heading,
        rudder_actual=actual,
        rudder_command=rudder_command,
        time=state.time + dt,
    )


def spawn(rng: np.random.Generator, room: RoomConfig,
          sim_params: SimParams) -> SpawnPose:
    """Uniform position over the room shrunk by the spawn margin, uniform
    heading over (-pi, pi]."""
    m = sim_params.spawn_margin
    return SpawnPose(
        x=float(rng.uniform(m, room.width - m)),
        y=float(rng.uniform(m, room.length - m)),
        heading=wrap_angle(float(rng.uniform(-math.pi, math.pi))),
    )


def _first_crossing(x0, y0, x1, y1, room):
    """Earliest wall contact of the segment (x0,y0)-(x1,y1), or None.

    Returns (t, cross_x, cross_y, wall) with t the segment parameter.
    """
    reach = abs(x1 - x0) + abs(y1 - y0)
    if (x1 > reach and room.width - x1 > reach
            and y1 > reach and room.length - y1 > reach):
        return None
    best = None
    for axis, value, wall in (("x", 0.0, "west"), ("x", room.width, "east"),
                              ("y", 0.0, "south"), ("y", room.length, "north")):
        if axis == "x":
            delta, start, o_start, o_delta, extent = x1 - x0, x0, y0, y1 - y0, room.length
        else:
            delta, start, o_start, o_delta, extent = y1 - y0, y0, x0, x1 - x0, room.width
        if delta == 0.0:
            continue
        t = (value - start) / delta
        if not 0.0 <= t <= 1.0:
            continue
        other = o_start + t * o_delta
        if not 0.0 <= other <= extent:
            continue
        if best is None or t < best[0]:
            if axis == "x":
                best = (t, value, other, wall)
            else:
                best = (t, other, value, wall)
    return best


def check_termination(prev_state: VehicleState, state: VehicleState,
                      room: RoomConfig, timeout: float = 100.0) -> Outcome | None:
    """Outcome of the substep from prev_state to state, or None to continue.

    Success when the segment crosses the window wall inside the window's
    horizontal span (flight height is always within the vertical span);
    Crash on any other wall contact; wall contact takes precedence over the
    timeout.
    """
    crossing = _first_crossing(prev_state.x, prev_state.y, state.x, state.y, room)
    if crossing is not None:
        _, cross_x, cross_y, wall = crossing
        if wall == room.window_wall:
            lo, hi = window_span(room)
            along = cross_x if wall in ("north", "south") else cross_y
            if lo <= along <= hi:
                return Outcome.SUCCESS
        return Outcome.CRASH
    if state.time >= timeout:
        return Outcome.TIMEOUT
    return None


def run_episode(tree: bt.Node, init: SpawnPose, room: RoomConfig,
                sim_params: SimParams,
                vision_params: vision.VisionParams | None = None,
                record_path: bool = True) -> EpisodeResult:
    """Fly one episode under the tree's control.

    Each decision tick senses the scene from the current pose, fills the
    blackboard (r keeps the previous command), ticks the tree, then applies
    the resulting command over physics_substeps integration substeps with a
    termination test after each. The trace row written per tick holds the
    pose at sensing time and the command chosen for the coming substeps;
    mode is the preorder index of the Action that last wrote r, or None.
    """
    state = VehicleState(init.x, init.y, init.heading)
    dt = 1.0 / (sim_params.decision_rate * sim_params.physics_substeps)
    wcx, wcy = window_centre(room)
    path: list[TraceRow] | None = [] if record_path else None
    r = 0.0
    while True:
        inputs = vision.sense((state.x, state.y), state.heading, room,
                              sim_params.camera_height, vision_params)
        inputs.r = r
        _status, board, _trace, last_action = bt.tick_trace(tree, inputs)
        r = board.r
        if path is not None:
            path.append(TraceRow(state.time, state.x, state.y, state.heading,
                                 state.rudder_actual, inputs.x, inputs.sigma,
                                 inputs.Sigma, inputs.Delta, r, last_action))
        for _ in range(sim_params.physics_substeps):
            prev = state
            state = step(state, r, dt, sim_params)
            crossing = _first_crossing(prev.x, prev.y, state.x, state.y, room)
            if crossing is not None:
                t, cross_x, cross_y, wall = crossing
                success = False
                if wall == room.window_wall:
                    lo, hi = window_span(room)
                    along = cross_x if wall in ("north", "south") else cross_y
                    success = lo <= along <= hi
                e = (cross_x - wcx, cross_y - wcy)
                angle = offset = None
                if success:
                    nx, ny = _WALL_NORMALS[wall]
                    dot = math.cos(state.heading) * nx + math.sin(state.heading) * ny
                    angle = math.degrees(math.acos(min(max(dot, -1.0), 1.0)))
                    offset = math.hypot(*e)
                return EpisodeResult(
                    outcome=Outcome.SUCCESS if success else Outcome.CRASH,
                    final_position=(cross_x, cross_y),
                    e=e,
                    flight_time=prev.time + t * dt,
                    approach_angle=angle,
                    centre_offset=offset,
                    path=path,
                )
            if state.time >= sim_params.timeout:
                return EpisodeResult(
                    outcome=Outcome.TIMEOUT,
                    final_position=(state.x, state.y),
                    e=(state.x - wcx, state.y - wcy),
                    flight_time=state.time,
                    approach_angle=None,
                    centre_offset=None,
                    path=path,
                )


def write_trace_csv(result: EpisodeResult, path) -> None:
    """Path trace export at the decision rate; floats keep full precision."""
    if result.path is None:
        raise ValueError("episode was run without path recording")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for row in result.path:
            writer.writerow([repr(v) for v in row[:-1]]
                            + ["hold" if row.mode is None else row.mode])
