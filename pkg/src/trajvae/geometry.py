"""Agent-state arithmetic: local frames, displacements, neighbor queries, social features.

All operations are pure functions over immutable inputs. Positions are 2-vectors in
meters, velocities in m/s, accelerations in m/s^2, headings in radians wrapped to
(-pi, pi].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Below this speed the stored heading field is trusted over the velocity direction,
# which is dominated by noise at standstill.
STANDSTILL_SPEED = 0.1


class AgentType(enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    OTHER = "other"


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    a = math.fmod(float(angle), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def _as_vec2(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class AgentState:
    """Kinematic state of one agent at one frame.

    Invalid states carry no trusted kinematics and are skipped by neighbor queries
    and window extraction.
    """

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    heading: float
    agent_type: AgentType = AgentType.VEHICLE
    valid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec2(self.position, "position"))
        object.__setattr__(self, "velocity", _as_vec2(self.velocity, "velocity"))
        object.__setattr__(self, "acceleration", _as_vec2(self.acceleration, "acceleration"))
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.position))
            and np.all(np.isfinite(self.velocity))
            and np.all(np.isfinite(self.acceleration))
            and math.isfinite(self.heading)
        )


def effective_heading(state: AgentState) -> float:
    """Movement direction: velocity angle when moving, stored heading at standstill."""
    if state.speed < STANDSTILL_SPEED:
        return state.heading
    return math.atan2(state.velocity[1], state.velocity[0])


@dataclass(frozen=True)
class LocalFrame:
    """Rigid 2-D frame: ``origin`` maps to (0, 0) and world direction ``rotation``
    maps to the +x axis."""

    origin: np.ndarray
    rotation: float

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec2(self.origin, "origin"))
        object.__setattr__(self, "rotation", float(self.rotation))

    def to_local(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        d = p - self.origin
        return self.rotate_to_local(d)

    def to_world(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return self.rotate_to_world(p) + self.origin

    def rotate_to_local(self, vectors) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x = c * v[..., 0] + s * v[..., 1]
        y = -s * v[..., 0] + c * v[..., 1]
        return np.stack([x, y], axis=-1)

    def rotate_to_world(self, vectors) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x = c * v[..., 0] - s * v[..., 1]
        y = s * v[..., 0] + c * v[..., 1]
        return np.stack([x, y], axis=-1)


def build_local_frame(anchor: AgentState) -> LocalFrame:
    """Frame in which ``anchor`` sits at the origin heading along +x.

    The frame rotation comes from the velocity direction when the anchor is moving
    and from the stored heading field below ``STANDSTILL_SPEED``.
    """
    if not anchor.is_finite():
        raise ValueError("anchor state has non-finite fields")
    return LocalFrame(origin=anchor.position.copy(), rotation=effective_heading(anchor))


def to_displacements(positions) -> np.ndarray:
    """Per-frame displacements x^t - x^{t-1}; length is one less than the input."""
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[-1] != 2 or p.shape[0] < 1:
        raise ValueError(f"expected an (N, 2) array with N >= 1, got shape {p.shape}")
    return p[1:] - p[:-1]


def reconstruct_trajectory(last_position, displacements) -> np.ndarray:
    """Cumulative sums of displacements offset by ``last_position``.

    Inverse of :func:`to_displacements` when the result is prefixed with the
    starting point.
    """
    last = _as_vec2(last_position, "last_position")
    d = np.asarray(displacements, dtype=np.float64)
    if d.size == 0:
        return np.zeros((0, 2), dtype=np.float64)
    if d.ndim != 2 or d.shape[-1] != 2:
        raise ValueError(f"displacements must be (N, 2), got shape {d.shape}")
    return last + np.cumsum(d, axis=0)


@dataclass(frozen=True)
class SocialFeatures:
    """Pairwise interaction features: distance, bearing angle, and the minimal
    predicted distance under constant relative velocity."""

    distance: float
    bearing: float
    min_predicted_distance: float


@dataclass(frozen=True)
class NeighborView:
    """A neighbor as seen from a target agent, expressed in the target's frame."""

    rel_position: np.ndarray
    rel_velocity: np.ndarray
    social: SocialFeatures
    agent_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rel_position", _as_vec2(self.rel_position, "rel_position"))
        object.__setattr__(self, "rel_velocity", _as_vec2(self.rel_velocity, "rel_velocity"))


def _social_from_relative(dp: np.ndarray, dv: np.ndarray, self_heading: float,
                          horizon_cap: float) -> SocialFeatures:
    distance = float(np.linalg.norm(dp))
    bearing = wrap_angle(math.atan2(dp[1], dp[0]) - self_heading)
    dv_sq = float(dv @ dv)
    if dv_sq == 0.0:
        t_star = 0.0
    else:
        t_star = min(max(-float(dp @ dv) / dv_sq, 0.0), horizon_cap)
    mpd = float(np.linalg.norm(dp + t_star * dv))
    return SocialFeatures(distance=distance, bearing=bearing, min_predicted_distance=mpd)


def compute_social_features(self_state: AgentState, neighbor: NeighborView,
                            horizon_cap: float) -> SocialFeatures:
    """Social features of a neighbor relative to ``self_state``.

    ``neighbor.rel_position``/``rel_velocity`` and ``self_state.heading`` must be
    expressed in the same frame. The time of closest approach is
    ``clamp(-(dp . dv) / |dv|^2, 0, horizon_cap)``; a zero relative velocity gives
    a minimal predicted distance equal to the current distance.
    """
    if not horizon_cap > 0.0:
        raise ValueError(f"horizon_cap must be positive, got {horizon_cap}")
    return _social_from_relative(
        neighbor.rel_position, neighbor.rel_velocity,
        effective_heading(self_state), horizon_cap,
    )


def query_neighbors(agents: Mapping[str, AgentState], target_id: str, radius: float,
                    *, horizon_cap: float, frame: LocalFrame | None = None) -> list[NeighborView]:
    """Valid agents within ``radius`` (closed ball) of the target, localized.

    ``agents`` maps agent id to its state at one frame. Relative positions and
    velocities are rotated into ``frame`` (the target's own local frame when not
    given). Results are ordered by ascending distance with ties broken by agent id.
    """
    if target_id not in agents:
        raise KeyError(f"unknown target id {target_id!r}")
    target = agents[target_id]
    if not target.valid:
        raise ValueError(f"target {target_id!r} is not valid at this frame")
    if not horizon_cap > 0.0:
        raise ValueError(f"horizon_cap must be positive, got {horizon_cap}")
    if frame is None:
        frame = build_local_frame(target)
    heading = effective_heading(target)

    found: list[tuple[float, str, NeighborView]] = []
    for agent_id, state in agents.items():
        if agent_id == target_id or not state.valid:
            continue
        dp = state.position - target.position
        distance = float(np.linalg.norm(dp))
        if distance > radius:
            continue
        dv = state.velocity - target.velocity
        social = _social_from_relative(dp, dv, heading, horizon_cap)
        view = NeighborView(
            rel_position=frame.rotate_to_local(dp),
            rel_velocity=frame.rotate_to_local(dv),
            social=social,
            agent_id=agent_id,
        )
        found.append((distance, agent_id, view))
    found.sort(key=lambda item: (item[0], item[1]))
    return [view for _, _, view in found]


def finite_difference_states(positions, dt: float, *, headings=None,
                             agent_type: AgentType = AgentType.VEHICLE,
                             valid: bool = True) -> list[AgentState]:
    """Derive velocity/acceleration from positions by finite differences.

    The first frames are backfilled with the earliest computable value so the
    output has one state per position; with fewer than 3 positions the
    acceleration is zero.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[-1] != 2 or p.shape[0] < 1:
        raise ValueError(f"expected an (N, 2) array with N >= 1, got shape {p.shape}")
    n = p.shape[0]

    v = np.zeros_like(p)
    if n >= 2:
        v[1:] = (p[1:] - p[:-1]) / dt
        v[0] = v[1]
    a = np.zeros_like(p)
    if n >= 3:
        a[2:] = (v[2:] - v[1:-1]) / dt
        a[0] = a[1] = a[2]

    states = []
    prev_heading = 0.0
    for t in range(n):
        if headings is not None:
            heading = float(headings[t])
        elif float(np.linalg.norm(v[t])) >= STANDSTILL_SPEED:
            heading = math.atan2(v[t][1], v[t][0])
        else:
            heading = prev_heading
        prev_heading = heading
        states.append(AgentState(position=p[t], velocity=v[t], acceleration=a[t],
                                 heading=heading, agent_type=agent_type, valid=valid))
    return states
