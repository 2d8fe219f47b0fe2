"""Scene records, synthetic map-constrained scenario generation, windowing, and
the newline-delimited JSON interchange format.

The synthetic generator drives vehicles along lane centerlines through straight
roads, curves, and junctions. Junction maneuvers are drawn from configured turn
probabilities after the observation prefix ends, so the approach segment is
maneuver-independent: which way an agent will turn is identifiable from the map
(junction position and arms) but not from a short observation prefix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .geometry import (AgentState, AgentType, LocalFrame, build_local_frame,
                       effective_heading, finite_difference_states, query_neighbors,
                       to_displacements)
from .semantic_map import VectorMap, rasterize
from .windows import FutureTruth, NeighborSet, ObservationWindow

TOPOLOGIES = ("straight", "curve", "t_junction", "four_way")
MANEUVERS = ("straight", "left", "right")


@dataclass
class SceneFrame:
    timestamp: float
    agents: dict[str, AgentState]


@dataclass
class SceneRecord:
    """One timestamped multi-agent scene plus its vector map."""

    scene_id: str
    fps: float
    frames: list[SceneFrame]
    vector_map: VectorMap
    objects_of_interest: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        dt = 1.0 / self.fps
        for i, frame in enumerate(self.frames):
            expected = self.frames[0].timestamp + i * dt
            if abs(frame.timestamp - expected) > 1e-6:
                raise ValueError(
                    f"frame {i} timestamp {frame.timestamp} is not on the 1/fps grid")
        known = set()
        for frame in self.frames:
            known.update(frame.agents)
        missing = [a for a in self.objects_of_interest if a not in known]
        if missing:
            raise ValueError(f"objects of interest never appear in frames: {missing}")

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def __len__(self) -> int:
        return len(self.frames)


def scene_neighbors(scene: SceneRecord, target_id: str, t: int, radius: float, *,
                    horizon_cap: float, frame: LocalFrame | None = None):
    """Neighbor query against one scene frame (see geometry.query_neighbors)."""
    return query_neighbors(scene.frames[t].agents, target_id, radius,
                           horizon_cap=horizon_cap, frame=frame)


# --------------------------------------------------------------------------
# Synthetic scenario generation
# --------------------------------------------------------------------------

@dataclass
class SyntheticConfig:
    """Road topology and traffic parameters for scenario generation."""

    topology: str = "four_way"
    curve_radius: float = 25.0
    lane_width: float = 3.5
    road_half_length: float = 80.0
    targets_per_scene: int = 2
    cross_traffic: int = 2
    lead_vehicle_prob: float = 0.7
    speed_range: tuple[float, float] = (6.0, 10.0)
    turn_probabilities: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    # meters from the scene-start position to the junction entry; drawn
    # independently of speed so the observation prefix does not reveal when the
    # junction arrives, only the map does
    entry_distance_range: tuple[float, float] = (8.0, 26.0)
    # entry never happens before this much of the scene has played out
    min_prefix_seconds: float = 1.0
    noise_std: float = 0.05
    n_frames: int = 20
    fps: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}, expected one of {TOPOLOGIES}")
        probs = self.turn_probabilities
        if len(probs) != 3 or any(p < 0 or p > 1 for p in probs):
            raise ConfigError("turn probabilities must be three values in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"turn probabilities must sum to 1, got {sum(probs)}")
        if self.n_frames < 2:
            raise ConfigError("scenes need at least 2 frames")
        if self.speed_range[0] <= 0 or self.speed_range[1] < self.speed_range[0]:
            raise ConfigError(f"bad speed range {self.speed_range}")
        if self.targets_per_scene < 1:
            raise ConfigError("need at least one target per scene")


class LanePath:
    """Arclength-parameterized polyline path."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        keep = np.concatenate([[True], seg > 1e-12])
        self.points = pts[keep]
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])

    def position(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.points) - 2)
        seg_len = self.cum[i + 1] - self.cum[i]
        u = 0.0 if seg_len == 0 else (s - self.cum[i]) / seg_len
        return (1 - u) * self.points[i] + u * self.points[i + 1]

    def heading(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])


def _arc_points(center, radius: float, a0: float, a1: float, step: float = 0.05) -> np.ndarray:
    n = max(int(abs(a1 - a0) / step), 2)
    ang = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def _rot(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return points @ np.array([[c, s], [-s, c]])


def _resample(points: np.ndarray, step: float = 0.25) -> np.ndarray:
    path = LanePath(points)
    n = max(int(path.length / step), 2)
    return np.stack([path.position(s) for s in np.linspace(0.0, path.length, n)])


@dataclass
class _Route:
    """A drivable route: full path plus the arclength of the junction entry."""

    path: LanePath
    entry_s: float
    maneuver: str


class _Topology:
    """Lane routes and vector map for one synthetic road layout."""

    def __init__(self, cfg: SyntheticConfig):
        self.cfg = cfg
        if cfg.topology == "four_way":
            self.arm_angles = [0.0, math.pi / 2, math.pi, -math.pi / 2]
            self.available = {a: ["straight", "left", "right"] for a in range(4)}
        elif cfg.topology == "t_junction":
            # arms: 0 = east-bound on the through road, 2 = west-bound, 1 = south-bound
            # down the northern stem
            self.arm_angles = [0.0, -math.pi / 2, math.pi]
            self.available = {0: ["straight", "left"], 1: ["left", "right"],
                              2: ["straight", "right"]}
        elif cfg.topology == "curve":
            self.arm_angles = [0.0]
            self.available = {0: ["straight"]}
        else:  # straight
            self.arm_angles = [0.0, math.pi]
            self.available = {0: ["straight"], 1: ["straight"]}
        self.vector_map = self._build_map()

    # canonical routes are built for an east-bound approach and rotated per arm
    def _canonical_route(self, maneuver: str) -> tuple[np.ndarray, float]:
        w = self.cfg.lane_width
        L = self.cfg.road_half_length
        if self.cfg.topology == "curve":
            r = self.cfg.curve_radius
            # lane on a circle about (0, r); entry is meaningless, place mid-path
            pts = _arc_points((0.0, r), r, -math.pi / 2, math.pi / 6, step=0.01)
            return pts, LanePath(pts).length / 2
        if self.cfg.topology == "straight":
            pts = np.array([[-L, -w / 2], [L, -w / 2]])
            return pts, L  # "entry" at the road midpoint
        approach = np.array([[-L, -w / 2], [-w, -w / 2]])
        if maneuver == "straight":
            rest = np.array([[L, -w / 2]])
            pts = np.vstack([approach, rest])
        elif maneuver == "left":
            arc = _arc_points((-w, w), 1.5 * w, -math.pi / 2, 0.0)
            rest = np.array([[w / 2, L]])
            pts = np.vstack([approach, arc, rest])
        else:  # right
            arc = _arc_points((-w, -w), 0.5 * w, math.pi / 2, 0.0)
            rest = np.array([[-w / 2, -L]])
            pts = np.vstack([approach, arc, rest])
        return pts, L - w

    def route(self, arm: int, maneuver: str) -> _Route:
        pts, entry_s = self._canonical_route(maneuver)
        pts = _rot(pts, self.arm_angles[arm])
        return _Route(path=LanePath(_resample(pts)), entry_s=entry_s, maneuver=maneuver)

    def maneuvers_for(self, arm: int) -> list[str]:
        return self.available[arm]

    def _build_map(self) -> VectorMap:
        cfg = self.cfg
        w = cfg.lane_width
        L = cfg.road_half_length
        if cfg.topology == "curve":
            r = cfg.curve_radius
            center = (0.0, r)
            return VectorMap(
                drivable_areas=[np.vstack([
                    _arc_points(center, r + w, -math.pi / 2, math.pi / 6),
                    _arc_points(center, r - w, math.pi / 6, -math.pi / 2),
                ])],
                lane_dividers=[_arc_points(center, r, -math.pi / 2, math.pi / 6)],
                road_dividers=[_arc_points(center, r + w, -math.pi / 2, math.pi / 6),
                               _arc_points(center, r - w, -math.pi / 2, math.pi / 6)],
                lane_centerlines=[_arc_points(center, r + w / 2, -math.pi / 2, math.pi / 6),
                                  _arc_points(center, r - w / 2, -math.pi / 2, math.pi / 6)],
            )
        if cfg.topology == "straight":
            return VectorMap(
                drivable_areas=[np.array([[-L, -w], [L, -w], [L, w], [-L, w]])],
                lane_dividers=[np.array([[-L, 0.0], [L, 0.0]])],
                road_dividers=[np.array([[-L, -w], [L, -w]]),
                               np.array([[-L, w], [L, w]])],
                lane_centerlines=[np.array([[-L, -w / 2], [L, -w / 2]]),
                                  np.array([[-L, w / 2], [L, w / 2]])],
            )
        # junction layouts share the east-west road
        arms = self.arm_angles
        drivable = [np.array([[-L, -w], [L, -w], [L, w], [-L, w]])]
        lane_div, road_div, centerlines, crosswalks = [], [], [], []
        for angle in arms:
            # one half-road (arm) extending from the junction box outward
            seg = np.array([[w, 0.0], [L, 0.0]])
            lane_div.append(_rot(seg, angle))
            road_div.append(_rot(np.array([[w, -w], [L, -w]]), angle))
            road_div.append(_rot(np.array([[w, w], [L, w]]), angle))
            centerlines.append(_rot(np.array([[w, -w / 2], [L, -w / 2]]), angle))
            centerlines.append(_rot(np.array([[w, w / 2], [L, w / 2]]), angle))
            cw = np.array([[w + 1.0, -w], [w + 2.5, -w], [w + 2.5, w], [w + 1.0, w]])
            crosswalks.append(_rot(cw, angle))
            if abs(abs(angle) - math.pi / 2) < 1e-9:
                drivable.append(_rot(np.array([[0.0, -w], [L, -w], [L, w], [0.0, w]]), angle))
        return VectorMap(drivable_areas=drivable, crosswalks=crosswalks,
                         lane_dividers=lane_div, road_dividers=road_div,
                         lane_centerlines=centerlines)


def _choose_maneuver(rng: np.random.Generator, cfg: SyntheticConfig,
                     available: list[str]) -> str:
    probs = {m: p for m, p in zip(MANEUVERS, cfg.turn_probabilities)}
    weights = np.array([probs[m] for m in available])
    total = weights.sum()
    if total <= 0:
        raise ConfigError("turn probabilities assign zero mass to every available maneuver")
    return str(rng.choice(available, p=weights / total))


@dataclass
class _Vehicle:
    agent_id: str
    route: _Route
    speed: float
    start_s: float
    is_target: bool
    follows: str | None = None   # agent id of a lead vehicle on the same approach


def _simulate_speeds(vehicles: list[_Vehicle], cfg: SyntheticConfig,
                     substeps: int = 4) -> dict[str, np.ndarray]:
    """Integrate arclength per vehicle; targets ease off behind slower leads."""
    dt = 1.0 / (cfg.fps * substeps)
    n = (cfg.n_frames - 1) * substeps + 1
    s = {v.agent_id: v.start_s for v in vehicles}
    vel = {v.agent_id: v.speed for v in vehicles}
    out = {v.agent_id: np.zeros(cfg.n_frames) for v in vehicles}
    by_id = {v.agent_id: v for v in vehicles}
    for step in range(n):
        if step % substeps == 0:
            for v in vehicles:
                out[v.agent_id][step // substeps] = s[v.agent_id]
        for v in vehicles:
            v_cmd = v.speed
            if v.follows is not None:
                lead = by_id[v.follows]
                gap = s[lead.agent_id] - s[v.agent_id]
                standoff = 2.0 + 0.8 * vel[lead.agent_id]
                if gap < standoff:
                    v_cmd = max(0.0, vel[lead.agent_id] + 0.5 * (gap - standoff))
            dv = np.clip(v_cmd - vel[v.agent_id], -3.0 * dt, 3.0 * dt)
            vel[v.agent_id] += dv
            s[v.agent_id] += vel[v.agent_id] * dt
    return out


def _generate_scene(cfg: SyntheticConfig, scene_id: str,
                    seed_seq: np.random.SeedSequence) -> SceneRecord:
    structure_ss, noise_ss = seed_seq.spawn(2)
    rng = np.random.default_rng(structure_ss)
    noise_rng = np.random.default_rng(noise_ss)
    topo = _Topology(cfg)
    n_arms = len(topo.arm_angles)
    duration = (cfg.n_frames - 1) / cfg.fps

    vehicles: list[_Vehicle] = []
    maneuvers: dict[str, str] = {}
    next_id = 0

    def new_id() -> str:
        nonlocal next_id
        next_id += 1
        return f"a{next_id - 1}"

    target_ids = []
    for i in range(cfg.targets_per_scene):
        arm = int(rng.integers(0, n_arms))
        maneuver = _choose_maneuver(rng, cfg, topo.maneuvers_for(arm))
        speed = float(rng.uniform(*cfg.speed_range))
        route = topo.route(arm, maneuver)
        entry_d = max(float(rng.uniform(*cfg.entry_distance_range)),
                      speed * cfg.min_prefix_seconds)
        start_s = route.entry_s - entry_d
        tid = new_id()
        target_ids.append(tid)
        vehicles.append(_Vehicle(tid, route, speed, start_s, is_target=True))
        maneuvers[tid] = maneuver

        if rng.uniform() < cfg.lead_vehicle_prob:
            lead_maneuver = _choose_maneuver(rng, cfg, topo.maneuvers_for(arm))
            lead_route = topo.route(arm, lead_maneuver)
            gap = float(rng.uniform(8.0, 15.0))
            lead_speed = speed * float(rng.uniform(0.55, 0.95))
            lid = new_id()
            vehicles.append(_Vehicle(lid, lead_route, lead_speed, start_s + gap,
                                     is_target=False))
            maneuvers[lid] = lead_maneuver
            vehicles[-2].follows = lid

    for _ in range(cfg.cross_traffic):
        arm = int(rng.integers(0, n_arms))
        maneuver = _choose_maneuver(rng, cfg, topo.maneuvers_for(arm))
        speed = float(rng.uniform(*cfg.speed_range))
        route = topo.route(arm, maneuver)
        entry_t = float(rng.uniform(0.0, duration))
        cid = new_id()
        vehicles.append(_Vehicle(cid, route, speed, route.entry_s - speed * entry_t,
                                 is_target=False))
        maneuvers[cid] = maneuver

    arclengths = _simulate_speeds(vehicles, cfg)
    frames = [SceneFrame(timestamp=t / cfg.fps, agents={}) for t in range(cfg.n_frames)]
    for v in vehicles:
        s_series = arclengths[v.agent_id]
        true_pos = np.stack([v.route.path.position(s) for s in s_series])
        headings = np.array([v.route.path.heading(s) for s in s_series])
        noisy = true_pos + noise_rng.normal(0.0, cfg.noise_std, true_pos.shape)
        states = finite_difference_states(noisy, 1.0 / cfg.fps, headings=headings,
                                          agent_type=AgentType.VEHICLE)
        for t, state in enumerate(states):
            frames[t].agents[v.agent_id] = state

    return SceneRecord(
        scene_id=scene_id, fps=cfg.fps, frames=frames, vector_map=topo.vector_map,
        objects_of_interest=target_ids,
        metadata={"maneuvers": maneuvers, "noise_std": cfg.noise_std},
    )


def generate_scenarios(config: SyntheticConfig, n: int) -> list[SceneRecord]:
    """Generate n scenes, deterministic per config seed."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    config.validate()
    seeds = np.random.SeedSequence(config.seed).spawn(max(n, 1))
    return [_generate_scene(config, f"scene{config.seed}_{i}", seeds[i]) for i in range(n)]


# --------------------------------------------------------------------------
# Downsampling and windowing
# --------------------------------------------------------------------------

def downsample(scene: SceneRecord, factor: int) -> SceneRecord:
    """Keep every factor-th frame (from index 0) and recompute kinematics."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return scene
    kept = scene.frames[::factor]
    new_fps = scene.fps / factor
    new_dt = 1.0 / new_fps
    frames = [SceneFrame(timestamp=scene.frames[0].timestamp + i * new_dt, agents={})
              for i in range(len(kept))]

    agent_ids = sorted({a for f in kept for a in f.agents})
    for agent_id in agent_ids:
        present = [i for i, f in enumerate(kept) if agent_id in f.agents]
        # recompute finite differences over each contiguous run of presence
        runs: list[list[int]] = []
        for idx in present:
            if runs and idx == runs[-1][-1] + 1:
                runs[-1].append(idx)
            else:
                runs.append([idx])
        for run in runs:
            old = [kept[i].agents[agent_id] for i in run]
            positions = np.stack([st.position for st in old])
            states = finite_difference_states(
                positions, new_dt, headings=[st.heading for st in old],
                agent_type=old[0].agent_type)
            for i, st in zip(run, states):
                frames[i].agents[agent_id] = replace(st, valid=kept[i].agents[agent_id].valid)

    return SceneRecord(scene_id=scene.scene_id, fps=new_fps, frames=frames,
                       vector_map=scene.vector_map,
                       objects_of_interest=list(scene.objects_of_interest),
                       metadata=dict(scene.metadata))


def _target_ok(scene: SceneRecord, target_id: str, start: int, end: int) -> bool:
    for t in range(start, end):
        state = scene.frames[t].agents.get(target_id)
        if state is None or not state.valid or not state.is_finite():
            return False
    return True


def make_windows(scene: SceneRecord, target_ids=None, T_range=(5, 5), horizon: int = 15,
                 radius: float = 30.0, *, horizon_cap: float | None = None,
                 ) -> list[tuple[ObservationWindow, FutureTruth]]:
    """Extract (window, future) pairs for each target by sliding over the scene.

    ``T_range`` may be an int or a (min, max) pair: each window uses the longest
    available history up to the maximum. Windows are localized in the frame of
    the target's first observed pose; windows touching an invalid target frame
    are dropped.
    """
    if isinstance(T_range, int):
        t_min = t_max = T_range
    else:
        t_min, t_max = T_range
    if t_min < 2:
        raise ValueError(f"observation windows need at least 2 frames, got T_min={t_min}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    dt = scene.dt
    cap = horizon_cap if horizon_cap is not None else horizon * dt
    targets = list(target_ids) if target_ids is not None else list(scene.objects_of_interest)
    length = len(scene.frames)

    out: list[tuple[ObservationWindow, FutureTruth]] = []
    for target in targets:
        for p in range(t_min, length - horizon + 1):  # p = first future frame index
            t_obs = min(t_max, p)
            t0 = p - t_obs
            if not _target_ok(scene, target, t0, p + horizon):
                continue
            anchor = scene.frames[t0].agents[target]
            frame = build_local_frame(anchor)

            def localized(t: int):
                state = scene.frames[t].agents[target]
                nbrs = query_neighbors(scene.frames[t].agents, target, radius,
                                       horizon_cap=cap, frame=frame)
                self_state = np.concatenate([frame.rotate_to_local(state.velocity),
                                             frame.rotate_to_local(state.acceleration)])
                return state, self_state, NeighborSet.from_views(nbrs)

            obs_states, obs_nbrs, world = [], [], []
            for t in range(t0, p):
                state, self_state, nbrs = localized(t)
                obs_states.append(self_state)
                obs_nbrs.append(nbrs)
                world.append(state.position)
            fut_states, fut_nbrs, fut_world = [], [], []
            for t in range(p, p + horizon):
                state, self_state, nbrs = localized(t)
                fut_states.append(self_state)
                fut_nbrs.append(nbrs)
                fut_world.append(state.position)

            world = np.stack(world)
            fut_world = np.stack(fut_world)
            local_obs = frame.to_local(world)
            local_all = frame.to_local(np.vstack([world[-1:], fut_world]))

            window = ObservationWindow(
                self_states=np.stack(obs_states), neighbors=obs_nbrs,
                raster=rasterize(scene.vector_map, frame), dt=dt,
                observed_local=local_obs, observed_world=world,
                scene_id=scene.scene_id, target_id=target, start_index=t0)
            truth = FutureTruth(
                displacements=to_displacements(local_all),
                self_states=np.stack(fut_states), neighbors=fut_nbrs,
                world_positions=fut_world)
            out.append((window, truth))
    return out


def make_dataset(scenes, T_range=(5, 5), horizon: int = 15, radius: float = 30.0,
                 *, horizon_cap: float | None = None):
    """Windows for a list of scenes; never mixes frames across scene boundaries."""
    out = []
    for scene in scenes:
        out.extend(make_windows(scene, None, T_range, horizon, radius,
                                horizon_cap=horizon_cap))
    return out


# --------------------------------------------------------------------------
# Interchange format: one scene per line, JSON
# --------------------------------------------------------------------------

def _state_to_json(state: AgentState) -> dict:
    return {
        "position": state.position.tolist(),
        "velocity": state.velocity.tolist(),
        "acceleration": state.acceleration.tolist(),
        "heading": state.heading,
        "type": state.agent_type.value,
        "valid": state.valid,
    }


def _state_from_json(data: dict, where: str) -> AgentState:
    if not isinstance(data, dict):
        raise DataError(f"{where}: agent state must be an object")
    for key in ("position", "velocity", "acceleration", "heading"):
        if key not in data:
            raise DataError(f"{where}: missing field {key!r}")
    try:
        agent_type = AgentType(data.get("type", "other"))
    except ValueError:
        agent_type = AgentType.OTHER
    try:
        return AgentState(
            position=data["position"], velocity=data["velocity"],
            acceleration=data["acceleration"], heading=float(data["heading"]),
            agent_type=agent_type, valid=bool(data.get("valid", True)))
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: {exc}") from exc


def scene_to_json_dict(scene: SceneRecord) -> dict:
    return {
        "scene_id": scene.scene_id,
        "fps": scene.fps,
        "objects_of_interest": list(scene.objects_of_interest),
        "metadata": scene.metadata,
        "map": scene.vector_map.to_json_dict(),
        "frames": [
            {"t": f.timestamp,
             "agents": {aid: _state_to_json(st) for aid, st in sorted(f.agents.items())}}
            for f in scene.frames
        ],
    }


def scene_from_json_dict(data: dict, where: str = "scene") -> SceneRecord:
    if not isinstance(data, dict):
        raise DataError(f"{where}: scene record must be an object")
    for key in ("scene_id", "fps", "frames", "map"):
        if key not in data:
            raise DataError(f"{where}: missing field {key!r}")
    frames = []
    if not isinstance(data["frames"], list):
        raise DataError(f"{where}: 'frames' must be a list")
    for i, fdata in enumerate(data["frames"]):
        if not isinstance(fdata, dict) or "t" not in fdata or "agents" not in fdata:
            raise DataError(f"{where}: frame {i} must have fields 't' and 'agents'")
        agents = {
            str(aid): _state_from_json(sdata, f"{where}: frame {i}, agent {aid!r}")
            for aid, sdata in fdata["agents"].items()
        }
        frames.append(SceneFrame(timestamp=float(fdata["t"]), agents=agents))
    try:
        return SceneRecord(
            scene_id=str(data["scene_id"]), fps=float(data["fps"]), frames=frames,
            vector_map=VectorMap.from_json_dict(data["map"]),
            objects_of_interest=[str(a) for a in data.get("objects_of_interest", [])],
            metadata=data.get("metadata", {}))
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from exc


def export_scenes(scenes, path) -> None:
    """Write scenes as newline-delimited JSON, one scene per line."""
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_to_json_dict(scene)) + "\n")


def ingest_external(path, format_tag: str = "scene-jsonl") -> list[SceneRecord]:
    """Read scenes from the documented interchange file."""
    if format_tag != "scene-jsonl":
        raise DataError(f"unknown format tag {format_tag!r}")
    scenes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc})") from exc
            scenes.append(scene_from_json_dict(data, where=f"line {lineno}"))
    return scenes
