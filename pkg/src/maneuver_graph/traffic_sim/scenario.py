"""Scripted world-frame scenarios.

World frame: ``x`` lateral (metres, right positive), ``z`` along the road in
the ego's direction of travel.  Ego-direction lanes ``0..lane_count-1`` have
centres at ``(i + 0.5) * lane_width``; opposing lanes are ``-1, -2, ...``.
Parked vehicles stand on the right shoulder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .._seeding import rng_for
from ..geometry import CameraModel
from ..scene_graph import CLASS_INDEX, CLASSES
from .config import ConfigError, WorldConfig

SHOULDER_OFFSET = 1.2
POLE_OFFSET = 2.5
MIN_GAP = 6.0
MOVING_SPEED = 0.5
MAX_ATTEMPTS = 200


@dataclass(frozen=True)
class VehicleScript:
    """Kinematic script of one vehicle.

    ``lateral`` is the per-frame world ``x`` (lane centre plus offset);
    ``longitudinal`` the per-frame world ``z`` obtained by integrating
    ``speed`` along ``direction``.
    """

    behavior: str
    lane: int
    z0: float
    direction: int
    speed: np.ndarray
    lateral: np.ndarray
    role: str = "primary"

    def longitudinal(self, dt: float) -> np.ndarray:
        steps = np.concatenate([[0.0], np.cumsum(self.speed[:-1] * dt)])
        return self.z0 + self.direction * steps

    def positions(self, dt: float) -> np.ndarray:
        return np.stack([self.lateral, self.longitudinal(dt)], axis=1)

    @property
    def label(self) -> int:
        return CLASS_INDEX[self.behavior]


@dataclass(frozen=True)
class Scenario:
    config: WorldConfig
    seed: int
    ego: np.ndarray  # (T, 3): x, z, heading (radians, from +z towards +x)
    vehicles: list
    landmarks: np.ndarray  # (m, 2) world x, z
    landmark_kinds: tuple  # "lane_marking" | "pole"
    camera: CameraModel
    node_ids: tuple  # vehicles first, then landmarks
    primary: str = ""
    overtake_pairs: tuple = field(default_factory=tuple)  # (passer index, passed index)

    @property
    def T(self) -> int:
        return self.config.T

    def world_positions(self) -> np.ndarray:
        """``(T, n, 2)`` noise-free world positions, vehicles then landmarks."""
        dt = self.config.frame_dt
        cols = [v.positions(dt) for v in self.vehicles]
        veh = np.stack(cols, axis=1) if cols else np.zeros((self.T, 0, 2))
        lm = np.broadcast_to(self.landmarks, (self.T,) + self.landmarks.shape)
        return np.concatenate([veh, lm], axis=1)

    def fingerprint(self) -> bytes:
        return np.ascontiguousarray(self.world_positions()).tobytes() + repr(self.node_ids).encode()


# ------------------------------------------------------------------ helpers
def lane_center(config: WorldConfig, lane: int) -> float:
    return (lane + 0.5) * config.lane_width


def shoulder_x(config: WorldConfig) -> float:
    return config.lane_count * config.lane_width + SHOULDER_OFFSET


def default_camera(config: WorldConfig) -> CameraModel:
    w, h = config.image_size
    return CameraModel.pinhole(config.focal_length, w / 2.0, h / 2.0, config.camera_height)


def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _uniform(rng, lo, hi) -> float:
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _constant(T: int, value: float) -> np.ndarray:
    return np.full(T, float(value))


def _lane_change(cfg: WorldConfig, rng, direction_sign: int, ego_speed: float) -> VehicleScript:
    """Smoothstep shift by one lane over a random 40-80% sub-window."""
    T = cfg.T
    start_lane = int(rng.integers(0, cfg.lane_count - 1)) if direction_sign > 0 else int(rng.integers(1, cfg.lane_count))
    frac = _uniform(rng, 0.4, 0.8)
    span = frac * (T - 1)
    t0 = _uniform(rng, 0.0, (T - 1) - span)
    u = (np.arange(T) - t0) / span
    lateral = lane_center(cfg, start_lane) + direction_sign * cfg.lane_width * smoothstep(u)
    v = _uniform(rng, *cfg.speeds["LC"])
    z0 = _uniform(rng, cfg.road_start + 6.0, cfg.road_start + 0.75 * cfg.road_length)
    return VehicleScript("LCL" if direction_sign > 0 else "LCR", start_lane, z0, 1, _constant(T, v), lateral)


def _moving_away(cfg: WorldConfig, rng, ego_speed: float, role: str = "primary", lane=None, speed=None) -> VehicleScript:
    lo, hi = cfg.speeds["MVA"]
    v = speed if speed is not None else _uniform(rng, max(lo, ego_speed + 1.5), max(hi, ego_speed + 1.5))
    lane = int(rng.integers(0, cfg.lane_count)) if lane is None else lane
    z0 = _uniform(rng, cfg.road_start + 6.0, cfg.road_start + 0.75 * cfg.road_length)
    return VehicleScript("MVA", lane, z0, 1, _constant(cfg.T, v), _constant(cfg.T, lane_center(cfg, lane)), role)


def _moving_towards(cfg: WorldConfig, rng, role: str = "primary") -> VehicleScript:
    v = _uniform(rng, *cfg.speeds["MTU"])
    lane = -int(rng.integers(1, cfg.opposing_lanes + 1))
    travel = v * cfg.duration
    lo = cfg.road_start + min(travel, 0.5 * cfg.road_length)
    z0 = _uniform(rng, lo, cfg.road_start + cfg.road_length)
    return VehicleScript("MTU", lane, z0, -1, _constant(cfg.T, v), _constant(cfg.T, lane_center(cfg, lane)), role)


def _parked(cfg: WorldConfig, rng, role: str = "primary") -> VehicleScript:
    z0 = _uniform(rng, cfg.road_start + 4.0, cfg.road_start + cfg.road_length)
    x = shoulder_x(cfg)
    return VehicleScript("PRK", cfg.lane_count, z0, 0, np.zeros(cfg.T), _constant(cfg.T, x), role)


def _overtake(cfg: WorldConfig, rng, ego_speed: float) -> tuple[VehicleScript, VehicleScript]:
    """Passer and the slower moving vehicle it passes, in adjacent lanes."""
    T, dt = cfg.T, cfg.frame_dt
    ref_lane = int(rng.integers(0, cfg.lane_count))
    neighbours = [l for l in (ref_lane - 1, ref_lane + 1) if 0 <= l < cfg.lane_count]
    pass_lane = int(rng.choice(neighbours))
    ref = _moving_away(cfg, rng, ego_speed, role="passed", lane=ref_lane)
    gain = _uniform(rng, *cfg.speeds["OVT_GAIN"])
    v_pass = float(ref.speed[0]) + gain
    t_star = _uniform(rng, 0.25 * (T - 1), 0.75 * (T - 1)) * dt
    gap = gain * t_star
    z_ref = max(ref.z0, cfg.road_start + 4.0 + gap)
    ref = VehicleScript("MVA", ref_lane, z_ref, 1, ref.speed, ref.lateral, "passed")
    passer = VehicleScript(
        "OVT", pass_lane, z_ref - gap, 1, _constant(T, v_pass), _constant(T, lane_center(cfg, pass_lane))
    )
    return passer, ref


def _background(cfg: WorldConfig, rng, behavior: str, ego_speed: float) -> VehicleScript:
    if behavior == "MVA":
        return _moving_away(cfg, rng, ego_speed, role="background")
    if behavior == "MTU":
        return _moving_towards(cfg, rng, role="background")
    return _parked(cfg, rng, role="background")


def _landmarks(cfg: WorldConfig, rng) -> tuple[np.ndarray, tuple]:
    lo, hi = cfg.road_start, cfg.road_start + cfg.road_length
    points, kinds = [], []
    boundaries = [i * cfg.lane_width for i in range(-cfg.opposing_lanes + 1, cfg.lane_count)]
    for x in boundaries:
        phase = _uniform(rng, 0.0, cfg.dash_spacing)
        for z in np.arange(lo + phase, hi, cfg.dash_spacing):
            points.append((x, float(z)))
            kinds.append("lane_marking")
    sides = (shoulder_x(cfg) + POLE_OFFSET - SHOULDER_OFFSET, -cfg.opposing_lanes * cfg.lane_width - POLE_OFFSET)
    for x in sides:
        count = int(rng.poisson(cfg.landmark_density * cfg.road_length))
        for z in np.sort(rng.uniform(lo, hi, size=count)):
            points.append((x, float(z)))
            kinds.append("pole")
    return np.asarray(points, dtype=np.float64).reshape(-1, 2), tuple(kinds)


# -------------------------------------------------------------- soundness
def _order_flips(za: np.ndarray, zb: np.ndarray) -> bool:
    s = np.sign(za - zb)
    s = s[s != 0]
    return bool(s.size and (s != s[0]).any())


def _lane_index(cfg: WorldConfig, x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x) / cfg.lane_width).astype(int)


def label_violations(scenario: Scenario) -> list[str]:
    """Reasons the scripted trajectories disagree with their labels (empty if sound)."""
    cfg = scenario.config
    dt = cfg.frame_dt
    ego_speed = float(np.hypot(*np.diff(scenario.ego[:, :2], axis=0)[0]) / dt) if scenario.T > 1 else 0.0
    problems = []
    z = [v.longitudinal(dt) for v in scenario.vehicles]
    for k, v in enumerate(scenario.vehicles):
        pos = v.positions(dt)
        disp = float(np.abs(pos - pos[0]).max())
        lanes = _lane_index(cfg, v.lateral)
        crossings = np.diff(lanes)
        if v.behavior == "PRK" and disp >= 1e-9:
            problems.append(f"vehicle {k}: PRK moves {disp:.3g} m")
        if v.behavior != "PRK" and float(v.speed.min()) <= MOVING_SPEED:
            problems.append(f"vehicle {k}: {v.behavior} is not moving")
        if v.behavior in ("MVA", "MTU", "OVT") and np.any(crossings != 0):
            problems.append(f"vehicle {k}: {v.behavior} crosses a lane boundary")
        if v.behavior == "MVA" and (v.direction != 1 or float(v.speed.min()) <= ego_speed):
            problems.append(f"vehicle {k}: MVA not faster than ego")
        if v.behavior == "MTU" and v.direction != -1:
            problems.append(f"vehicle {k}: MTU not travelling towards ego")
        if v.behavior in ("LCL", "LCR"):
            want = 1 if v.behavior == "LCL" else -1
            nz = crossings[crossings != 0]
            if nz.size != 1 or nz[0] != want:
                problems.append(f"vehicle {k}: {v.behavior} crossings {nz.tolist()}")
            if np.any(np.diff(v.lateral) * want < 0):
                problems.append(f"vehicle {k}: {v.behavior} lateral motion not monotone")
    pairs = set(scenario.overtake_pairs)
    for a, va in enumerate(scenario.vehicles):
        for b, vb in enumerate(scenario.vehicles):
            if b <= a:
                continue
            both_moving = min(va.speed.min(), vb.speed.min()) > MOVING_SPEED
            if both_moving and va.direction == vb.direction and _order_flips(z[a], z[b]):
                if (a, b) not in pairs and (b, a) not in pairs:
                    problems.append(f"vehicles {a},{b}: unintended overtake")
            close = np.abs(va.lateral - vb.lateral) < 0.6 * cfg.lane_width
            if np.any(close & (np.abs(z[a] - z[b]) < MIN_GAP)):
                problems.append(f"vehicles {a},{b}: collide")
    for a, b in pairs:
        va, vb = scenario.vehicles[a], scenario.vehicles[b]
        if va.behavior != "OVT" or not _order_flips(z[a], z[b]):
            problems.append(f"vehicles {a},{b}: scripted overtake without a pass")
        elif min(va.speed.min(), vb.speed.min()) <= MOVING_SPEED:
            problems.append(f"vehicles {a},{b}: overtake involves a stationary vehicle")
    if not any(v.behavior == "OVT" for v in scenario.vehicles) and pairs:
        problems.append("overtake pairs recorded without an OVT vehicle")
    return problems


# -------------------------------------------------------------- generation
def _normalize_mix(class_mix) -> np.ndarray:
    if isinstance(class_mix, Mapping):
        mix = np.array([float(class_mix.get(c, 0.0)) for c in CLASSES])
    else:
        mix = np.asarray(class_mix, dtype=np.float64)
    if mix.shape != (len(CLASSES),) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-6:
        raise ConfigError("class_mix must give 6 non-negative weights summing to 1")
    return mix


def generate_scenario(class_mix, config: WorldConfig, seed: int, primary: Optional[str] = None) -> Scenario:
    """Seeded scenario whose primary vehicle's class is drawn from ``class_mix``.

    Background vehicles are drawn from the mix restricted to the simple
    classes (MVA, MTU, PRK).  Candidate scenes that break any label invariant
    (accidental overtakes, collisions) are re-drawn.
    """
    mix = _normalize_mix(class_mix)
    rng = rng_for(seed, "scenario")
    if primary is None:
        primary = CLASSES[int(rng.choice(len(CLASSES), p=mix))]
    if not config.feasible(primary):
        raise ConfigError(f"{primary} is infeasible with lane_count={config.lane_count}, opposing_lanes={config.opposing_lanes}")
    simple = np.array([mix[CLASS_INDEX[c]] if config.feasible(c) else 0.0 for c in ("MVA", "MTU", "PRK")])
    camera = default_camera(config)
    T, dt = config.T, config.frame_dt
    for attempt in range(MAX_ATTEMPTS):
        r = rng_for(seed, "scenario", attempt)
        ego_speed = _uniform(r, *config.ego_speed)
        ego_lane = int(r.integers(0, config.lane_count))
        ego = np.stack(
            [np.full(T, lane_center(config, ego_lane)), ego_speed * dt * np.arange(T), np.zeros(T)], axis=1
        )
        pairs = ()
        if primary == "OVT":
            passer, ref = _overtake(config, r, ego_speed)
            vehicles = [passer, ref]
            pairs = ((0, 1),)
        elif primary in ("LCL", "LCR"):
            vehicles = [_lane_change(config, r, 1 if primary == "LCL" else -1, ego_speed)]
        else:
            vehicles = [_background(config, r, primary, ego_speed)]
            vehicles[0] = VehicleScript(**{**vehicles[0].__dict__, "role": "primary"})
        if simple.sum() > 0:
            lo, hi = config.extra_vehicles
            for _ in range(int(r.integers(lo, hi + 1))):
                behavior = ("MVA", "MTU", "PRK")[int(r.choice(3, p=simple / simple.sum()))]
                vehicles.append(_background(config, r, behavior, ego_speed))
        landmarks, kinds = _landmarks(config, r)
        if landmarks.shape[0] < 2:
            continue
        n = len(vehicles) + landmarks.shape[0]
        ids = tuple(int(i) for i in r.permutation(n))
        scenario = Scenario(config, seed, ego, vehicles, landmarks, kinds, camera, ids, primary, pairs)
        if not label_violations(scenario):
            return scenario
    raise ConfigError(f"could not place a consistent {primary} scene in {MAX_ATTEMPTS} attempts")
