"""World configuration and the named scene-statistics presets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..scene_graph import CLASSES


class ConfigError(ValueError):
    pass


def _default_speeds() -> dict:
    return {
        "MVA": [10.0, 15.0],
        "MTU": [6.0, 12.0],
        "LC": [6.0, 12.0],
        "OVT_GAIN": [3.0, 7.0],
    }


@dataclass(frozen=True)
class WorldConfig:
    """Physical layout and kinematics of the synthetic road.

    ``lane_count`` counts lanes travelling with the ego vehicle; ``opposing_lanes``
    more lie to their left.  Lane markings are dashes every ``dash_spacing``
    metres on every interior boundary; ``landmark_density`` is the rate of
    roadside poles per metre on each side of the road.  Speeds are in m/s.
    ``OVT_GAIN`` is the speed an overtaking vehicle holds over the vehicle it
    passes.
    """

    distribution_id: str = "apollo"
    lane_count: int = 3
    opposing_lanes: int = 1
    lane_width: float = 3.5
    dash_spacing: float = 9.0
    landmark_density: float = 0.04
    road_start: float = 3.0
    road_length: float = 50.0
    ego_speed: tuple = (5.0, 9.0)
    speeds: dict = field(default_factory=_default_speeds)
    extra_vehicles: tuple = (0, 2)
    T: int = 10
    frame_dt: float = 0.3
    noise_sigma: float = 0.15
    camera_height: float = 1.5
    focal_length: float = 720.0
    image_size: tuple = (1280, 720)

    def __post_init__(self):
        object.__setattr__(self, "ego_speed", tuple(float(v) for v in self.ego_speed))
        object.__setattr__(self, "extra_vehicles", tuple(int(v) for v in self.extra_vehicles))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        speeds = _default_speeds()
        speeds.update({k: [float(a), float(b)] for k, (a, b) in dict(self.speeds).items()})
        object.__setattr__(self, "speeds", speeds)
        positive = {
            "lane_width": self.lane_width,
            "dash_spacing": self.dash_spacing,
            "road_length": self.road_length,
            "frame_dt": self.frame_dt,
            "camera_height": self.camera_height,
            "focal_length": self.focal_length,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.lane_count < 1 or self.opposing_lanes < 0:
            raise ConfigError("need at least one ego-direction lane and a non-negative opposing lane count")
        if self.T < 2:
            raise ConfigError("T must be at least 2 frames")
        if self.noise_sigma < 0 or self.landmark_density < 0:
            raise ConfigError("noise_sigma and landmark_density must be non-negative")
        lo, hi = self.ego_speed
        if not 0 < lo <= hi:
            raise ConfigError("ego_speed must be an increasing positive range")
        for name, (a, b) in self.speeds.items():
            if not 0 < a <= b:
                raise ConfigError(f"speed range {name} must be an increasing positive range")
        if self.speeds["MVA"][1] <= hi:
            raise ConfigError("MVA speeds must be able to exceed the ego speed")
        if self.extra_vehicles[0] < 0 or self.extra_vehicles[0] > self.extra_vehicles[1]:
            raise ConfigError("extra_vehicles must be a non-negative (min, max) range")

    @property
    def duration(self) -> float:
        return (self.T - 1) * self.frame_dt

    def feasible(self, behavior: str) -> bool:
        if behavior in ("LCL", "LCR", "OVT"):
            return self.lane_count >= 2
        if behavior == "MTU":
            return self.opposing_lanes >= 1
        return behavior in CLASSES

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("ego_speed", "extra_vehicles", "image_size"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, blob: dict) -> "WorldConfig":
        unknown = set(blob) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        try:
            return cls(**blob)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str) -> "WorldConfig":
        try:
            with open(path) as fh:
                blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if "preset" in blob:
            base = preset(blob.pop("preset")).to_dict()
            base.update(blob)
            blob = base
        return cls.from_dict(blob)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_(self, **changes) -> "WorldConfig":
        return replace(self, **changes)


PRESETS = {
    # highway-like: three lanes, regular markings, fast traffic
    "apollo": WorldConfig(),
    # city streets: two lanes, slower traffic, many poles
    "kitti": WorldConfig(
        distribution_id="kitti",
        lane_count=2,
        lane_width=3.2,
        dash_spacing=8.0,
        landmark_density=0.07,
        ego_speed=(4.0, 8.0),
        speeds={"MVA": [9.0, 13.0], "MTU": [5.0, 10.0], "LC": [5.0, 10.0], "OVT_GAIN": [3.0, 6.0]},
        extra_vehicles=(0, 2),
    ),
    # cluttered roads: wide lanes, sparse markings, more traffic
    "indian": WorldConfig(
        distribution_id="indian",
        lane_count=2,
        lane_width=3.8,
        dash_spacing=11.0,
        landmark_density=0.05,
        ego_speed=(3.0, 7.0),
        speeds={"MVA": [8.0, 12.0], "MTU": [4.0, 9.0], "LC": [4.0, 9.0], "OVT_GAIN": [3.0, 6.0]},
        extra_vehicles=(1, 3),
        noise_sigma=0.2,
    ),
}


def preset(name: str) -> WorldConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown distribution preset {name!r}; choose from {', '.join(PRESETS)}") from None
