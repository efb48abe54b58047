from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .._seeding import rng_for
from ..geometry import CameraModel, ground_point, project_to_image
from ..scene_graph import NodeType, SceneSequence
from .scenario import Scenario

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-6


def to_camera_frame(world: np.ndarray, ego: np.ndarray) -> np.ndarray:
    """Express ``(T, n, 2)`` world ``(x, z)`` points in each frame's ego frame.

    ``ego`` rows are ``(x, z, heading)``; heading is measured from +z towards +x.
    """
    d = world - ego[:, None, :2]
    heading = ego[:, 2][:, None]
    c, s = np.cos(heading), np.sin(heading)
    lateral = d[..., 0] * c - d[..., 1] * s
    forward = d[..., 0] * s + d[..., 1] * c
    return np.stack([lateral, forward], axis=-1)


def camera_positions(scenario: Scenario) -> np.ndarray:
    """Noise-free BEV positions in the ego/camera frame, ``(T, n, 2)``."""
    return to_camera_frame(scenario.world_positions(), scenario.ego)


def simulate(scenario: Scenario, noise_sigma: float | None = None) -> SceneSequence:
    sigma = scenario.config.noise_sigma if noise_sigma is None else noise_sigma
    pos = camera_positions(scenario)
    if sigma > 0:
        pos = pos + rng_for(scenario.seed, "noise").normal(0.0, sigma, size=pos.shape)
    n_veh = len(scenario.vehicles)
    types = np.array([NodeType.VEHICLE] * n_veh + [NodeType.LANDMARK] * scenario.landmarks.shape[0], dtype=np.int8)
    labels = {scenario.node_ids[k]: v.label for k, v in enumerate(scenario.vehicles)}
    return SceneSequence(scenario.node_ids, types, pos, labels)


@dataclass(frozen=True)
class ImageFrame:
    node_ids: tuple
    points: np.ndarray  # (m, 3) homogeneous pixels


def image_space_view(scenario: Scenario, positions: np.ndarray | None = None):
    """Project every frame's BEV reference points into the image.

    Returns ``(frames, camera)``.  Points at or behind the camera plane are
    dropped with a warning (no occlusion model).
    """
    cam: CameraModel = scenario.camera
    pos = camera_positions(scenario) if positions is None else np.asarray(positions)
    frames = []
    for t in range(pos.shape[0]):
        ids, pts = [], []
        for k, (lat, fwd) in enumerate(pos[t]):
            if fwd <= MIN_DEPTH:
                logger.warning("frame %d: node %d behind camera, dropped", t, scenario.node_ids[k])
                continue
            ids.append(scenario.node_ids[k])
            pts.append(project_to_image(ground_point(lat, fwd, cam), cam))
        frames.append(ImageFrame(tuple(ids), np.asarray(pts).reshape(-1, 3)))
    return frames, cam
