"""Monocular image points to bird's-eye-view ground-plane coordinates.

Camera frame: x right, y down, z forward.  A level camera therefore has the
ground normal ``eta = (0, -1, 0)`` and the ground plane is ``eta . B = -h``,
i.e. ``B_y = h`` (the road is ``h`` metres below the optical centre).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEGENERACY_THRESHOLD = 1e-9


class HorizonError(ValueError):
    """Pixel ray (nearly) parallel to the ground plane."""


class BehindCameraError(ValueError):
    """Point does not lie in front of the camera."""


@dataclass(frozen=True)
class CameraModel:
    K: np.ndarray
    eta: np.ndarray
    h: float
    K_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64).reshape(3, 3)
        eta = np.array(self.eta, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(K)) < 1e-12:
            raise ValueError("K must be invertible")
        if abs(np.linalg.norm(eta) - 1.0) > 1e-9:
            raise ValueError("eta must be a unit vector")
        if not self.h > 0:
            raise ValueError("camera height h must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "K_inv", np.linalg.inv(K))

    @classmethod
    def pinhole(cls, focal: float, cx: float, cy: float, h: float, eta=(0.0, -1.0, 0.0)) -> "CameraModel":
        K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
        return cls(K=K, eta=np.asarray(eta, dtype=np.float64), h=h)

    def to_dict(self) -> dict:
        return {"K": [float(v) for v in self.K.reshape(-1)], "eta": [float(v) for v in self.eta], "h": self.h}

    @classmethod
    def from_dict(cls, blob: dict) -> "CameraModel":
        K = blob["K"]
        if len(K) != 9 or len(blob["eta"]) != 3:
            raise ValueError("camera JSON needs K with 9 floats and eta with 3")
        return cls(K=np.asarray(K, dtype=np.float64).reshape(3, 3), eta=np.asarray(blob["eta"]), h=blob["h"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CameraModel":
        return cls.from_dict(json.loads(text))


def image_point(x: float, y: float) -> np.ndarray:
    """Homogeneous pixel coordinate ``(x, y, 1)``."""
    return np.array([float(x), float(y), 1.0])


def birdseye_project(b, cam: CameraModel) -> np.ndarray:
    """Ground-plane point ``B = -h K^-1 b / (eta^T K^-1 b)`` for pixel ``b``.

    ``b`` may be a single homogeneous 3-vector or an ``(N, 3)`` array.  Raises
    :class:`HorizonError` when ``|eta^T K^-1 b| < 1e-9``.
    """
    b = np.asarray(b, dtype=np.float64)
    single = b.ndim == 1
    rays = np.atleast_2d(b) @ cam.K_inv.T
    denom = rays @ cam.eta
    if np.any(np.abs(denom) < DEGENERACY_THRESHOLD):
        raise HorizonError("pixel ray is parallel to the ground plane (horizon)")
    B = -cam.h * rays / denom[:, None]
    return B[0] if single else B


def project_to_image(B, cam: CameraModel) -> np.ndarray:
    """Perspective projection ``K B`` normalised to a homogeneous pixel."""
    B = np.asarray(B, dtype=np.float64)
    single = B.ndim == 1
    pts = np.atleast_2d(B)
    if np.any(pts[:, 2] <= 0):
        raise BehindCameraError("point is behind the camera (z <= 0)")
    p = pts @ cam.K.T
    b = p / p[:, 2:3]
    b[:, 2] = 1.0
    return b[0] if single else b


def ground_point(lateral: float, forward: float, cam: CameraModel) -> np.ndarray:
    """3-D camera-frame point on the ground plane for a BEV ``(lateral, forward)``.

    Only defined for normals of the form ``(0, -1, 0)`` up to sign-preserving
    tilt around x; the height coordinate is solved from the plane equation.
    """
    ex, ey, ez = cam.eta
    if abs(ey) < 1e-12:
        raise ValueError("ground normal has no vertical component")
    y = (-cam.h - ex * lateral - ez * forward) / ey
    return np.array([lateral, y, forward])


def plane_residual(B, cam: CameraModel) -> np.ndarray:
    """``eta^T B + h``; zero for points on the ground plane."""
    return np.asarray(B) @ cam.eta + cam.h
