"""Body-fixed electro-optical camera: FOV, gating and azimuth/elevation bearings.

Frames are NED. The camera is pitched down from the body x-axis by the
boresight angle; UAV roll is not applied to the camera (small-roll model).
Targets sit on the sea surface (z = 0) and the UAV flies at z = -h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .catalog import CameraSpec
from .kinematics import UavState

__all__ = [
    "CameraMount",
    "Fov",
    "BearingMeasurement",
    "fov_from_resolution",
    "camera_frame",
    "bearing_angles",
    "jacobian_from_camera",
    "in_fov",
    "measure_bearing",
    "bearing_jacobian",
]

_FOV_CAP = math.nextafter(math.pi, 0.0)


@dataclass(frozen=True)
class CameraMount:
    boresight: float
    camera: CameraSpec
    ifov: float = 0.5e-3
    noise_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.boresight <= math.pi / 2 + 1e-12:
            raise ValueError("boresight must lie in [0, 90] degrees")
        if not self.ifov > 0 or not self.noise_scale > 0:
            raise ValueError("ifov and noise_scale must be > 0")

    @property
    def sigma(self) -> float:
        """Angular noise std, identical for azimuth and elevation."""
        return self.noise_scale * self.ifov

    @property
    def noise_cov(self) -> np.ndarray:
        return np.eye(2) * self.sigma**2

    @classmethod
    def from_settings(cls, boresight: float, camera: CameraSpec, settings) -> "CameraMount":
        return cls(boresight, camera, settings.ifov_mrad_per_px * 1e-3, settings.noise_pixels)


class Fov(NamedTuple):
    x: float
    y: float
    clamped: bool


@dataclass(frozen=True)
class BearingMeasurement:
    azimuth: float
    elevation: float
    valid: bool
    noise_std: tuple[float, float]

    @property
    def z(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation])


def fov_from_resolution(mount: CameraMount) -> Fov:
    fx = mount.ifov * mount.camera.res_x
    fy = mount.ifov * mount.camera.res_y
    clamped = fx >= math.pi or fy >= math.pi
    return Fov(min(fx, _FOV_CAP), min(fy, _FOV_CAP), clamped)


def camera_frame(dx, dy, h, heading, boresight):
    """Line of sight (target minus UAV, NED) expressed in the camera frame.

    Returns the forward, right and down components.
    """
    c, s = np.cos(heading), np.sin(heading)
    fwd = c * dx + s * dy
    right = -s * dx + c * dy
    cb, sb = np.cos(boresight), np.sin(boresight)
    cx = cb * fwd + sb * h
    cz = -sb * fwd + cb * h
    return cx, right, cz


def bearing_angles(uav_xy, h, heading, boresight, target_xy):
    """Noiseless (azimuth, elevation, forward component) for broadcastable inputs."""
    uav_xy = np.asarray(uav_xy, float)
    target_xy = np.asarray(target_xy, float)
    d = target_xy - uav_xy
    cx, cy, cz = camera_frame(d[..., 0], d[..., 1], h, heading, boresight)
    return np.arctan2(cy, cx), np.arctan2(-cz, cx), cx


def jacobian_from_camera(cx, cy, cz, heading, boresight) -> np.ndarray:
    """d(azimuth, elevation)/d(target x, y) given camera-frame LOS components."""
    c, s = np.cos(heading), np.sin(heading)
    cb, sb = np.cos(boresight), np.sin(boresight)
    # partials of (cx, cy, cz) w.r.t. target x and y
    dcx = np.stack([cb * c, cb * s], axis=-1)
    dcy = np.stack([-s, c], axis=-1) * np.ones_like(cx)[..., None]
    dcz = np.stack([-sb * c, -sb * s], axis=-1)
    cx_, cy_, cz_ = cx[..., None], cy[..., None], cz[..., None]
    d_az = (cx_ * dcy - cy_ * dcx) / (cx_**2 + cy_**2)
    d_el = (cz_ * dcx - cx_ * dcz) / (cx_**2 + cz_**2)
    return np.stack([d_az, d_el], axis=-2)


def in_fov(azimuth, elevation, forward, fov: Fov):
    return (forward > 0) & (np.abs(azimuth) <= fov.x / 2) & (np.abs(elevation) <= fov.y / 2)


def _target_xy(uav: UavState, target_pos) -> np.ndarray:
    t = np.asarray(target_pos, float)
    if t.shape[-1] == 3 and t[2] != 0.0:
        raise ValueError("targets must lie on the sea surface (z = 0)")
    xy = t[:2]
    if uav.altitude == 0 and np.allclose(xy, [uav.x, uav.y]):
        raise ValueError("zero range between UAV and target")
    return xy


def measure_bearing(uav: UavState, mount: CameraMount, target_pos, noise_draw=None) -> BearingMeasurement:
    """Gated bearing; the gate is decided on the noiseless angles."""
    xy = _target_xy(uav, target_pos)
    az, el, fwd = bearing_angles([uav.x, uav.y], uav.altitude, uav.heading, mount.boresight, xy)
    valid = bool(in_fov(az, el, fwd, fov_from_resolution(mount)))
    sigma = mount.sigma
    if noise_draw is not None:
        az = az + sigma * noise_draw[0]
        el = el + sigma * noise_draw[1]
    return BearingMeasurement(float(az), float(el), valid, (sigma, sigma))


def bearing_jacobian(uav: UavState, mount: CameraMount, target_pos) -> np.ndarray:
    xy = _target_xy(uav, target_pos)
    d = xy - np.array([uav.x, uav.y])
    cx, cy, cz = camera_frame(d[0], d[1], uav.altitude, uav.heading, mount.boresight)
    if cx**2 + cy**2 == 0 or cx**2 + cz**2 == 0:
        raise ValueError("singular bearing geometry")
    return jacobian_from_camera(np.asarray(cx), np.asarray(cy), np.asarray(cz), uav.heading, mount.boresight)
