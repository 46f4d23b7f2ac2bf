"""Turn 7-DoF end-effector actions into multi-view action images.

An action frame is a float32 array of shape ``(H, W, 3)``:

* channel 0: Gaussian heatmap of the position point,
* channel 1: Gaussian heatmap of the normal point,
* channel 2: Gaussian heatmap of the up point, with every low-response pixel
  (value not above ``threshold``) replaced by ``threshold * gripper``.

Heatmaps have unit peak, not unit mass.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import BehindCameraError, EncodeError, InvalidArgumentError
from .geometry import check_rotation, euler_to_matrix, project

POINT_NAMES = ("pos", "normal", "up")


@dataclass(frozen=True)
class Action7:
    """End-effector position (m), orientation and gripper openness in [0, 1]."""

    position: np.ndarray
    rotation: np.ndarray
    gripper: float

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise InvalidArgumentError("position must be 3 finite values")
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape == (3,):
            rot = euler_to_matrix(rot)
        rot = check_rotation(rot, tol=1e-6)
        g = float(self.gripper)
        if not (0.0 <= g <= 1.0):
            raise InvalidArgumentError(f"gripper must be in [0, 1], got {g}")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "gripper", g)

    @classmethod
    def from_euler(cls, position, angles, gripper):
        return cls(position, euler_to_matrix(angles), gripper)


class SemanticPoints(NamedTuple):
    pos: np.ndarray
    normal: np.ndarray
    up: np.ndarray


@dataclass(frozen=True)
class EncoderParams:
    ell: float = 0.1
    sigma_rel: float = 0.05
    threshold: float = 0.25

    def __post_init__(self):
        if not self.ell > 0:
            raise InvalidArgumentError("ell must be positive")
        if not 0 < self.sigma_rel < 1:
            raise InvalidArgumentError("sigma_rel must be in (0, 1)")
        if not 0 < self.threshold < 1:
            raise InvalidArgumentError("threshold must be in (0, 1)")

    def sigma_px(self, width, height):
        return self.sigma_rel * min(width, height)


def semantic_points(action, ell=0.1):
    """Position, normal (``-z`` axis) and up (``+x`` axis) points at distance ``ell``."""
    p = action.position
    R = action.rotation
    return SemanticPoints(pos=p.copy(), normal=p - ell * R[:, 2], up=p + ell * R[:, 0])


def render_gaussian(u, sigma_px, width, height):
    """Unit-peak isotropic Gaussian centered at continuous pixel ``u``; ``(H, W)`` float32."""
    if not sigma_px > 0:
        raise InvalidArgumentError("sigma_px must be positive")
    return kernels.gaussian_map(float(u[0]), float(u[1]), float(sigma_px), int(width), int(height))


def project_semantic_points(points, cam, view=None, t=None):
    out = []
    for name, x in zip(POINT_NAMES, points):
        try:
            out.append(project(cam, x))
        except BehindCameraError as exc:
            raise EncodeError(name, exc.depth, view=view, t=t) from None
    return out


def encode_frame(action, cam, params=EncoderParams(), *, view=None, t=None):
    pts = semantic_points(action, params.ell)
    u_pos, u_normal, u_up = project_semantic_points(pts, cam, view=view, t=t)
    W, H = cam.width, cam.height
    sigma = params.sigma_px(W, H)
    frame = np.empty((H, W, 3), dtype=np.float32)
    frame[..., 0] = kernels.gaussian_map(u_pos[0], u_pos[1], sigma, W, H)
    frame[..., 1] = kernels.gaussian_map(u_normal[0], u_normal[1], sigma, W, H)
    frame[..., 2] = kernels.gaussian_map_gripper(
        u_up[0], u_up[1], sigma, W, H, params.threshold, action.gripper
    )
    return frame


def encode_video(trajectory, rig, params=EncoderParams()):
    """One ``(T, H, W, 3)`` array per rig view."""
    videos = []
    for v, track in enumerate(rig.tracks):
        cam0 = track.at(0)
        video = np.empty((len(trajectory), cam0.height, cam0.width, 3), dtype=np.float32)
        for t, action in enumerate(trajectory):
            video[t] = encode_frame(action, track.at(t), params, view=track.view_id, t=t)
        videos.append(video)
    return videos

