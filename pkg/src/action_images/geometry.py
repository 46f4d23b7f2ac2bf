"""Rotations, pinhole cameras, rays and Plücker embeddings.

Conventions
-----------
* Euler angles ``(roll, pitch, yaw)`` compose as ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
* Cameras follow the OpenCV frame: x right, y down, z forward. ``rotation``
  and ``translation`` map world points into the camera frame.
* Pixel ``(i, j)`` (column, row) covers ``[i, i+1) x [j, j+1)`` in continuous
  image coordinates, so its center is ``(i + 0.5, j + 0.5)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import BehindCameraError, InvalidArgumentError

Z_MIN = 1e-6
ORTHO_TOL = 1e-9


def _finite_vector(x, n, name):
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (n,):
        raise InvalidArgumentError(f"{name} must have shape ({n},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(angles):
    """Rotation matrix for ``(roll, pitch, yaw)`` in radians."""
    roll, pitch, yaw = _finite_vector(angles, 3, "angles")
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def matrix_to_euler(R):
    """Inverse of :func:`euler_to_matrix`.

    Returns roll and yaw in ``(-pi, pi]`` and pitch in ``[-pi/2, pi/2]``. At
    gimbal lock (``cos(pitch) == 0``) roll is fixed to 0 and the remaining
    rotation about the shared axis is reported as yaw.
    """
    R = check_rotation(R)
    cp = math.hypot(R[0, 0], R[1, 0])
    pitch = math.atan2(-R[2, 0], cp)
    if cp > 1e-12:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
    else:
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
    return np.array([_wrap(roll), pitch, _wrap(yaw)])


def _wrap(a):
    # atan2 already lands in [-pi, pi]; fold -pi onto pi
    return math.pi if a <= -math.pi else a


def check_rotation(R, tol=ORTHO_TOL):
    """Validate ``R`` as a proper rotation and return it as a float array."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidArgumentError("rotation must be a finite 3x3 matrix")
    if np.abs(R @ R.T - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidArgumentError("rotation is not orthonormal with det +1")
    return R


def nearest_rotation(M):
    """Closest rotation to ``M`` in Frobenius norm (polar factor, det forced +1)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


def rotation_angle(Ra, Rb):
    """Geodesic angle in radians between two rotations."""
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera with world->camera extrinsics for one view (and frame)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    view_id: str = "0"
    time_index: int | None = None

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidArgumentError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidArgumentError("image size must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError("principal point must lie inside the image")
        R = check_rotation(self.rotation, tol=1e-6).copy()
        t = _finite_vector(self.translation, 3, "translation").copy()
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "view_id", str(self.view_id))

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def resized(self, width, height):
        """Same camera rendered at a different resolution (intrinsics scaled)."""
        sx, sy = width / self.width, height / self.height
        return CameraView(
            self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
            self.rotation, self.translation, width, height,
            self.view_id, self.time_index,
        )


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World->camera ``(R, t)`` for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-12:
        raise InvalidArgumentError("viewing direction is parallel to up")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ eye


def project_points(cam, X):
    """Project ``(N, 3)`` world points; returns ``(uv (N, 2), depth (N,))``.

    No behind-camera check; pixels for ``depth <= Z_MIN`` are NaN.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    Xc = X @ cam.rotation.T + cam.translation
    z = Xc[:, 2]
    ok = z > Z_MIN
    safe = np.where(ok, z, 1.0)
    uv = np.stack([cam.fx * Xc[:, 0] / safe + cam.cx, cam.fy * Xc[:, 1] / safe + cam.cy], axis=1)
    uv[~ok] = np.nan
    return uv, z


def project(cam, x):
    """Pixel coordinates of world point ``x``; raises :class:`BehindCameraError`."""
    x = _finite_vector(x, 3, "point")
    Xc = cam.rotation @ x + cam.translation
    if Xc[2] <= Z_MIN:
        raise BehindCameraError(Xc[2])
    return np.array([cam.fx * Xc[0] / Xc[2] + cam.cx, cam.fy * Xc[1] / Xc[2] + cam.cy])


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = _finite_vector(self.origin, 3, "origin")
        d = _finite_vector(self.direction, 3, "direction")
        n = np.linalg.norm(d)
        if n == 0:
            raise InvalidArgumentError("ray direction must be non-zero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)

    def at(self, s):
        return self.origin + np.multiply.outer(s, self.direction)


def _pixel_directions(cam, u, v):
    d = np.stack(
        [(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones(np.shape(u))], axis=-1
    )
    d = d @ cam.rotation  # row-vector form of R^T d
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def unproject_ray(cam, u):
    """Ray from the camera center through continuous pixel coordinate ``u``."""
    u = _finite_vector(u, 2, "pixel")
    d = _pixel_directions(cam, u[0], u[1])
    return Ray(cam.center, d)


def unproject(cam, u, depth):
    """World point at camera-frame depth ``depth`` behind pixel ``u``."""
    u = _finite_vector(u, 2, "pixel")
    xc = np.array([(u[0] - cam.cx) / cam.fx * depth, (u[1] - cam.cy) / cam.fy * depth, depth])
    return cam.rotation.T @ (xc - cam.translation)


def sample_ray(ray, near, far, k):
    """``k`` points at uniformly spaced distances from ``near`` to ``far``."""
    if not (0 < near < far) or not (math.isfinite(near) and math.isfinite(far)):
        raise InvalidArgumentError(f"need 0 < near < far, got near={near}, far={far}")
    if int(k) != k or k < 2:
        raise InvalidArgumentError(f"need an integer k >= 2, got {k}")
    return ray.at(ray_depths(near, far, int(k)))


def ray_depths(near, far, k):
    return np.linspace(near, far, k)


def plucker_map(cam):
    """Per-pixel ``(d, m)`` with ``m = center x d``; shape ``(H, W, 6)``."""
    u = np.arange(cam.width, dtype=np.float64) + 0.5
    v = np.arange(cam.height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    d = _pixel_directions(cam, uu, vv)
    m = np.cross(np.broadcast_to(cam.center, d.shape), d)
    return np.concatenate([d, m], axis=-1)


@dataclass
class CameraTrack:
    """One view's cameras over time; a single frame means a static camera."""

    view_id: str
    frames: list = field(default_factory=list)

    def at(self, t):
        if len(self.frames) == 1:
            return self.frames[0]
        if not 0 <= t < len(self.frames):
            raise InvalidArgumentError(f"view {self.view_id} has no camera for t={t}")
        return self.frames[t]


@dataclass
class Rig:
    """Camera tracks, one per view, plus an optional ``(lo, hi)`` box bounding
    end-effector positions."""

    tracks: list
    workspace: tuple | None = None

    def __len__(self):
        return len(self.tracks)

    @property
    def view_ids(self):
        return [tr.view_id for tr in self.tracks]

    def cameras_at(self, t):
        return [tr.at(t) for tr in self.tracks]

    def subset(self, views):
        return Rig([self.tracks[i] for i in views], self.workspace)

    def resized(self, width, height):
        return Rig(
            [CameraTrack(tr.view_id, [c.resized(width, height) for c in tr.frames]) for tr in self.tracks],
            self.workspace,
        )

    def transformed(self, R, t):
        """Rig seen from a world frame moved by ``x -> R x + t``."""
        R = np.asarray(R, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        tracks = []
        for tr in self.tracks:
            frames = []
            for c in tr.frames:
                Rn = c.rotation @ R.T
                frames.append(
                    CameraView(c.fx, c.fy, c.cx, c.cy, Rn, c.translation - Rn @ t,
                               c.width, c.height, c.view_id, c.time_index)
                )
            tracks.append(CameraTrack(tr.view_id, frames))
        # an axis-aligned box does not survive a rotation
        return Rig(tracks)
