"""Recover 7-DoF actions from multi-view action frames.

Each semantic point is lifted independently: the centroid of its heatmap in
the main view defines a ray, candidates are sampled along it, and the
candidate whose projections land on the strongest response in the other
views wins. Gripper openness is read from the background of channel 2.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .encoder import POINT_NAMES, Action7
from .errors import (
    DecodeError,
    DegenerateFrameError,
    EmptyHeatmapError,
    InvalidArgumentError,
    NoBackgroundError,
    NoCorrespondenceError,
    PreconditionError,
    ShapeError,
)
from .geometry import nearest_rotation, project_points, ray_depths, rotation_angle, unproject_ray

DEFAULT_NEAR = 0.1
DEFAULT_FAR = 2.0
DEFAULT_K = 512
MAIN_VIEW_TOL = 0.02
# candidate scores this close to the best count as tied (interpolation round-off)
TIE_ATOL = 1e-12
SAMPLERS = ("bicubic", "bilinear")


@dataclass(frozen=True)
class DecoderParams:
    """Decoder settings.

    ``level_tol`` widens the low-response test to ``value <= threshold +
    level_tol``; set it to half a quantization step when frames went through
    integer storage. ``workspace`` is an optional ``(lo, hi)`` box used to
    tighten near/far per ray. ``gripper_views`` restricts which view indices
    feed the gripper estimate (``None`` = all).
    """

    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR
    k: int = DEFAULT_K
    threshold: float = 0.25
    ell: float = 0.1
    level_tol: float = 0.0
    gripper_views: tuple | None = None
    workspace: tuple | None = None
    sampler: str = "bicubic"
    main_tol: float = MAIN_VIEW_TOL

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise InvalidArgumentError(f"need 0 < near < far, got {self.near}, {self.far}")
        if int(self.k) != self.k or self.k < 2:
            raise InvalidArgumentError(f"k must be an integer >= 2, got {self.k}")
        if not 0 < self.threshold < 1:
            raise InvalidArgumentError("threshold must be in (0, 1)")
        if self.sampler not in SAMPLERS:
            raise InvalidArgumentError(f"sampler must be one of {sorted(SAMPLERS)}")
        if self.level_tol < 0:
            raise InvalidArgumentError("level_tol must be non-negative")

    @property
    def level(self):
        return self.threshold + self.level_tol


@dataclass
class LiftResult:
    point: np.ndarray
    residual: float
    depth_index: int
    main_view: int
    pixel: np.ndarray
    near: float
    far: float


@dataclass
class DecodedAction:
    action: Action7
    residual: dict = field(default_factory=dict)
    depth_index: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    lifts: dict = field(default_factory=dict)


def decode_gripper(channels, threshold=0.25, level_tol=0.0):
    """Openness from the low-response pixels of one or more channel-2 maps.

    Pixels with ``value <= threshold + level_tol`` form the background; the
    estimate is their mean divided by ``threshold``, clamped to ``[0, 1]``.
    """
    if isinstance(channels, np.ndarray) and channels.ndim == 2:
        channels = [channels]
    total, count = 0.0, 0
    for ch in channels:
        s, c = kernels.low_response(ch, threshold + level_tol)
        total += s
        count += c
    if count == 0:
        raise NoBackgroundError("no low-response pixels in channel 2")
    return min(1.0, max(0.0, total / count / threshold))


def heatmap_centroid(h):
    """Intensity-weighted mean of pixel centers, as ``(x, y)``."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise ShapeError(f"heatmap must be 2-D, got shape {h.shape}")
    x, y, total = kernels.centroid(h)
    if not total > 0:
        raise EmptyHeatmapError("heatmap has no mass")
    return np.array([x, y])


def up_heatmap(channel, threshold=0.25, level_tol=0.0):
    """Channel 2 with its gripper background cleared."""
    return kernels.zero_below(channel, threshold + level_tol)


def _depth_bounds(ray, params):
    if params.workspace is None:
        return params.near, params.far
    lo, hi = (np.asarray(b, dtype=np.float64) for b in params.workspace)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    s = (corners - ray.origin) @ ray.direction
    near, far = max(float(s.min()), 1e-3), float(s.max())
    if not far > near:
        return params.near, params.far
    return near, far


def lift_point(main, sides, params=DecoderParams(), *, point=None):
    """Lift one semantic point to 3D.

    ``main`` is ``(camera, heatmap)``; ``sides`` is one such pair or a list of
    them. Candidates are scored by the mean interpolated response
    (``params.sampler``) over the side views; a candidate behind a side camera
    or outside its image scores 0 in that view. Ties go to the smallest depth
    index.
    """
    if isinstance(sides, tuple):
        sides = [sides]
    if not sides:
        raise PreconditionError("lifting needs at least one side view")
    cam, h = main
    u = heatmap_centroid_or_raise(h, point)
    ray = unproject_ray(cam, u)
    near, far = _depth_bounds(ray, params)
    cands = ray.at(ray_depths(near, far, int(params.k)))
    score = np.zeros(len(cands))
    sample = getattr(kernels, params.sampler)
    for side_cam, side_h in sides:
        uv, _ = project_points(side_cam, cands)
        # NaN pixels (behind the camera) fail the samplers' in-image test
        score += sample(side_h, uv[:, 0], uv[:, 1])
    score /= len(sides)
    best = int(np.flatnonzero(score >= score.max() - TIE_ATOL)[0])
    if not score[best] > 0:
        raise NoCorrespondenceError("no candidate along the ray hits a side-view response", point=point)
    return LiftResult(cands[best], min(1.0, float(score[best])), best, -1, u, near, far)


def heatmap_centroid_or_raise(h, point):
    try:
        return heatmap_centroid(h)
    except EmptyHeatmapError:
        raise EmptyHeatmapError("main-view heatmap is empty", point=point) from None


def select_main_view(heatmaps, tol=MAIN_VIEW_TOL):
    """First view whose peak is within ``tol`` of the strongest peak."""
    peaks = np.array([float(np.max(h)) for h in heatmaps])
    return int(np.flatnonzero(peaks >= peaks.max() - tol)[0])


def lift_multiview(cams, heatmaps, params=DecoderParams(), *, point=None):
    """Lift using the strongest view (lowest index among near-ties) as main view."""
    main = select_main_view(heatmaps, params.main_tol)
    sides = [(c, h) for i, (c, h) in enumerate(zip(cams, heatmaps)) if i != main]
    res = lift_point((cams[main], heatmaps[main]), sides, params, point=point)
    res.main_view = main
    return res


def points_to_rotation(pos, normal, up, min_dist=0.0):
    """Rotation whose x axis points to ``up`` and whose z axis points away from ``normal``."""
    dx = np.asarray(up) - np.asarray(pos)
    dz = np.asarray(pos) - np.asarray(normal)
    nx, nz = np.linalg.norm(dx), np.linalg.norm(dz)
    if nx < min_dist or nz < min_dist or nx == 0 or nz == 0:
        raise DegenerateFrameError(
            f"semantic points collapsed (|up-pos|={nx:.3g}, |pos-normal|={nz:.3g})"
        )
    ex, ez = dx / nx, dz / nz
    ey = np.cross(ez, ex)
    if np.linalg.norm(ey) < 1e-6:
        raise DegenerateFrameError("up and normal directions are parallel")
    return nearest_rotation(np.column_stack([ex, ey, ez]))


def _check_frames(frames, cams):
    if len(frames) != len(cams):
        raise ShapeError(f"{len(frames)} frames but {len(cams)} cameras")
    if len(frames) < 2:
        raise PreconditionError("decoding needs at least two views")
    for f, c in zip(frames, cams):
        if f.shape != (c.height, c.width, 3):
            raise ShapeError(f"frame shape {f.shape} does not match camera {c.width}x{c.height}")


def decode_frame(frames, cams, params=DecoderParams(), *, t=None):
    """Decode one time step from per-view ``(H, W, 3)`` frames."""
    _check_frames(frames, cams)
    views = range(len(frames)) if params.gripper_views is None else params.gripper_views
    try:
        g = decode_gripper([frames[v][..., 2] for v in views], params.threshold, params.level_tol)
    except NoBackgroundError as exc:
        raise NoBackgroundError(str(exc), t=t) from None
    heat = {
        "pos": [f[..., 0] for f in frames],
        "normal": [f[..., 1] for f in frames],
        "up": [up_heatmap(f[..., 2], params.threshold, params.level_tol) for f in frames],
    }
    lifted = {}
    for name in POINT_NAMES:
        try:
            lifted[name] = lift_multiview(cams, heat[name], params, point=name)
        except DecodeError as exc:
            exc.t = t
            exc.partial = dict(lifted)
            raise
    pts = {n: r.point for n, r in lifted.items()}
    try:
        R = points_to_rotation(pts["pos"], pts["normal"], pts["up"], 0.1 * params.ell)
    except DegenerateFrameError as exc:
        err = DegenerateFrameError(str(exc), t=t)
        err.partial = dict(lifted)
        raise err from None
    return DecodedAction(
        Action7(pts["pos"], R, g),
        residual={n: r.residual for n, r in lifted.items()},
        depth_index={n: r.depth_index for n, r in lifted.items()},
        points=pts,
        lifts=lifted,
    )


def decode_video(videos, rig, params=DecoderParams(), *, fail_fast=True):
    """Decode every time step.

    With ``fail_fast=False`` failures are returned in place as the raised
    :class:`DecodeError` instances instead of propagating.
    """
    lengths = {len(v) for v in videos}
    if len(lengths) > 1:
        raise ShapeError(f"views have different lengths: {sorted(lengths)}")
    if len(videos) != len(rig):
        raise ShapeError(f"{len(videos)} videos but the rig has {len(rig)} views")
    T = lengths.pop() if lengths else 0
    out = []
    for t in range(T):
        try:
            out.append(decode_frame([v[t] for v in videos], rig.cameras_at(t), params, t=t))
        except DecodeError as exc:
            if fail_fast:
                raise
            out.append(exc)
    return out


def position_error(a, b):
    return float(np.linalg.norm(a.position - b.position))


def angular_error_deg(a, b):
    return math.degrees(rotation_angle(a.rotation, b.rotation))
