"""Synthetic trajectories, perturbations and encode/decode error evaluation."""

from dataclasses import asdict, dataclass, field, replace
import csv
import io
import math

import numpy as np
from scipy.interpolate import BSpline
from scipy.spatial.transform import Rotation, Slerp

from .decoder import DecoderParams, angular_error_deg, decode_frame, position_error
from .encoder import Action7, EncoderParams, encode_frame, semantic_points
from .errors import DecodeError, InvalidArgumentError, PreconditionError
from .geometry import CameraTrack, CameraView, Rig, look_at, project_points

DEFAULT_WORKSPACE = ((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))
DEFAULT_RESOLUTION = 512


def default_rig(resolution=DEFAULT_RESOLUTION, n_views=2, *, radius=1.0, elevation_deg=20.0,
                focal_rel=0.8, center=(0.0, 0.0, 0.0), azimuths_deg=None, workspace=DEFAULT_WORKSPACE):
    """Static cameras on a circle around ``center``, all looking at it.

    Two views sit at +/-30 degrees azimuth; more views are spread evenly over
    the same 60 degree arc. Focal length is ``focal_rel * resolution``.
    ``workspace`` is stored on the rig as given (relative to the origin).
    """
    if azimuths_deg is None:
        azimuths_deg = [-30.0, 30.0] if n_views == 2 else list(np.linspace(-30.0, 30.0, n_views))
    center = np.asarray(center, dtype=np.float64)
    el = math.radians(elevation_deg)
    f = focal_rel * resolution
    tracks = []
    for i, az in enumerate(azimuths_deg):
        a = math.radians(az)
        eye = center + radius * np.array([math.cos(el) * math.cos(a), math.cos(el) * math.sin(a), math.sin(el)])
        R, t = look_at(eye, center)
        cam = CameraView(f, f, resolution / 2, resolution / 2, R, t, resolution, resolution, str(i))
        tracks.append(CameraTrack(str(i), [cam]))
    return Rig(tracks, workspace)


def expand_box(box, margin):
    lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    return tuple((lo - margin).tolist()), tuple((hi + margin).tolist())


def default_decoder_params(workspace=DEFAULT_WORKSPACE, enc=EncoderParams(), **overrides):
    """Decoder settings whose depth search covers ``workspace`` grown by ``ell``."""
    kw = dict(threshold=enc.threshold, ell=enc.ell)
    if workspace is not None:
        kw["workspace"] = expand_box(workspace, enc.ell)
    kw.update(overrides)
    return DecoderParams(**kw)


def _check_box(box):
    lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    if lo.shape != (3,) or hi.shape != (3,) or not np.all(hi > lo):
        raise InvalidArgumentError("workspace box must satisfy lo < hi on every axis")
    return lo, hi


def gen_trajectory(seed, t_steps, box=DEFAULT_WORKSPACE, style="smooth"):
    """Deterministic synthetic trajectory inside ``box``.

    ``style="smooth"`` threads a clamped quadratic B-spline through random
    control points (so positions stay in the box), slerps between random key
    orientations and toggles a binary gripper at a few random steps.
    ``style="random"`` draws every step independently.
    """
    if t_steps < 1:
        raise InvalidArgumentError("t_steps must be >= 1")
    lo, hi = _check_box(box)
    rng = np.random.default_rng(seed)
    if style == "random" or t_steps == 1:
        pos = rng.uniform(lo, hi, size=(t_steps, 3))
        rots = Rotation.random(t_steps, random_state=rng).as_matrix()
        grip = rng.integers(0, 2, size=t_steps).astype(float)
        return [Action7(p, R, g) for p, R, g in zip(pos, rots, grip)]
    if style != "smooth":
        raise InvalidArgumentError(f"unknown trajectory style {style!r}")

    n_ctrl = int(min(t_steps, max(3, 2 + t_steps // 10)))
    ctrl = rng.uniform(lo, hi, size=(n_ctrl, 3))
    deg = min(2, n_ctrl - 1)
    knots = np.concatenate([np.zeros(deg), np.linspace(0.0, 1.0, n_ctrl - deg + 1), np.ones(deg)])
    s = np.linspace(0.0, 1.0, t_steps)
    pos = np.clip(BSpline(knots, ctrl, deg)(s), lo, hi)

    key_t = np.linspace(0.0, 1.0, n_ctrl)
    slerp = Slerp(key_t, Rotation.random(n_ctrl, random_state=rng))
    rots = slerp(s).as_matrix()

    grip = np.empty(t_steps)
    state = float(rng.integers(0, 2))
    toggles = set(rng.choice(np.arange(1, t_steps), size=min(2, t_steps - 1), replace=False).tolist())
    for t in range(t_steps):
        if t in toggles:
            state = 1.0 - state
        grip[t] = state
    return [Action7(p, R, g) for p, R, g in zip(pos, rots, grip)]


@dataclass
class NoiseSpec:
    """Storage and corruption applied to encoded frames before decoding.

    ``occlusion`` entries are ``(view, t, x0, y0, x1, y1)`` pixel rectangles;
    ``t=None`` applies to every step. Occluded pixels are zeroed in all
    channels. A dropped view is an all-zero frame.
    """

    gaussian_sigma: float = 0.0
    quantize_bits: int | None = None
    occlusion: list = field(default_factory=list)
    dropout: float = 0.0

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise InvalidArgumentError("gaussian_sigma must be >= 0")
        if self.quantize_bits not in (None, 8, 16):
            raise InvalidArgumentError("quantize_bits must be 8, 16 or None")
        if not 0 <= self.dropout <= 1:
            raise InvalidArgumentError("dropout must be in [0, 1]")

    @property
    def is_identity(self):
        return not (self.gaussian_sigma or self.quantize_bits or self.occlusion or self.dropout)

    @property
    def level_tol(self):
        return 0.0 if self.quantize_bits is None else 0.5 / (2**self.quantize_bits - 1)


def quantize(x, bits):
    levels = 2**bits - 1
    return (np.round(np.asarray(x, dtype=np.float64) * levels) / levels).astype(np.float32)


def perturb_step(frames, spec, seed, t):
    """Perturb the per-view frames of step ``t``; same result as :func:`perturb`."""
    if spec.is_identity:
        return [f.copy() for f in frames]
    rng = np.random.default_rng([seed, t])
    out = []
    for v, f in enumerate(frames):
        g = f.astype(np.float32, copy=True)
        if spec.gaussian_sigma:
            g += rng.normal(0.0, spec.gaussian_sigma, size=g.shape).astype(np.float32)
            np.clip(g, 0.0, 1.0, out=g)
        for view, tt, x0, y0, x1, y1 in spec.occlusion:
            if view == v and (tt is None or tt == t):
                g[max(0, int(y0)):max(0, int(y1)), max(0, int(x0)):max(0, int(x1))] = 0.0
        if spec.dropout and rng.random() < spec.dropout:
            g[:] = 0.0
        if spec.quantize_bits:
            g = quantize(g, spec.quantize_bits)
        out.append(g)
    return out


def perturb(videos, spec, seed=0):
    """Apply ``spec`` to per-view ``(T, H, W, 3)`` videos; deterministic per seed."""
    T = len(videos[0]) if videos else 0
    out = [np.empty_like(v, dtype=np.float32) for v in videos]
    for t in range(T):
        for v, f in enumerate(perturb_step([vid[t] for vid in videos], spec, seed, t)):
            out[v][t] = f
    return out


def blob_occlusions(trajectory, rig, view, enc=EncoderParams(), radius_sigmas=3.0):
    """Rectangles hiding every semantic point of each step in one view."""
    rects = []
    for t, a in enumerate(trajectory):
        cam = rig.tracks[view].at(t)
        r = radius_sigmas * enc.sigma_px(cam.width, cam.height)
        uv, _ = project_points(cam, np.stack(semantic_points(a, enc.ell)))
        x0, y0 = np.nanmin(uv, axis=0) - r
        x1, y1 = np.nanmax(uv, axis=0) + r
        rects.append((view, t, math.floor(x0), math.floor(y0), math.ceil(x1) + 1, math.ceil(y1) + 1))
    return rects


def _stats(values):
    a = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    if a.size == 0:
        return {"mean": None, "median": None, "p95": None, "max": None}
    return {
        "mean": float(a.mean()),
        "median": float(np.median(a)),
        "p95": float(np.percentile(a, 95)),
        "max": float(a.max()),
    }


@dataclass
class RoundtripReport:
    """Per-step errors of an encode/decode roundtrip plus aggregates.

    ``err_2d`` is the mean pixel distance between the projected true and
    decoded position points (per view and overall); ``err_3d`` is the mean
    position error in meters. Failed steps hold ``None`` and are listed in
    ``failures``. ``pos_lift_err`` also covers failed steps whose position
    point lifted before a later point failed.
    """

    config: dict
    pos_err: list
    ang_err_deg: list
    grip_err: list
    pix_err: list
    depth_floor: list
    failures: list
    pos_lift_err: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.pos_err)

    @property
    def n_ok(self):
        return self.n_steps - len(self.failures)

    def aggregates(self):
        per_view = []
        if self.pix_err:
            n_views = max(len(p) for p in self.pix_err if p is not None) if any(self.pix_err) else 0
            for v in range(n_views):
                per_view.append(_stats([p[v] for p in self.pix_err if p is not None]))
        ok_pix = [x for p in self.pix_err if p is not None for x in p]
        pos = _stats(self.pos_err)
        return {
            "n_steps": self.n_steps,
            "n_failed": len(self.failures),
            "pos_err_m": pos,
            "ang_err_deg": _stats(self.ang_err_deg),
            "grip_err": _stats(self.grip_err),
            "err_2d_px": _stats(ok_pix)["mean"],
            "err_2d_px_per_view": [s["mean"] for s in per_view],
            "err_3d_m": pos["mean"],
            "depth_floor_m": _stats(self.depth_floor)["median"],
            "pos_lift_err_m": _stats(self.pos_lift_err),
        }

    @property
    def median_pos_err(self):
        return self.aggregates()["pos_err_m"]["median"]

    @property
    def median_ang_err(self):
        return self.aggregates()["ang_err_deg"]["median"]

    def to_dict(self):
        return {
            "config": self.config,
            "aggregates": self.aggregates(),
            "steps": [
                {"t": t, "pos_err_m": p, "ang_err_deg": a, "grip_err": g, "pix_err": px}
                for t, (p, a, g, px) in enumerate(
                    zip(self.pos_err, self.ang_err_deg, self.grip_err, self.pix_err)
                )
            ],
            "failures": [{"t": t, "error": e} for t, e in self.failures],
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t", "pos_err_m", "ang_err_deg", "grip_err", "err_2d_px", "ok"])
        for t, (p, a, g, px) in enumerate(zip(self.pos_err, self.ang_err_deg, self.grip_err, self.pix_err)):
            ok = p is not None
            w.writerow([t, p, a, g, float(np.mean(px)) if ok else None, int(ok)])
        return buf.getvalue()


def _config_echo(rig, enc, dec, noise):
    cam = rig.tracks[0].at(0)
    return {
        "resolution": [cam.width, cam.height],
        "views": rig.view_ids,
        "k": int(dec.k),
        "near": dec.near,
        "far": dec.far,
        "workspace": None if dec.workspace is None else [list(b) for b in dec.workspace],
        "sampler": dec.sampler,
        "sigma_rel": enc.sigma_rel,
        "sigma_px": enc.sigma_px(cam.width, cam.height),
        "ell": enc.ell,
        "threshold": enc.threshold,
        "noise": asdict(noise),
    }


def roundtrip_eval(trajectory, rig, enc=EncoderParams(), dec=None, noise=None, seed=0):
    """Encode, optionally perturb, decode and score every step.

    Frames are produced and decoded one step at a time, so memory stays at
    one step's worth of images.
    """
    if len(rig) < 2:
        raise PreconditionError("evaluation needs a rig with at least two views")
    dec = default_decoder_params(enc=enc) if dec is None else dec
    noise = NoiseSpec() if noise is None else noise
    if noise.level_tol > dec.level_tol:
        dec = replace(dec, level_tol=noise.level_tol)

    pos_err, ang_err, grip_err, pix_err, floors, failures = [], [], [], [], [], []
    lift_err = []
    for t, a in enumerate(trajectory):
        cams = rig.cameras_at(t)
        frames = [encode_frame(a, c, enc, view=c.view_id, t=t) for c in cams]
        frames = perturb_step(frames, noise, seed, t)
        try:
            d = decode_frame(frames, cams, dec, t=t)
        except DecodeError as exc:
            failures.append((t, f"{type(exc).__name__}: {exc}"))
            for lst in (pos_err, ang_err, grip_err, pix_err):
                lst.append(None)
            lift = exc.partial.get("pos")
            lift_err.append(None if lift is None else float(np.linalg.norm(lift.point - a.position)))
            floors.append(None if lift is None else (lift.far - lift.near) / 2.0)
            continue
        pos_err.append(position_error(a, d.action))
        ang_err.append(angular_error_deg(a, d.action))
        grip_err.append(abs(a.gripper - d.action.gripper))
        px = []
        for c in cams:
            uv, _ = project_points(c, np.stack([a.position, d.action.position]))
            px.append(float(np.linalg.norm(uv[0] - uv[1])))
        pix_err.append(px)
        lift = d.lifts["pos"]
        floors.append((lift.far - lift.near) / 2.0)
        lift_err.append(pos_err[-1])
    return RoundtripReport(
        _config_echo(rig, enc, dec, noise), pos_err, ang_err, grip_err, pix_err, floors, failures, lift_err
    )


# medians closer than this are equal; differences at this scale are float round-off
MONOTONE_ATOL = 1e-9


@dataclass
class SweepResult:
    resolutions: list
    ks: list
    cells: dict

    def median_grid(self):
        return [[self.cells[r, k].median_pos_err for k in self.ks] for r in self.resolutions]

    def adjacent_pairs(self):
        """``((coarse cell, fine cell), non_increasing)`` along both axes."""
        out = []
        for i, r in enumerate(self.resolutions):
            for j, k in enumerate(self.ks):
                here = self.cells[r, k].median_pos_err
                for nxt in ((self.resolutions[i + 1], k) if i + 1 < len(self.resolutions) else None,
                            (r, self.ks[j + 1]) if j + 1 < len(self.ks) else None):
                    if nxt is None:
                        continue
                    there = self.cells[nxt].median_pos_err
                    ok = here is not None and there is not None and there <= here + MONOTONE_ATOL
                    out.append((((r, k), nxt), ok))
        return out

    def monotone_fraction(self):
        pairs = self.adjacent_pairs()
        return sum(ok for _, ok in pairs) / len(pairs) if pairs else 1.0

    def to_dict(self):
        return {
            "resolutions": self.resolutions,
            "ks": self.ks,
            "median_pos_err_m": self.median_grid(),
            "monotone_fraction": self.monotone_fraction(),
            "cells": [
                {"resolution": r, "k": k, **self.cells[r, k].aggregates()}
                for r in self.resolutions
                for k in self.ks
            ],
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["resolution", "k", "n_ok", "n_failed", "median_pos_err_m", "mean_pos_err_m",
                    "p95_pos_err_m", "median_ang_err_deg", "err_2d_px", "depth_floor_m"])
        for r in self.resolutions:
            for k in self.ks:
                agg = self.cells[r, k].aggregates()
                w.writerow([r, k, agg["n_steps"] - agg["n_failed"], agg["n_failed"],
                            agg["pos_err_m"]["median"], agg["pos_err_m"]["mean"], agg["pos_err_m"]["p95"],
                            agg["ang_err_deg"]["median"], agg["err_2d_px"], agg["depth_floor_m"]])
        return buf.getvalue()


def discretization_sweep(trajectory, rig, resolutions, ks, enc=EncoderParams(), dec=None, noise=None, seed=0):
    """Roundtrip reports over a resolution x ray-sample grid.

    ``rig`` is rescaled to each resolution (intrinsics scale with the image,
    extrinsics are kept); the reference width is mapped to each entry of
    ``resolutions`` and the height follows the rig's aspect ratio.
    """
    resolutions, ks = list(resolutions), list(ks)
    if not resolutions or not ks:
        raise InvalidArgumentError("resolutions and ks must be non-empty")
    if resolutions != sorted(resolutions) or ks != sorted(ks):
        raise InvalidArgumentError("resolutions and ks must be ascending")
    dec = default_decoder_params(enc=enc) if dec is None else dec
    cam0 = rig.tracks[0].at(0)
    cells = {}
    for r in resolutions:
        h = int(round(r * cam0.height / cam0.width))
        scaled = rig.resized(r, h)
        for k in ks:
            cells[r, k] = roundtrip_eval(trajectory, scaled, enc, replace(dec, k=k), noise, seed)
    return SweepResult(resolutions, ks, cells)
