"""File formats: trajectories, camera rigs, frame containers and pack shards.

Trajectory JSON::

    {"orientation_format": "euler_xyz" | "matrix" | "axis_angle",
     "steps": [{"t": 0, "position": [x, y, z], "orientation": [...], "gripper": g}, ...]}

``euler_xyz`` is ``(roll, pitch, yaw)`` radians with ``R = Rz(yaw) Ry(pitch) Rx(roll)``;
``matrix`` is 9 row-major floats; ``axis_angle`` is a rotation vector.

Rig JSON::

    {"views": [{"view_id", "width", "height", "fx", "fy", "cx", "cy",
                "frames": [{"time", "rotation": 9 row-major floats, "translation": [3]}]}]}

Rotation and translation map world points into the camera frame. An
optional ``"workspace": {"lo": [3], "hi": [3]}`` bounds end-effector
positions; decoders use it to place the depth search.

Frame directory: ``frames.json`` (written last) lists the files.

* ``png16``: ``view_<id>/frame_<t:05d>.png``, 16-bit RGB PNG with
  R/G/B = channels 0/1/2 and stored value ``round(x * 65535)``.
* ``raw_f32``: ``view_<id>.aif``: little-endian header ``b"AIF1"``, then
  uint32 ``width, height, channels, T``, then float32 samples in
  ``(T, H, W, C)`` C order.

Every file is written to a temporary name and renamed into place.
"""

import json
import math
import os
from pathlib import Path
import struct
import tempfile

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

from .encoder import Action7
from .errors import ValidationError
from .geometry import CameraTrack, CameraView, Rig, euler_to_matrix, matrix_to_euler

ORIENTATION_FORMATS = ("euler_xyz", "matrix", "axis_angle")
FRAME_FORMATS = ("png16", "raw_f32")
RAW_MAGIC = b"AIF1"
_RAW_HEADER = struct.Struct("<4sIIII")
PNG16_SCALE = 65535
_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def read_json(path, what="file"):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} not found", location=str(path))
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc.msg} (line {exc.lineno})", location=str(path)) from None


def _floats(value, n, where):
    try:
        a = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError("expected numbers", location=where) from None
    if a.shape != (n,):
        raise ValidationError(f"expected {n} numbers, got shape {a.shape}", location=where)
    if not np.all(np.isfinite(a)):
        raise ValidationError("values must be finite", location=where)
    return a


def orientation_to_matrix(values, fmt, where="orientation"):
    if fmt == "euler_xyz":
        return euler_to_matrix(_floats(values, 3, where))
    if fmt == "matrix":
        R = _floats(values, 9, where).reshape(3, 3)
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValidationError("matrix is not a rotation", location=where)
        return R
    if fmt == "axis_angle":
        return Rotation.from_rotvec(_floats(values, 3, where)).as_matrix()
    raise ValidationError(f"unknown orientation_format {fmt!r}; expected one of {ORIENTATION_FORMATS}")


def matrix_to_orientation(R, fmt):
    if fmt == "euler_xyz":
        return matrix_to_euler(R).tolist()
    if fmt == "matrix":
        return np.asarray(R).reshape(-1).tolist()
    if fmt == "axis_angle":
        return Rotation.from_matrix(R).as_rotvec().tolist()
    raise ValidationError(f"unknown orientation_format {fmt!r}")


def parse_trajectory(doc, source="trajectory"):
    if not isinstance(doc, dict) or "steps" not in doc:
        raise ValidationError("expected an object with 'steps'", location=source)
    fmt = doc.get("orientation_format", "euler_xyz")
    if fmt not in ORIENTATION_FORMATS:
        raise ValidationError(f"unknown orientation_format {fmt!r}; expected one of {ORIENTATION_FORMATS}",
                              location=source)
    steps = doc["steps"]
    if not isinstance(steps, list) or not steps:
        raise ValidationError("'steps' must be a non-empty list", location=source)
    rows = []
    for i, st in enumerate(steps):
        where = f"{source}: step {i}"
        if not isinstance(st, dict):
            raise ValidationError("step must be an object", location=where)
        for key in ("position", "orientation", "gripper"):
            if key not in st:
                raise ValidationError(f"missing {key!r}", location=where)
        t = st.get("t", i)
        if not isinstance(t, (int, float)) or not math.isfinite(t):
            raise ValidationError("t must be a finite number", location=where)
        p = _floats(st["position"], 3, where + " position")
        R = orientation_to_matrix(st["orientation"], fmt, where + " orientation")
        g = st["gripper"]
        if not isinstance(g, (int, float)) or not math.isfinite(g) or not 0.0 <= g <= 1.0:
            raise ValidationError(f"gripper must be in [0, 1], got {g!r}", location=where)
        rows.append((t, i, Action7(p, R, float(g))))
    ts = [r[0] for r in rows]
    if len(set(ts)) != len(ts):
        raise ValidationError("duplicate t values", location=source)
    rows.sort(key=lambda r: r[0])
    return [r[2] for r in rows]


def load_trajectory(path):
    """Actions from a trajectory file, ordered by ``t``."""
    return parse_trajectory(read_json(path, "trajectory file"), str(path))


def trajectory_doc(actions, orientation_format="euler_xyz"):
    return {
        "orientation_format": orientation_format,
        "steps": [
            {
                "t": t,
                "position": a.position.tolist(),
                "orientation": matrix_to_orientation(a.rotation, orientation_format),
                "gripper": a.gripper,
            }
            for t, a in enumerate(actions)
        ],
    }


def save_trajectory(path, actions, orientation_format="euler_xyz"):
    write_json(path, trajectory_doc(actions, orientation_format))


def parse_rig(doc, source="rig"):
    if not isinstance(doc, dict) or not isinstance(doc.get("views"), list) or not doc["views"]:
        raise ValidationError("expected an object with a non-empty 'views' list", location=source)
    tracks = []
    for vi, v in enumerate(doc["views"]):
        where = f"{source}: view {vi}"
        try:
            view_id = str(v.get("view_id", vi))
            intr = {k: float(v[k]) for k in ("fx", "fy", "cx", "cy")}
            width, height = int(v["width"]), int(v["height"])
            frames = v["frames"]
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"missing or invalid field: {exc}", location=where) from None
        if not isinstance(frames, list) or not frames:
            raise ValidationError("'frames' must be a non-empty list", location=where)
        frames = sorted(frames, key=lambda fr: fr.get("time", 0) if isinstance(fr, dict) else 0)
        cams = []
        for fi, fr in enumerate(frames):
            fwhere = f"{where} frame {fi}"
            if not isinstance(fr, dict):
                raise ValidationError("frame must be an object", location=fwhere)
            R = _floats(fr.get("rotation"), 9, fwhere + " rotation").reshape(3, 3)
            t = _floats(fr.get("translation"), 3, fwhere + " translation")
            try:
                cams.append(CameraView(intr["fx"], intr["fy"], intr["cx"], intr["cy"], R, t,
                                       width, height, view_id, fr.get("time")))
            except ValueError as exc:
                raise ValidationError(str(exc), location=fwhere) from None
        tracks.append(CameraTrack(view_id, cams))
    workspace = None
    if doc.get("workspace") is not None:
        ws = doc["workspace"]
        try:
            lo = _floats(ws["lo"], 3, f"{source}: workspace lo")
            hi = _floats(ws["hi"], 3, f"{source}: workspace hi")
        except (KeyError, TypeError):
            raise ValidationError("workspace needs 'lo' and 'hi'", location=source) from None
        if not np.all(hi > lo):
            raise ValidationError("workspace needs lo < hi", location=source)
        workspace = (tuple(lo.tolist()), tuple(hi.tolist()))
    return Rig(tracks, workspace)


def load_rig(path):
    return parse_rig(read_json(path, "rig file"), str(path))


def rig_doc(rig):
    views = []
    for tr in rig.tracks:
        c0 = tr.frames[0]
        views.append({
            "view_id": tr.view_id,
            "width": c0.width,
            "height": c0.height,
            "fx": c0.fx,
            "fy": c0.fy,
            "cx": c0.cx,
            "cy": c0.cy,
            "frames": [
                {
                    "time": c.time_index if c.time_index is not None else i,
                    "rotation": c.rotation.reshape(-1).tolist(),
                    "translation": c.translation.tolist(),
                }
                for i, c in enumerate(tr.frames)
            ],
        })
    doc = {"views": views}
    if rig.workspace is not None:
        doc["workspace"] = {"lo": list(rig.workspace[0]), "hi": list(rig.workspace[1])}
    return doc


def save_rig(path, rig):
    write_json(path, rig_doc(rig))


def _png16_bytes(frame):
    q = np.round(np.clip(frame, 0.0, 1.0).astype(np.float64) * PNG16_SCALE).astype(np.uint16)
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(q[..., ::-1]))  # OpenCV stores BGR
    if not ok:
        raise OSError("PNG encoding failed")
    return buf.tobytes()


def _read_png16(path):
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None or img.dtype != np.uint16 or img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("not a 16-bit RGB PNG", location=str(path))
    return (img[..., ::-1].astype(np.float64) / PNG16_SCALE).astype(np.float32)


def raw_bytes(video):
    video = np.asarray(video, dtype="<f4")
    T, H, W, C = video.shape
    return _RAW_HEADER.pack(RAW_MAGIC, W, H, C, T) + np.ascontiguousarray(video).tobytes()


def read_raw(path):
    data = Path(path).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise ValidationError("truncated frame container", location=str(path))
    magic, W, H, C, T = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise ValidationError(f"bad magic {magic!r}", location=str(path))
    expected = _RAW_HEADER.size + 4 * T * H * W * C
    if len(data) != expected:
        raise ValidationError(f"expected {expected} bytes, found {len(data)}", location=str(path))
    return np.frombuffer(data, dtype="<f4", offset=_RAW_HEADER.size).reshape(T, H, W, C).astype(np.float32)


def save_frames(videos, out_dir, fmt="png16", view_ids=None):
    """Write per-view ``(T, H, W, 3)`` videos; returns the manifest dict."""
    if fmt not in FRAME_FORMATS:
        raise ValidationError(f"unknown frame format {fmt!r}; expected one of {FRAME_FORMATS}")
    out_dir = Path(out_dir)
    view_ids = [str(i) for i in range(len(videos))] if view_ids is None else [str(v) for v in view_ids]
    views = []
    for vid, video in zip(view_ids, videos):
        T, H, W, _ = video.shape
        if fmt == "raw_f32":
            name = f"view_{vid}.aif"
            atomic_write_bytes(out_dir / name, raw_bytes(video))
            files = [name]
        else:
            files = []
            for t in range(T):
                name = f"view_{vid}/frame_{t:05d}.png"
                atomic_write_bytes(out_dir / name, _png16_bytes(video[t]))
                files.append(name)
        views.append({"view_id": vid, "T": T, "width": W, "height": H, "files": files})
    manifest = {"format": fmt, "views": views}
    write_json(out_dir / "frames.json", manifest)
    return manifest


def load_frames(frames_dir):
    """Read a frame directory; returns ``(videos, view_ids, fmt)``."""
    frames_dir = Path(frames_dir)
    manifest = read_json(frames_dir / "frames.json", "frame manifest")
    fmt = manifest.get("format")
    if fmt not in FRAME_FORMATS:
        raise ValidationError(f"unknown frame format {fmt!r}", location=str(frames_dir))
    videos, ids = [], []
    for v in manifest["views"]:
        paths = [frames_dir / f for f in v["files"]]
        for p in paths:
            if not p.exists():
                raise ValidationError("frame file missing", location=str(p))
        if fmt == "raw_f32":
            video = read_raw(paths[0])
        else:
            video = np.stack([_read_png16(p) for p in paths])
        videos.append(video)
        ids.append(str(v["view_id"]))
    return videos, ids, fmt


def level_tol_for(fmt):
    """Low-response slack the decoder needs for frames stored in ``fmt``."""
    return 0.5 / PNG16_SCALE if fmt == "png16" else 0.0
