"""Command-line entry point: ``action-images <subcommand> ...``.

Subcommands: ``encode``, ``decode``, ``eval``, ``sweep``, ``pack`` and
``sample``. Outputs default to ``$ACTION_IMAGES_OUT`` when ``--out`` is
omitted. Failures exit nonzero with a one-line message on stderr, or a JSON
object with ``--json-errors``.
"""

import argparse
from importlib import resources
import json
import os
from pathlib import Path
import sys

import numpy as np

from . import harness
from . import io as aio
from .decoder import DEFAULT_FAR, DEFAULT_K, DEFAULT_NEAR, SAMPLERS, DecoderParams, decode_video
from .encoder import EncoderParams, encode_frame
from .errors import ActionImagesError, DecodeError, ValidationError
from .packing import Strategy, StrategyMix, TokenLayout, draw_strategy, sample_mask, shard_bytes

OUT_ENV = "ACTION_IMAGES_OUT"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


class UsageError(ActionImagesError):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so usage errors go through the same reporting path."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out_path(args, default_name):
    if args.out:
        return Path(args.out)
    base = os.environ.get(OUT_ENV)
    if not base:
        raise UsageError(f"--out is required when ${OUT_ENV} is not set")
    return Path(base) / default_name


def _encoder_params(args):
    return EncoderParams(ell=args.ell, sigma_rel=args.sigma, threshold=args.threshold)


def _workspace(args, rig, ell):
    """Depth-search box: ``--workspace`` wins, then the rig's box; both grow by ``ell``."""
    if args.workspace is not None:
        w = args.workspace
        return harness.expand_box((w[:3], w[3:]), ell)
    if rig.workspace is not None and not args.no_rig_workspace:
        return harness.expand_box(rig.workspace, ell)
    return None


def _decoder_params(args, rig, level_tol=0.0):
    return DecoderParams(
        near=args.near,
        far=args.far,
        k=args.k,
        threshold=args.threshold,
        ell=args.ell,
        level_tol=level_tol,
        workspace=_workspace(args, rig, args.ell),
        sampler=args.sampler,
    )


# --- subcommands -----------------------------------------------------------


def cmd_encode(args):
    traj = aio.load_trajectory(args.traj)
    rig = aio.load_rig(args.rig)
    enc = _encoder_params(args)
    out = _out_path(args, "frames")
    videos = []
    for v, track in enumerate(rig.tracks):
        first = track.at(0)
        video = np.empty((len(traj), first.height, first.width, 3), dtype=np.float32)
        for t, a in enumerate(traj):
            video[t] = encode_frame(a, track.at(t), enc, view=track.view_id, t=t)
        videos.append(video)
    manifest = aio.save_frames(videos, out, args.format, rig.view_ids)
    if args.plots:
        from .plots import heatmap_strip

        heatmap_strip([vid[0] for vid in videos], out / "heatmaps_t0.png", "t = 0")
    return {"frames": str(out), "format": manifest["format"], "steps": len(traj), "views": rig.view_ids}


def cmd_decode(args):
    rig = aio.load_rig(args.rig)
    videos, ids, fmt = aio.load_frames(args.frames)
    by_id = dict(zip(ids, videos))
    missing = [v for v in rig.view_ids if v not in by_id]
    if missing:
        raise ValidationError(f"frames lack rig views {missing}", location=str(args.frames))
    videos = [by_id[v] for v in rig.view_ids]
    dec = _decoder_params(args, rig, aio.level_tol_for(fmt))
    out = _out_path(args, "decoded.json")
    results = decode_video(videos, rig, dec, fail_fast=not args.keep_going)

    ok = [(t, r) for t, r in enumerate(results) if not isinstance(r, DecodeError)]
    failed = [(t, r) for t, r in enumerate(results) if isinstance(r, DecodeError)]
    doc = aio.trajectory_doc([r.action for _, r in ok], args.orientation_format)
    for step, (t, _) in zip(doc["steps"], ok):
        step["t"] = t
    if failed:
        doc["failed_steps"] = [{"t": t, "error": f"{type(e).__name__}: {e}"} for t, e in failed]
    aio.write_json(out, doc)
    if args.confidence:
        conf = {
            "steps": [
                {
                    "t": t,
                    "residual": r.residual,
                    "depth_index": {name: lift.depth_index for name, lift in r.lifts.items()},
                    "main_view": {name: rig.view_ids[lift.main_view] for name, lift in r.lifts.items()},
                }
                for t, r in ok
            ],
            "failed_steps": doc.get("failed_steps", []),
        }
        aio.write_json(args.confidence, conf)
    summary = {"trajectory": str(out), "decoded": len(ok), "failed": len(failed)}
    if failed:
        summary["exit"] = EXIT_PARTIAL
    return summary


def _noise_from_args(args, traj, rig, enc):
    occlusion = []
    for view in args.occlude_view or []:
        if not 0 <= view < len(rig):
            raise UsageError(f"--occlude-view {view} is outside the rig's {len(rig)} views")
        occlusion += harness.blob_occlusions(traj, rig, view, enc)
    return harness.NoiseSpec(
        gaussian_sigma=args.noise_sigma,
        quantize_bits=args.quantize_bits,
        occlusion=occlusion,
        dropout=args.dropout,
    )


def cmd_eval(args):
    traj = aio.load_trajectory(args.traj)
    rig = aio.load_rig(args.rig)
    enc = _encoder_params(args)
    dec = _decoder_params(args, rig)
    noise = _noise_from_args(args, traj, rig, enc)
    report = harness.roundtrip_eval(traj, rig, enc, dec, noise, seed=args.seed)
    out = _out_path(args, "eval")
    doc = report.to_dict()
    doc["config"]["seed"] = args.seed
    aio.write_json(out.with_suffix(".json"), doc)
    aio.atomic_write_text(out.with_suffix(".csv"), report.to_csv())
    if args.plots:
        from .plots import heatmap_strip

        cams = rig.cameras_at(0)
        frames = [encode_frame(traj[0], c, enc) for c in cams]
        frames = harness.perturb_step(frames, noise, args.seed, 0)
        heatmap_strip(frames, out.with_name(out.name + "_heatmaps.png"), "t = 0")
    agg = report.aggregates()
    return {
        "report": str(out.with_suffix(".json")),
        "median_pos_err_m": agg["pos_err_m"]["median"],
        "median_ang_err_deg": agg["ang_err_deg"]["median"],
        "failed": agg["n_failed"],
    }


SWEEP_DEFAULTS = {
    "resolutions": [128, 256, 512],
    "ks": [64, 256, 1024],
    "n_actions": 200,
    "style": "random",
    "n_views": 2,
    "workspace": [list(b) for b in harness.DEFAULT_WORKSPACE],
    "sampler": "bicubic",
    "near": DEFAULT_NEAR,
    "far": DEFAULT_FAR,
    "ell": 0.1,
    "sigma": 0.05,
    "threshold": 0.25,
    "noise": {},
    "out": None,
}


def cmd_sweep(args):
    """Run a resolution x k sweep described by a JSON config.

    Config keys (all optional): ``resolutions``, ``ks``, ``trajectory`` (path;
    otherwise ``n_actions`` synthetic steps of ``style``), ``rig`` (path;
    otherwise the default rig with ``n_views`` views), ``workspace`` as
    ``[lo, hi]`` or null, ``sampler``, ``near``, ``far``, ``ell``, ``sigma``,
    ``threshold``, ``noise`` (NoiseSpec fields) and ``out`` (path prefix).
    """
    cfg_path = Path(args.config)
    raw = aio.read_json(cfg_path, "sweep config")
    if not isinstance(raw, dict):
        raise ValidationError("sweep config must be an object", location=str(cfg_path))
    unknown = sorted(set(raw) - set(SWEEP_DEFAULTS) - {"trajectory", "rig", "seed"})
    if unknown:
        raise ValidationError(f"unknown keys {unknown}", location=str(cfg_path))
    cfg = {**SWEEP_DEFAULTS, **raw}
    seed = int(cfg.get("seed", args.seed))
    base = cfg_path.parent

    enc = EncoderParams(ell=cfg["ell"], sigma_rel=cfg["sigma"], threshold=cfg["threshold"])
    ws = cfg["workspace"]
    box = harness.DEFAULT_WORKSPACE if ws is None else (tuple(ws[0]), tuple(ws[1]))
    if cfg.get("rig"):
        rig = aio.load_rig(base / cfg["rig"])
    else:
        rig = harness.default_rig(max(cfg["resolutions"]), cfg["n_views"], workspace=box)
    if cfg.get("trajectory"):
        traj = aio.load_trajectory(base / cfg["trajectory"])
    else:
        traj = harness.gen_trajectory(seed, int(cfg["n_actions"]), box, cfg["style"])
    dec = DecoderParams(
        near=cfg["near"], far=cfg["far"], threshold=enc.threshold, ell=enc.ell, sampler=cfg["sampler"],
        workspace=None if ws is None else harness.expand_box(box, enc.ell),
    )
    try:
        noise = harness.NoiseSpec(**cfg["noise"])
    except TypeError as exc:
        raise ValidationError(f"bad noise spec: {exc}", location=str(cfg_path)) from None

    sweep = harness.discretization_sweep(traj, rig, cfg["resolutions"], cfg["ks"], enc, dec, noise, seed)
    out = Path(args.out) if args.out else (base / cfg["out"] if cfg["out"] else _out_path(args, "sweep"))
    doc = sweep.to_dict()
    doc["seed"] = seed
    aio.write_json(out.with_suffix(".json"), doc)
    aio.atomic_write_text(out.with_suffix(".csv"), sweep.to_csv())
    if args.plots:
        from .plots import sweep_plot

        sweep_plot(sweep, out.with_suffix(".png"))
    return {"report": str(out.with_suffix(".json")), "monotone_fraction": sweep.monotone_fraction()}


def cmd_pack(args):
    """Write a shard of seeded training masks.

    Manifest keys: ``trajectory`` and ``rig`` (paths; they fix the view count
    and, unless ``latent.time`` is given, the time length), ``output``,
    ``strategy_mix`` (object or 4-list), ``seed``, ``num_samples`` and
    ``latent`` = ``{time, height, width, channels}``.
    """
    man_path = Path(args.manifest)
    man = aio.read_json(man_path, "pack manifest")
    if not isinstance(man, dict):
        raise ValidationError("manifest must be an object", location=str(man_path))
    base = man_path.parent
    for key in ("trajectory", "rig"):
        if key not in man:
            raise ValidationError(f"missing {key!r}", location=str(man_path))
    traj = aio.load_trajectory(base / man["trajectory"])
    rig = aio.load_rig(base / man["rig"])
    lat = man.get("latent", {})
    try:
        layout = TokenLayout(
            views=len(rig),
            time=int(lat.get("time", len(traj))),
            height=int(lat.get("height", 1)),
            width=int(lat.get("width", 1)),
            channels=int(lat.get("channels", 1)),
        )
        mix = StrategyMix.from_json(man.get("strategy_mix", {}))
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), location=str(man_path)) from None
    seed = int(man.get("seed", args.seed))
    n = int(man.get("num_samples", 1))
    if n < 1:
        raise ValidationError("num_samples must be >= 1", location=str(man_path))
    rng = np.random.default_rng(seed)
    masks = [sample_mask(draw_strategy(mix, rng), layout) for _ in range(n)]
    if args.out:
        out = Path(args.out)
    elif "output" in man:
        out = base / man["output"]
    else:
        out = _out_path(args, "masks.aipk")
    aio.atomic_write_bytes(out, shard_bytes(layout, seed, masks))
    counts = {s.name.lower(): 0 for s in Strategy}
    for m in masks:
        counts[m.strategy.name.lower()] += 1
    return {"shard": str(out), "records": n, "strategies": counts}


SAMPLE_FILES = ("sample_trajectory.json", "sample_rig.json")


def cmd_sample(args):
    out = _out_path(args, "sample")
    data = resources.files("action_images") / "data"
    for name in SAMPLE_FILES:
        aio.atomic_write_bytes(out / name, (data / name).read_bytes())
    return {"dir": str(out), "files": list(SAMPLE_FILES)}


# --- parser ----------------------------------------------------------------


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="seed for every stochastic step")
    p.add_argument("--json-errors", action="store_true", help="report failures as a JSON object on stderr")
    return p


def _add_encoder_flags(p):
    p.add_argument("--sigma", type=float, default=0.05, help="Gaussian std as a fraction of min(W, H)")
    p.add_argument("--ell", type=float, default=0.1, help="semantic point offset [m]")
    p.add_argument("--threshold", type=float, default=0.25, help="background level of channel 2")


def _add_decoder_flags(p):
    p.add_argument("--near", type=float, default=DEFAULT_NEAR, help="near ray depth [m] without a workspace")
    p.add_argument("--far", type=float, default=DEFAULT_FAR, help="far ray depth [m] without a workspace")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="depth candidates per ray")
    p.add_argument("--workspace", type=float, nargs=6, metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"),
                   default=None, help="position box; near/far come from it (grown by ell) per ray")
    p.add_argument("--no-rig-workspace", action="store_true",
                   help="ignore the rig file's workspace box and use --near/--far")
    p.add_argument("--sampler", choices=sorted(SAMPLERS), default="bicubic",
                   help="side-view heatmap interpolation")


def build_parser():
    common = _common()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="action-images", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", parents=[common], formatter_class=fmt,
                       help="render a trajectory into action-image frames")
    p.add_argument("--traj", required=True, help="trajectory JSON")
    p.add_argument("--rig", required=True, help="rig JSON")
    p.add_argument("--out", help=f"frame directory (falls back to ${OUT_ENV}/frames)")
    p.add_argument("--format", choices=aio.FRAME_FORMATS, default="png16", help="frame storage format")
    _add_encoder_flags(p)
    p.add_argument("--plots", action="store_true", help="also write a heatmap strip of step 0")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], formatter_class=fmt,
                       help="recover a trajectory from action-image frames")
    p.add_argument("--frames", required=True, help="frame directory written by encode")
    p.add_argument("--rig", required=True, help="rig JSON")
    p.add_argument("--out", help=f"trajectory JSON (falls back to ${OUT_ENV}/decoded.json)")
    _add_decoder_flags(p)
    p.add_argument("--threshold", type=float, default=0.25, help="background level of channel 2")
    p.add_argument("--ell", type=float, default=0.1, help="semantic point offset [m]")
    p.add_argument("--orientation-format", choices=aio.ORIENTATION_FORMATS, default="euler_xyz",
                   help="orientation encoding of the output")
    p.add_argument("--confidence", help="optional sidecar JSON with residuals and depth indices")
    p.add_argument("--keep-going", action="store_true",
                   help="write decodable steps and list failures instead of stopping (exit 3)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt,
                       help="encode/perturb/decode roundtrip error report")
    p.add_argument("--traj", required=True, help="trajectory JSON")
    p.add_argument("--rig", required=True, help="rig JSON")
    p.add_argument("--out", help=f"report path prefix; writes .json and .csv (falls back to ${OUT_ENV}/eval)")
    _add_encoder_flags(p)
    _add_decoder_flags(p)
    p.add_argument("--noise-sigma", type=float, default=0.0, help="additive Gaussian pixel noise std")
    p.add_argument("--quantize-bits", type=int, choices=(8, 16), default=None, help="integer storage depth")
    p.add_argument("--dropout", type=float, default=0.0, help="probability of blanking a view per step")
    p.add_argument("--occlude-view", type=int, action="append",
                   help="hide the semantic-point blob in this view index (repeatable)")
    p.add_argument("--plots", action="store_true", help="also write a heatmap strip of step 0")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt,
                       help="resolution x ray-sample error sweep", description=cmd_sweep.__doc__)
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", help="report path prefix (overrides the config's 'out')")
    p.add_argument("--plots", action="store_true", help="also write an error-vs-k plot")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pack", parents=[common], formatter_class=fmt,
                       help="write a shard of training masks", description=cmd_pack.__doc__)
    p.add_argument("--manifest", required=True, help="pack manifest JSON")
    p.add_argument("--out", help="shard path (overrides the manifest's 'output')")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("sample", parents=[common], formatter_class=fmt,
                       help="copy the shipped 41-step, 2-view sample trajectory and rig")
    p.add_argument("--out", help=f"directory (falls back to ${OUT_ENV}/sample)")
    p.set_defaults(func=cmd_sample)
    return parser


def _report_error(exc, json_errors, code):
    info = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    loc = getattr(exc, "location", None) or getattr(exc, "filename", None)
    if loc is not None:
        info["location"] = str(loc)
    for attr in ("point", "view", "t"):
        if getattr(exc, attr, None) is not None:
            info[attr] = getattr(exc, attr)
    if json_errors:
        print(json.dumps(info), file=sys.stderr)
    else:
        print(f"error: {info['message']}", file=sys.stderr)
        if isinstance(exc, UsageError):
            print("run with --help for the accepted flags", file=sys.stderr)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    json_errors = "--json-errors" in argv
    try:
        args = build_parser().parse_args(argv)
        summary = args.func(args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        _report_error(exc, json_errors, EXIT_USAGE)
        return EXIT_USAGE
    except (ActionImagesError, OSError) as exc:
        _report_error(exc, json_errors, EXIT_FAILURE)
        return EXIT_FAILURE
    code = summary.pop("exit", EXIT_OK)
    print(json.dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
