"""Compiled vs numpy kernels: per-kernel timings and one encode+decode step.

    python benchmarks/bench_kernels.py [--resolution 512] [--repeat 5] [--csv out.csv]
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from action_images import kernels
from action_images.decoder import decode_frame
from action_images.encoder import Action7, encode_frame
from action_images.harness import default_decoder_params, default_rig


def kernel_cases(res, rng):
    sigma = 0.05 * res
    h = kernels.gaussian_map(res * 0.4, res * 0.6, sigma, res, res)
    xs = rng.uniform(0, res, 512)
    ys = rng.uniform(0, res, 512)
    return {
        "gaussian_map": lambda k: k.gaussian_map(res * 0.4, res * 0.6, sigma, res, res),
        "gaussian_map_gripper": lambda k: k.gaussian_map_gripper(res * 0.4, res * 0.6, sigma, res, res, 0.25, 0.5),
        "centroid": lambda k: k.centroid(h),
        "bilinear (512 pts)": lambda k: k.bilinear(h, xs, ys),
        "bicubic (512 pts)": lambda k: k.bicubic(h, xs, ys),
        "low_response": lambda k: k.low_response(h, 0.25),
        "zero_below": lambda k: k.zero_below(h, 0.25),
    }


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args(argv)

    backends = sorted(kernels.available_backends())
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy backend only", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in kernel_cases(args.resolution, rng).items():
        t = {b: best_of(lambda: fn(kernels.available_backends()[b]), args.repeat, 20) for b in backends}
        rows.append((name, t))

    rig = default_rig(args.resolution, 2)
    cams = rig.cameras_at(0)
    a = Action7([0.03, -0.02, 0.05], [0.3, -0.4, 1.2], 1.0)
    dec = default_decoder_params()
    step = {}
    for b in backends:
        with kernels.use_backend(b):
            step[b] = best_of(lambda: decode_frame([encode_frame(a, c) for c in cams], cams, dec), args.repeat, 3)
    rows.append(("encode+decode step (2 views)", step))

    header = ["kernel"] + [f"{b} [ms]" for b in backends] + (["speedup"] if len(backends) == 2 else [])
    table = []
    for name, t in rows:
        line = [name] + [f"{t[b] * 1e3:.3f}" for b in backends]
        if len(backends) == 2:
            line.append(f"{t['numpy'] / t['cython']:.1f}x")
        table.append(line)
    widths = [max(len(r[i]) for r in [header] + table) for i in range(len(header))]
    print(f"resolution {args.resolution}x{args.resolution}, best of {args.repeat}")
    for r in [header] + table:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            csv.writer(f).writerows([header] + table)


if __name__ == "__main__":
    main()
