"""Pure numpy implementations of the per-pixel kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors every function
here with the same signature. Pixel ``(i, j)`` is column ``i``, row ``j`` and
its center sits at continuous coordinate ``(i + 0.5, j + 0.5)``.
"""

import numpy as np


def _axis_profile(n, center, sigma):
    d = np.arange(n, dtype=np.float64) + 0.5 - center
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def gaussian_map(ux, uy, sigma, width, height):
    gx = _axis_profile(width, ux, sigma)
    gy = _axis_profile(height, uy, sigma)
    return (gy[:, None] * gx[None, :]).astype(np.float32)


def gaussian_map_gripper(ux, uy, sigma, width, height, threshold, gripper):
    out = gaussian_map(ux, uy, sigma, width, height)
    # compare on the stored float32 values so encode and decode see one partition
    out[~(out > threshold)] = np.float32(threshold * gripper)
    return out


def centroid(h):
    h = np.asarray(h)
    cols = h.sum(axis=0, dtype=np.float64)
    rows = h.sum(axis=1, dtype=np.float64)
    total = float(cols.sum())
    if total <= 0.0:
        return 0.0, 0.0, total
    sx = float(cols @ (np.arange(h.shape[1], dtype=np.float64) + 0.5))
    sy = float(rows @ (np.arange(h.shape[0], dtype=np.float64) + 0.5))
    return sx / total, sy / total, total


def bilinear(h, xs, ys):
    h = np.asarray(h)
    height, width = h.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = np.zeros(xs.shape, dtype=np.float64)
    valid = (xs >= 0.0) & (xs <= width) & (ys >= 0.0) & (ys <= height)
    if not valid.any():
        return out
    x = np.clip(xs[valid] - 0.5, 0.0, width - 1.0)
    y = np.clip(ys[valid] - 0.5, 0.0, height - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(width - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = x - x0
    fy = y - y0
    hh = h.astype(np.float64, copy=False)
    top = hh[y0, x0] * (1.0 - fx) + hh[y0, x1] * fx
    bot = hh[y1, x0] * (1.0 - fx) + hh[y1, x1] * fx
    out[valid] = top * (1.0 - fy) + bot * fy
    return out


def low_response(h, level):
    h = np.asarray(h)
    sel = h <= level
    return float(h[sel].sum(dtype=np.float64)), int(np.count_nonzero(sel))


def zero_below(h, level):
    out = np.array(h, dtype=np.float32, copy=True)
    out[out <= level] = 0.0
    return out


def _keys_weights(t):
    # Keys cubic convolution, a = -0.5; reproduces quadratics exactly
    t2 = t * t
    t3 = t2 * t
    return (
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    )


def bicubic(h, xs, ys):
    h = np.asarray(h)
    height, width = h.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    out = np.zeros(xs.shape, dtype=np.float64)
    valid = (xs >= 0.0) & (xs <= width) & (ys >= 0.0) & (ys <= height)
    if not valid.any():
        return out
    x = np.clip(xs[valid] - 0.5, 0.0, width - 1.0)
    y = np.clip(ys[valid] - 0.5, 0.0, height - 1.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    wx = _keys_weights(x - x0)
    wy = _keys_weights(y - y0)
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    hh = h.astype(np.float64, copy=False)
    acc = np.zeros(x.shape, dtype=np.float64)
    for a in range(4):
        yi = np.clip(y0 + a - 1, 0, height - 1)
        row = np.zeros(x.shape, dtype=np.float64)
        for b in range(4):
            xi = np.clip(x0 + b - 1, 0, width - 1)
            row += wx[b] * hh[yi, xi]
        acc += wy[a] * row
    out[valid] = acc
    return out
