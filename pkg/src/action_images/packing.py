"""Video/action token packing, training masks and the flow-matching target.

Tokens are abstract ``(..., c)`` payloads on a latent grid. For each view the
packed sequence is the video stream followed by the action stream; views are
concatenated in order. Flat position of token ``(stream, view, t, y, x)``::

    ((view * 2 + stream) * T + t) * h * w + y * w + x

with ``stream`` 0 = video, 1 = action.
"""

from dataclasses import dataclass
import enum
import struct

import numpy as np

from .errors import InvalidArgumentError, ShapeError, ValidationError

STREAMS = ("video", "action")


class Strategy(enum.IntEnum):
    JOINT_GEN = 0
    ACTION_COND_VIDEO = 1
    VIDEO_TO_ACTION = 2
    VIDEO_ONLY = 3


@dataclass(frozen=True)
class TokenLayout:
    views: int
    time: int
    height: int
    width: int
    channels: int = 1

    def __post_init__(self):
        for name in ("views", "time", "height", "width", "channels"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")

    @property
    def stream_shape(self):
        """Shape of one stream's tokens: ``(V, T, h, w, c)``."""
        return (self.views, self.time, self.height, self.width, self.channels)

    @property
    def grid_shape(self):
        """``(2, V, T, h, w)``: stream, view, time, row, column."""
        return (2, self.views, self.time, self.height, self.width)

    @property
    def n_tokens(self):
        return 2 * self.views * self.time * self.height * self.width

    @property
    def tokens_per_view(self):
        return 2 * self.time * self.height * self.width


def index_map(layout):
    """Flat packed position for every ``(stream, view, t, y, x)``."""
    s, v, t, y, x = np.indices(layout.grid_shape)
    T, h, w = layout.time, layout.height, layout.width
    return ((v * 2 + s) * T + t) * h * w + y * w + x


def pack_sequence(video_tokens, action_tokens, layout):
    """Interleave the two streams per view; returns ``(packed (N, c), index_map)``."""
    video_tokens = np.asarray(video_tokens)
    action_tokens = np.asarray(action_tokens)
    for name, a in (("video", video_tokens), ("action", action_tokens)):
        if a.shape != layout.stream_shape:
            raise ShapeError(f"{name} tokens have shape {a.shape}, layout expects {layout.stream_shape}")
    # (V, stream, T, h, w, c) flattens straight into packed order
    stacked = np.stack([video_tokens, action_tokens], axis=1)
    return stacked.reshape(layout.n_tokens, layout.channels), index_map(layout)


def unpack_sequence(packed, layout):
    """Inverse of :func:`pack_sequence`; returns ``(video_tokens, action_tokens)``."""
    packed = np.asarray(packed)
    if packed.shape != (layout.n_tokens, layout.channels):
        raise ShapeError(f"packed shape {packed.shape} != {(layout.n_tokens, layout.channels)}")
    V, T, h, w, c = layout.stream_shape
    g = packed.reshape(V, 2, T, h, w, c)
    return g[:, 0].copy(), g[:, 1].copy()


@dataclass(frozen=True)
class Mask:
    """Visible/predicted flag per token of the streams taking part.

    ``predicted`` has shape ``(V, len(streams), T, h, w)``. Streams left out
    (the action stream under :attr:`Strategy.VIDEO_ONLY`) carry no entries at
    all: they are neither conditioning nor supervised.
    """

    layout: TokenLayout
    strategy: Strategy
    streams: tuple
    predicted: np.ndarray

    @property
    def visible(self):
        return ~self.predicted

    def stream(self, name):
        return self.predicted[:, self.streams.index(name)]

    def loss_weights(self):
        """Per-token weights in packed order: 1 for predicted tokens, else 0."""
        L = self.layout
        full = np.zeros((L.views, 2, L.time, L.height, L.width), dtype=np.float32)
        for i, name in enumerate(self.streams):
            full[:, STREAMS.index(name)] = self.predicted[:, i]
        return full.reshape(-1)


def sample_mask(strategy, layout):
    """Mask for ``strategy``; the first video step of every view is always visible."""
    strategy = Strategy(strategy)
    V, T, h, w = layout.views, layout.time, layout.height, layout.width
    streams = ("video",) if strategy == Strategy.VIDEO_ONLY else STREAMS
    pred = np.ones((V, len(streams), T, h, w), dtype=bool)
    pred[:, 0, 0] = False
    if strategy == Strategy.ACTION_COND_VIDEO:
        pred[:, 1] = False
    elif strategy == Strategy.VIDEO_TO_ACTION:
        pred[:, 0] = False
    return Mask(layout, strategy, streams, pred)


@dataclass(frozen=True)
class StrategyMix:
    """Sampling weights in :class:`Strategy` order."""

    joint_gen: float = 0.85
    action_cond_video: float = 0.05
    video_to_action: float = 0.05
    video_only: float = 0.05

    def __post_init__(self):
        w = np.array(self.weights)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("strategy weights must be finite and >= 0")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgumentError(f"strategy weights must sum to 1, got {w.sum()}")

    @property
    def weights(self):
        return (self.joint_gen, self.action_cond_video, self.video_to_action, self.video_only)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, (list, tuple)):
            return cls(*obj)
        return cls(**obj)


def draw_strategy(mix, rng):
    """One strategy drawn from ``mix`` using the caller's ``numpy`` Generator."""
    return Strategy(int(rng.choice(len(Strategy), p=np.array(mix.weights))))


def flow_target(x, eps):
    """Velocity target ``eps - x``."""
    x = np.asarray(x)
    eps = np.asarray(eps)
    if x.shape != eps.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {eps.shape}")
    return eps - x


def masked_l2(v_pred, v_target, mask):
    """Mean squared velocity error over the predicted tokens only."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    v_target = np.asarray(v_target, dtype=np.float64)
    if v_pred.shape != v_target.shape:
        raise ShapeError(f"shape mismatch: {v_pred.shape} vs {v_target.shape}")
    wts = mask.loss_weights()
    if v_pred.shape[0] != wts.shape[0]:
        raise ShapeError("velocity arrays do not match the mask layout")
    n = wts.sum() * (v_pred[0].size if v_pred.ndim > 1 else 1)
    if n == 0:
        return 0.0
    sq = ((v_pred - v_target) ** 2).reshape(len(wts), -1).sum(axis=1)
    return float((wts * sq).sum() / n)


# Shard layout (little-endian):
#   header   magic "AIPK", u16 version, u16 reserved, u64 seed,
#            u32 views, time, height, width, channels, u32 n_records
#   index    u32[2*V*T*h*w], packed position per (stream, view, t, y, x)
#   records  u8 strategy, u8 n_streams, u16 reserved,
#            predicted bits over (V, n_streams, T, h, w), LSB-first, padded to a byte
SHARD_MAGIC = b"AIPK"
SHARD_VERSION = 1
_SHARD_HEADER = struct.Struct("<4sHHQIIIIII")
_RECORD_HEADER = struct.Struct("<BBH")


def shard_bytes(layout, seed, masks):
    out = [_SHARD_HEADER.pack(SHARD_MAGIC, SHARD_VERSION, 0, int(seed), layout.views, layout.time,
                              layout.height, layout.width, layout.channels, len(masks))]
    out.append(index_map(layout).astype("<u4").tobytes())
    for m in masks:
        out.append(_RECORD_HEADER.pack(int(m.strategy), len(m.streams), 0))
        out.append(np.packbits(m.predicted.reshape(-1), bitorder="little").tobytes())
    return b"".join(out)


def parse_shard(data):
    """Decode shard bytes into ``(layout, seed, index_map, masks)``."""
    if len(data) < _SHARD_HEADER.size:
        raise ValidationError("truncated shard header")
    magic, version, _, seed, V, T, h, w, c, n = _SHARD_HEADER.unpack_from(data)
    if magic != SHARD_MAGIC or version != SHARD_VERSION:
        raise ValidationError(f"not a version {SHARD_VERSION} shard")
    try:
        return _parse_body(data, int(seed), TokenLayout(V, T, h, w, c), n)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"truncated or corrupt shard: {exc}") from None


def _parse_body(data, seed, layout, n):
    V, T, h, w = layout.views, layout.time, layout.height, layout.width
    off = _SHARD_HEADER.size
    n_idx = layout.n_tokens
    imap = np.frombuffer(data, dtype="<u4", count=n_idx, offset=off).reshape(layout.grid_shape)
    off += 4 * n_idx
    masks = []
    for _ in range(n):
        strat, n_streams, _ = _RECORD_HEADER.unpack_from(data, off)
        off += _RECORD_HEADER.size
        count = V * n_streams * T * h * w
        nbytes = (count + 7) // 8
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off),
                             count=count, bitorder="little")
        off += nbytes
        streams = STREAMS[:n_streams]
        masks.append(Mask(layout, Strategy(strat), streams,
                          bits.astype(bool).reshape(V, n_streams, T, h, w)))
    if off != len(data):
        raise ValidationError(f"{len(data) - off} trailing bytes in shard")
    return layout, seed, imap.astype(np.int64), masks
