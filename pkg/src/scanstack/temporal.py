"""Frame FIFO and the three-channel temporal stack.

The main encoding copies the rasters at t-2, t-1 and t into channels 0, 1, 2
(red, green, blue) without any alignment. ``encode_aligned_fused`` is the
heavier five-frame variant kept for ablation runs.
"""
from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, Pose2D
from .raster import HIT, _round_half_away

STACK_DEPTH = 3
FUSED_DEPTH = 5


class NotReady(RuntimeError):
    """The buffer does not yet hold enough frames to stack."""


@dataclass(frozen=True)
class Frame:
    raster: np.ndarray
    pose: Pose2D
    index: int


class FrameBuffer:
    """FIFO of padded rasters, oldest first, holding at most ``capacity`` frames.

    Owned by a single producer; ``stack_rgb`` only reads it.
    """

    def __init__(self, capacity: int = STACK_DEPTH, cfg: EncodingConfig = DEFAULT_CONFIG):
        if capacity < 1:
            raise InvalidArgument("capacity must be >= 1")
        self.capacity = capacity
        self.cfg = cfg
        self._frames: deque[Frame] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._frames)

    def __iter__(self):
        return iter(self._frames)

    def __getitem__(self, i) -> Frame:
        return self._frames[i]

    @property
    def is_full(self) -> bool:
        return len(self._frames) == self.capacity

    @property
    def rasters(self) -> list[np.ndarray]:
        return [f.raster for f in self._frames]

    @property
    def poses(self) -> list[Pose2D]:
        return [f.pose for f in self._frames]

    def push(self, raster: np.ndarray, pose: Pose2D, index: int | None = None) -> "FrameBuffer":
        """Append the newest raster, evicting the oldest when full."""
        raster = np.asarray(raster)
        expected = (self.cfg.range_bins, self.cfg.width)
        if raster.shape != expected:
            raise InvalidArgument(f"expected a padded {expected} raster, got {raster.shape}")
        if index is None:
            index = self._frames[-1].index + 1 if self._frames else 0
        self._frames.append(Frame(raster, pose, index))
        return self

    def fill(self, raster: np.ndarray, pose: Pose2D, index: int = 0) -> "FrameBuffer":
        """Cold start: replace the contents with ``capacity`` copies of one frame."""
        self._frames.clear()
        for _ in range(self.capacity):
            self.push(raster, pose, index)
        return self

    def clear(self):
        self._frames.clear()


def stack_rgb(buf: FrameBuffer) -> np.ndarray:
    """``(64, 384, 3)`` tensor with channels ``[t-2, t-1, t]``."""
    if len(buf) != STACK_DEPTH:
        raise NotReady(f"need {STACK_DEPTH} frames to stack, buffer holds {len(buf)}")
    return np.stack(buf.rasters, axis=-1)


def stack_rasters(oldest: np.ndarray, middle: np.ndarray, newest: np.ndarray) -> np.ndarray:
    return np.stack([oldest, middle, newest], axis=-1)


def yaw_shift(raster: np.ndarray, dyaw: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Rotate the angle columns by ``round(dyaw)`` bins; padding stays put.

    A positive shift moves content toward higher columns, wrapping 359 -> 0.
    """
    raster = np.asarray(raster)
    if raster.shape != (cfg.range_bins, cfg.width):
        raise InvalidArgument(f"expected a padded raster, got {raster.shape}")
    k = _round_half_away(dyaw)
    out = raster.copy()
    out[:, : cfg.angle_bins] = np.roll(raster[:, : cfg.angle_bins], k, axis=1)
    return out


def _wrap180(a: float) -> float:
    a = math.fmod(a, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


def encode_aligned_fused(rasters, poses, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Five-frame yaw-aligned encoding: hit count, Sobel edges, local density.

    Every frame is column-shifted onto the newest frame's heading. Channel 0
    is ``count * 255 / 5``; channel 1 the Sobel gradient magnitude of channel
    0 (replicate borders) clipped to 255; channel 2 the 3x3 neighbourhood hit
    count of the newest frame scaled by ``255 / 9``.
    """
    rasters = list(rasters)
    poses = list(poses)
    if len(rasters) != FUSED_DEPTH or len(poses) != FUSED_DEPTH:
        raise InvalidArgument(f"need exactly {FUSED_DEPTH} rasters and poses")
    ref_yaw = poses[-1].yaw
    aligned = [
        yaw_shift(r, _wrap180(p.yaw - ref_yaw), cfg) for r, p in zip(rasters, poses)
    ]
    hits = np.stack([a > 0 for a in aligned])
    count = hits.sum(axis=0)

    ch0 = count * (HIT // FUSED_DEPTH)
    plane = ch0.astype(float)
    gx = ndimage.sobel(plane, axis=1, mode="nearest")
    gy = ndimage.sobel(plane, axis=0, mode="nearest")
    ch1 = np.clip(np.rint(np.hypot(gx, gy)), 0, 255)
    density = ndimage.correlate(hits[-1].astype(np.int64), np.ones((3, 3), dtype=np.int64), mode="constant")
    ch2 = np.clip(np.rint(density * (HIT / 9.0)), 0, 255)
    return np.stack([ch0, ch1, ch2], axis=-1).astype(np.uint8)


def save_tensor_png(tensor: np.ndarray, path) -> Path:
    """24-bit RGB PNG: red = t-2, green = t-1, blue = t."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(tensor, dtype=np.uint8)).save(buf, format="PNG")
    return atomic_write(path, buf.getvalue())


def load_tensor_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"), dtype=np.uint8)


def tensor_to_bytes(tensor: np.ndarray) -> bytes:
    """Raw dump for backend adapters: uint8, row-major ``(row, col, channel)``."""
    return np.ascontiguousarray(tensor, dtype=np.uint8).tobytes(order="C")


def tensor_from_bytes(data: bytes, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    shape = (cfg.range_bins, cfg.width, STACK_DEPTH)
    if len(data) != math.prod(shape):
        raise InvalidArgument(f"expected {math.prod(shape)} bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(shape).copy()
