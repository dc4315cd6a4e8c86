"""Polar scan to binary range/angle raster.

Layout of a raster: ``uint8`` array of shape ``(64, W)``; row = range bin
(row 0 = closest, top of the PNG), column = angle bin (column = degrees).
``W`` is 360 before padding and 384 after; padding columns sit on the right.
"""
from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
from PIL import Image

from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, PolarScan

HIT = 255


def sanitize_range(rho: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> float:
    """Replace infinite or out-of-window returns with ``cfg.r_max``."""
    if cfg.sensor_min <= rho <= cfg.sensor_max:
        return float(rho)
    return cfg.r_max


def sanitize_ranges(rho: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    valid = (rho >= cfg.sensor_min) & (rho <= cfg.sensor_max)
    return np.where(valid, rho, cfg.r_max)


def _round_half_away(x: float) -> int:
    a = abs(x)
    f = math.floor(a)
    # a - floor(a) is exact in binary floating point
    r = f + 1 if a - f >= 0.5 else f
    return int(-r if x < 0 else r)


def angle_bin(theta: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> int:
    """Column of a bearing: nearest whole degree, wrapped into [0, 359]."""
    if not math.isfinite(theta):
        raise InvalidArgument(f"bearing must be finite, got {theta!r}")
    return _round_half_away(theta) % cfg.angle_bins


def angle_bins(theta: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized :func:`angle_bin`."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidArgument("bearings must be finite")
    a = np.abs(theta)
    f = np.floor(a)
    r = f + (a - f >= 0.5)
    r = np.where(theta < 0, -r, r)
    return np.mod(r, cfg.angle_bins).astype(np.int64)


def range_bin(rho: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> int:
    """Row of a sanitized range: ``floor(clip(rho * 63 / r_max, 0, 63))``."""
    if not math.isfinite(rho) or rho < 0:
        raise InvalidArgument(f"range must be finite and non-negative, got {rho!r}")
    top = cfg.range_bins - 1
    return int(math.floor(min(max(rho * top / cfg.r_max, 0.0), float(top))))


def range_bins(rho: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Vectorized :func:`range_bin`."""
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise InvalidArgument("ranges must be finite and non-negative")
    top = cfg.range_bins - 1
    return np.floor(np.clip(rho * top / cfg.r_max, 0.0, top)).astype(np.int64)


def scan_bins(scan: PolarScan, cfg: EncodingConfig = DEFAULT_CONFIG) -> tuple[np.ndarray, np.ndarray]:
    """``(rows, cols)`` hit by each return of ``scan``."""
    if len(scan) != cfg.angle_bins:
        raise InvalidArgument(f"scan must have {cfg.angle_bins} returns, got {len(scan)}")
    rows = range_bins(sanitize_ranges(scan.ranges, cfg), cfg)
    cols = angle_bins(scan.bearings, cfg)
    return rows, cols


def rasterize_scan(scan: PolarScan, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Binary ``(64, 360)`` raster of one scan."""
    rows, cols = scan_bins(scan, cfg)
    raster = np.zeros((cfg.range_bins, cfg.angle_bins), dtype=np.uint8)
    raster[rows, cols] = HIT
    return raster


def pad_raster(raster: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Append ``cfg.pad_cols`` zero columns on the right; no rescaling."""
    raster = np.asarray(raster)
    if raster.shape != (cfg.range_bins, cfg.angle_bins):
        raise InvalidArgument(f"expected a {cfg.range_bins}x{cfg.angle_bins} raster, got {raster.shape}")
    out = np.zeros((cfg.range_bins, cfg.width), dtype=np.uint8)
    out[:, : cfg.angle_bins] = raster
    return out


def encode_scan(scan: PolarScan, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Rasterize and pad in one pass, straight into the ``(64, 384)`` buffer."""
    rows, cols = scan_bins(scan, cfg)
    out = np.zeros((cfg.range_bins, cfg.width), dtype=np.uint8)
    out[rows, cols] = HIT
    return out


def save_raster_png(raster: np.ndarray, path) -> Path:
    """Write a raster as 8-bit grayscale PNG, row 0 at the top."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(raster, dtype=np.uint8)).save(buf, format="PNG")
    return atomic_write(path, buf.getvalue())


def load_raster_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L"), dtype=np.uint8)
