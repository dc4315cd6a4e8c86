"""Ground-truth raster boxes from scenario metadata, and YOLO label files.

Labels for a 3-stack are computed at the pose of its middle frame (t-1).
Every object in sensor range is labelled, occluded or not; chairs and desks
are labelled by their whole footprint even though the scan only sees legs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, ObjectClass, Pose2D, world_to_robot_frame_many
from .raster import angle_bins, range_bins
from .world import Scenario, WorldObject


class NoLabel(ValueError):
    """An empty bin set cannot be turned into a box."""


@dataclass(frozen=True)
class RasterBox:
    """Axis-aligned box, normalized by the padded raster size (384 x 64)."""

    cls: ObjectClass
    x_c: float
    y_c: float
    w: float
    h: float

    def to_pixels(self, cfg: EncodingConfig = DEFAULT_CONFIG) -> tuple[float, float, float, float]:
        """``(x1, y1, x2, y2)`` in pixel units; columns on x, range rows on y."""
        W, H = cfg.width, cfg.height
        return (
            (self.x_c - self.w / 2) * W,
            (self.y_c - self.h / 2) * H,
            (self.x_c + self.w / 2) * W,
            (self.y_c + self.h / 2) * H,
        )

    @classmethod
    def from_pixels(cls, klass, x1, y1, x2, y2, cfg: EncodingConfig = DEFAULT_CONFIG) -> "RasterBox":
        W, H = cfg.width, cfg.height
        return cls(
            ObjectClass(klass),
            (x1 + x2) / 2 / W,
            (y1 + y2) / 2 / H,
            (x2 - x1) / W,
            (y2 - y1) / H,
        )

    @classmethod
    def from_bins(cls, klass, col0: int, col1: int, row0: int, row1: int, cfg: EncodingConfig = DEFAULT_CONFIG) -> "RasterBox":
        """Box covering columns ``col0..col1`` and rows ``row0..row1`` inclusive."""
        return cls.from_pixels(klass, col0, row0, col1 + 1, row1 + 1, cfg)

    def bin_extent(self, cfg: EncodingConfig = DEFAULT_CONFIG) -> tuple[int, int, int, int]:
        """Inverse of :meth:`from_bins`: ``(col0, col1, row0, row1)``."""
        x1, y1, x2, y2 = self.to_pixels(cfg)
        return round(x1), round(x2) - 1, round(y1), round(y2) - 1


def _edge_params(a: np.ndarray, e: np.ndarray, pose: Pose2D, cfg: EncodingConfig) -> np.ndarray:
    """Parameters in (0, 1) where edge ``a + s e`` crosses a range- or angle-bin boundary."""
    ax, ay = a[0] - pose.x, a[1] - pose.y
    ex, ey = e
    if ex == 0 and ey == 0:
        return np.empty(0)
    params = []

    # |A + sE| = R
    top = cfg.range_bins - 1
    radii = np.concatenate([np.arange(1, top + 1) * cfg.r_max / top, [cfg.sensor_min, cfg.sensor_max]])
    qa = ex * ex + ey * ey
    qb = 2.0 * (ax * ex + ay * ey)
    qc = ax * ax + ay * ay - radii**2
    disc = qb * qb - 4 * qa * qc
    ok = disc >= 0
    root = np.sqrt(disc[ok])
    params.append((-qb - root) / (2 * qa))
    params.append((-qb + root) / (2 * qa))

    # bearing = k + 0.5 deg (the rounding edges between columns)
    phi = np.radians(pose.yaw + np.arange(cfg.angle_bins) + 0.5)
    ux, uy = np.cos(phi), np.sin(phi)
    denom = ex * uy - ey * ux
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -(ax * uy - ay * ux) / denom
        px, py = ax + s * ex, ay + s * ey
        ahead = px * ux + py * uy > 0
    params.append(s[(denom != 0) & ahead])

    s = np.concatenate(params)
    return s[(s > 0) & (s < 1)]


def footprint_samples(obj: WorldObject, pose: Pose2D, step: float = 0.01, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Points along the footprint outline used for projection.

    Each edge is sampled uniformly at ``<= step`` spacing, plus one point
    inside every piece between consecutive bin-boundary crossings, so that
    every bin the outline passes through is hit regardless of ``step``.
    """
    corners = obj.corners()
    pts = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        e = b - a
        n = max(1, math.ceil(float(np.hypot(*e)) / step))
        uniform = np.arange(n + 1) / n
        cuts = np.unique(np.concatenate([[0.0, 1.0], _edge_params(a, e, pose, cfg)]))
        mids = (cuts[:-1] + cuts[1:]) / 2
        s = np.concatenate([uniform, mids])
        pts.append(a + s[:, None] * e)
    return np.concatenate(pts)


def project_footprint(obj: WorldObject, pose: Pose2D, cfg: EncodingConfig = DEFAULT_CONFIG, step: float = 0.01) -> set[tuple[int, int]]:
    """Raster bins ``(row, col)`` covered by the object's outline seen from ``pose``.

    Outline points outside the sensor window are dropped, so an object beyond
    ``sensor_max`` projects to an empty set.
    """
    pts = footprint_samples(obj, pose, step, cfg)
    bearing, rho = world_to_robot_frame_many(pts, pose)
    keep = (rho >= cfg.sensor_min) & (rho <= cfg.sensor_max)
    if not np.any(keep):
        return set()
    rows = range_bins(rho[keep], cfg)
    cols = angle_bins(bearing[keep], cfg)
    return set(zip(rows.tolist(), cols.tolist()))


def _wrapped_arc(cols: np.ndarray, n: int) -> tuple[int, int]:
    """Start and end column of the circular arc left after removing the largest gap."""
    if len(cols) == n:
        return 0, n - 1
    nxt = np.roll(cols, -1)
    gaps = (nxt - cols) % n - 1
    if len(cols) == 1:
        gaps = np.array([n - 1])
    j = int(np.argmax(gaps))
    return int(nxt[j]), int(cols[j])


def bins_to_box(bins, klass, cfg: EncodingConfig = DEFAULT_CONFIG) -> RasterBox:
    """Envelope box of a bin set.

    When the angular arc of the bins crosses 359 -> 0 the box keeps only the
    side holding more bins (ties go to the side starting at column 0) and is
    clipped at the boundary.
    """
    if not bins:
        raise NoLabel("no bins to box")
    arr = np.array(sorted(bins), dtype=int).reshape(-1, 2)
    rows, cols = arr[:, 0], arr[:, 1]
    start, end = _wrapped_arc(np.unique(cols), cfg.angle_bins)
    if start > end:
        high = cols >= start
        low = cols <= end
        side = high if high.sum() > low.sum() else low
        rows, cols = rows[side], cols[side]
    return RasterBox.from_bins(klass, int(cols.min()), int(cols.max()), int(rows.min()), int(rows.max()), cfg)


def label_frame(scenario: Scenario, pose_mid: Pose2D, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[RasterBox]:
    """One box per in-range object, in object-id order."""
    return [box for _, box in label_frame_indexed(scenario, pose_mid, cfg)]


def label_frame_indexed(scenario: Scenario, pose_mid: Pose2D, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[tuple[int, RasterBox]]:
    out = []
    for i, obj in enumerate(scenario.objects):
        bins = project_footprint(obj, pose_mid, cfg)
        if bins:
            out.append((i, bins_to_box(bins, obj.cls, cfg)))
    return out


def format_yolo_line(box: RasterBox) -> str:
    return f"{int(box.cls)} {box.x_c:.6f} {box.y_c:.6f} {box.w:.6f} {box.h:.6f}"


def write_yolo_labels(boxes, path) -> Path:
    """``<class_id> <x_c> <y_c> <w> <h>`` per line, six decimals."""
    return atomic_write(path, "".join(format_yolo_line(b) + "\n" for b in boxes))


def read_yolo_labels(path) -> list[RasterBox]:
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InvalidArgument(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        boxes.append(RasterBox(ObjectClass(int(parts[0])), *map(float, parts[1:])))
    return boxes
