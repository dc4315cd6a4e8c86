"""Shared geometry and identity types.

Angles are in degrees everywhere. Bearings are measured in the robot frame with
0 deg along the robot heading and increasing counter-clockwise; the simulator
and the labeler both rely on this single convention.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's preconditions."""


@dataclass(frozen=True)
class EncodingConfig:
    """Raster geometry and sensor limits used by every stage."""

    range_bins: int = 64
    angle_bins: int = 360
    pad_cols: int = 24
    r_max: float = 4.0
    sensor_min: float = 0.12
    sensor_max: float = 3.5
    scan_rate: float = 10.0

    def __post_init__(self):
        if self.range_bins != 64:
            raise InvalidArgument("range_bins must be 64")
        if (self.angle_bins + self.pad_cols) % 32 != 0:
            raise InvalidArgument("angle_bins + pad_cols must be divisible by 32")
        if not 0 < self.sensor_min < self.sensor_max < self.r_max:
            raise InvalidArgument("need 0 < sensor_min < sensor_max < r_max")
        if self.scan_rate <= 0:
            raise InvalidArgument("scan_rate must be positive")

    @property
    def width(self) -> int:
        """Padded raster width."""
        return self.angle_bins + self.pad_cols

    @property
    def height(self) -> int:
        return self.range_bins


DEFAULT_CONFIG = EncodingConfig()


class ObjectClass(enum.IntEnum):
    CHAIR = 0
    BOX = 1
    DESK = 2
    DOORFRAME = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "ObjectClass":
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


NUM_CLASSES = len(ObjectClass)


def normalize_angle_deg(a: float) -> float:
    """Wrap an angle in degrees into [0, 360)."""
    if not math.isfinite(a):
        raise InvalidArgument(f"angle must be finite, got {a!r}")
    r = math.fmod(a, 360.0)
    if r < 0:
        r += 360.0
    # -1e-20 + 360 rounds to 360
    if r >= 360.0:
        r = 0.0
    return r + 0.0


@dataclass(frozen=True)
class Pose2D:
    """Planar robot pose. ``yaw`` is stored normalized to [0, 360)."""

    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgument("pose position must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle_deg(float(self.yaw)))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose2D":
        return cls(d["x"], d["y"], d["yaw"])


def world_to_robot_frame(p, pose: Pose2D) -> tuple[float, float]:
    """Return ``(bearing_deg, range_m)`` of world point ``p`` seen from ``pose``.

    A point at the robot origin gets bearing 0 and range 0.
    """
    dx = float(p[0]) - pose.x
    dy = float(p[1]) - pose.y
    rng = math.hypot(dx, dy)
    if rng == 0.0:
        return 0.0, 0.0
    bearing = math.degrees(math.atan2(dy, dx)) - pose.yaw
    return normalize_angle_deg(bearing), rng


def robot_to_world_frame(bearing: float, rng: float, pose: Pose2D) -> tuple[float, float]:
    """Inverse of :func:`world_to_robot_frame`."""
    phi = math.radians(pose.yaw + bearing)
    return pose.x + rng * math.cos(phi), pose.y + rng * math.sin(phi)


def world_to_robot_frame_many(points: np.ndarray, pose: Pose2D) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of :func:`world_to_robot_frame` for an ``(n, 2)`` array."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    dx = pts[:, 0] - pose.x
    dy = pts[:, 1] - pose.y
    rng = np.hypot(dx, dy)
    bearing = np.degrees(np.arctan2(dy, dx)) - pose.yaw
    bearing = np.mod(bearing, 360.0)
    bearing[bearing >= 360.0] = 0.0
    bearing[rng == 0.0] = 0.0
    return bearing, rng


@dataclass
class PolarScan:
    """One 360 deg sweep: ``ranges[i]`` is the return at ``bearings[i]``.

    Ranges may be ``inf`` for missing returns. ``t`` is the frame index
    within its stream.
    """

    ranges: np.ndarray
    pose: Pose2D
    t: int = 0
    bearings: np.ndarray = field(default=None)

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.bearings is None:
            self.bearings = np.arange(self.ranges.size, dtype=float)
        else:
            self.bearings = np.asarray(self.bearings, dtype=float)
        if self.ranges.ndim != 1 or self.bearings.shape != self.ranges.shape:
            raise InvalidArgument("ranges and bearings must be 1-D arrays of equal length")
        if self.bearings.size > 1 and np.any(np.diff(self.bearings) <= 0):
            raise InvalidArgument("bearings must be strictly increasing")
        if np.any(np.isnan(self.ranges)) or np.any(self.ranges < 0):
            raise InvalidArgument("ranges must be non-negative or inf")

    def __len__(self):
        return self.ranges.size
