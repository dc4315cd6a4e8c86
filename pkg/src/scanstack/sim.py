"""360-beam ray casting against a scenario's wall and object segments.

Stands in for the simulated LDS-01: one return per integer bearing at
``scan_rate`` Hz, no beam divergence or multi-echo. Returns outside
``[sensor_min, sensor_max]`` come back as ``inf``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, PolarScan, Pose2D
from .world import Scenario

EPISODE_SCHEMA = "scanstack.episode/1"
WALL = -1


class PoseInCollision(RuntimeError):
    pass


@dataclass
class SegmentWorld:
    """``segments[i]`` is a ``(2, 2)`` segment; ``source[i]`` is the object
    index it belongs to, or ``WALL``."""

    segments: np.ndarray
    source: np.ndarray
    solids: list[np.ndarray] = field(default_factory=list)
    room_size: tuple[float, float] = (4.0, 4.0)

    def __len__(self):
        return len(self.segments)

    def object_segments(self, index: int) -> np.ndarray:
        return self.segments[self.source == index]

    @property
    def wall_segments(self) -> np.ndarray:
        return self.segments[self.source == WALL]


def _polygon_edges(poly: np.ndarray) -> np.ndarray:
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def build_segment_world(scenario: Scenario) -> SegmentWorld:
    segs = list(scenario.wall_segments())
    source = [WALL] * len(segs)
    solids = []
    for i, obj in enumerate(scenario.objects):
        for poly in obj.solid_polygons():
            solids.append(poly)
            edges = _polygon_edges(poly)
            segs.extend(edges)
            source.extend([i] * len(edges))
    return SegmentWorld(
        np.asarray(segs, dtype=float).reshape(-1, 2, 2),
        np.asarray(source, dtype=int),
        solids,
        (scenario.room_width, scenario.room_depth),
    )


def cast_rays(world: SegmentWorld, pose: Pose2D, thetas, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Range along each bearing in ``thetas`` (degrees, robot frame)."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phi = np.radians(pose.yaw + thetas)
    dx, dy = np.cos(phi)[:, None], np.sin(phi)[:, None]
    p = world.segments[:, 0]
    e = world.segments[:, 1] - p
    wx, wy = p[:, 0] - pose.x, p[:, 1] - pose.y
    ex, ey = e[:, 0], e[:, 1]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        s = (wx * dy - wy * dx) / denom
    hit = (denom != 0) & (t > 0) & (s >= 0) & (s <= 1)
    t = np.where(hit, t, np.inf)
    nearest = t.min(axis=1) if t.shape[1] else np.full(len(thetas), np.inf)
    nearest[(nearest < cfg.sensor_min) | (nearest > cfg.sensor_max)] = np.inf
    return nearest


def cast_ray(world: SegmentWorld, pose: Pose2D, theta: float, cfg: EncodingConfig = DEFAULT_CONFIG) -> float:
    """Nearest hit along one bearing, or ``inf`` if none lies in the sensor window."""
    if not 0.0 <= theta < 360.0:
        raise InvalidArgument(f"theta must be in [0, 360), got {theta}")
    return float(cast_rays(world, pose, [theta], cfg)[0])


def _point_in_convex(poly: np.ndarray, x: float, y: float) -> bool:
    a = poly
    b = np.roll(poly, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (y - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x - a[:, 0])
    return bool(np.all(cross >= 0) or np.all(cross <= 0))


def in_collision(world: SegmentWorld, pose: Pose2D) -> bool:
    hw, hd = world.room_size[0] / 2.0, world.room_size[1] / 2.0
    if not (-hw < pose.x < hw and -hd < pose.y < hd):
        return True
    return any(_point_in_convex(poly, pose.x, pose.y) for poly in world.solids)


def simulate_scan(
    world: SegmentWorld,
    pose: Pose2D,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    t: int = 0,
    cfg: EncodingConfig = DEFAULT_CONFIG,
) -> PolarScan:
    """One scan with a return at every integer bearing 0..359.

    Optional zero-mean Gaussian noise is added to valid returns, which are
    then clipped back into the sensor window.
    """
    if in_collision(world, pose):
        raise PoseInCollision(f"pose {pose} is inside an obstacle or outside the room")
    bearings = np.arange(cfg.angle_bins, dtype=float)
    ranges = cast_rays(world, pose, bearings, cfg)
    if noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng()
        ok = np.isfinite(ranges)
        ranges[ok] = np.clip(ranges[ok] + rng.normal(0.0, noise_sigma, ok.sum()), cfg.sensor_min, cfg.sensor_max)
    return PolarScan(ranges, pose, t, bearings)


@dataclass
class Episode:
    scenario_id: int
    waypoint_index: int
    frames: list[PolarScan]
    scan_rate: float = DEFAULT_CONFIG.scan_rate
    noise_sigma: float = 0.0
    seed: int | None = None

    def __len__(self):
        return len(self.frames)

    @property
    def poses(self) -> list[Pose2D]:
        return [f.pose for f in self.frames]

    @property
    def timestamps(self) -> list[float]:
        return [f.t / self.scan_rate for f in self.frames]

    def save(self, directory, stem: str) -> tuple[Path, Path]:
        """Write ``<stem>.bin`` (little-endian float32, 360 per frame) and ``<stem>.json``."""
        directory = Path(directory)
        bin_path, meta_path = directory / f"{stem}.bin", directory / f"{stem}.json"
        ranges = np.stack([f.ranges for f in self.frames]).astype("<f4")
        atomic_write(bin_path, ranges.tobytes())
        meta = {
            "schema": EPISODE_SCHEMA,
            "scenario_id": self.scenario_id,
            "waypoint_index": self.waypoint_index,
            "scan_rate": self.scan_rate,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "n_frames": len(self.frames),
            "n_beams": int(ranges.shape[1]),
            "t": [f.t for f in self.frames],
            "poses": [f.pose.to_dict() for f in self.frames],
        }
        atomic_write(meta_path, json.dumps(meta, indent=1))
        return bin_path, meta_path

    @classmethod
    def load(cls, directory, stem: str) -> "Episode":
        directory = Path(directory)
        meta = json.loads((directory / f"{stem}.json").read_text())
        if meta.get("schema") != EPISODE_SCHEMA:
            raise InvalidArgument(f"unsupported episode schema {meta.get('schema')!r}")
        raw = np.frombuffer((directory / f"{stem}.bin").read_bytes(), dtype="<f4")
        ranges = raw.reshape(meta["n_frames"], meta["n_beams"]).astype(float)
        frames = [
            PolarScan(r, Pose2D.from_dict(p), t) for r, p, t in zip(ranges, meta["poses"], meta["t"])
        ]
        return cls(meta["scenario_id"], meta["waypoint_index"], frames, meta["scan_rate"], meta["noise_sigma"], meta["seed"])


def simulate_episode(
    scenario: Scenario,
    waypoint_index: int,
    n_frames: int = 5,
    rotation_rate: float = 30.0,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    cfg: EncodingConfig = DEFAULT_CONFIG,
    world: SegmentWorld | None = None,
) -> Episode:
    """Rotate in place at ``rotation_rate`` deg/s, recording ``n_frames`` scans at ``cfg.scan_rate``."""
    if n_frames < 3:
        raise InvalidArgument("an episode needs at least 3 frames")
    if not 0 <= waypoint_index < len(scenario.waypoints):
        raise InvalidArgument(f"waypoint index {waypoint_index} out of range")
    world = world if world is not None else build_segment_world(scenario)
    wp = scenario.waypoints[waypoint_index]
    step = rotation_rate / cfg.scan_rate
    rng = np.random.default_rng(seed) if noise_sigma > 0 else None
    frames = [
        simulate_scan(world, Pose2D(wp.x, wp.y, wp.yaw + k * step), noise_sigma, rng, k, cfg)
        for k in range(n_frames)
    ]
    return Episode(scenario.id, waypoint_index, frames, cfg.scan_rate, noise_sigma, seed)
