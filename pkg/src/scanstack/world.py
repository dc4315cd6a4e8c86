"""Randomized single-room indoor scenarios and scenario-level splits.

The room is an axis-aligned rectangle centred on the world origin. The
layout rotation (a multiple of 90 deg) picks the wall that holds the doorway:
0 = east (+x), 90 = north (+y), 180 = west, 270 = south. The doorway itself
is labelled through a thin rectangular proxy object that straddles the wall.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import Polygon, box as shapely_box

from ._io import atomic_write
from .core import InvalidArgument, ObjectClass, Pose2D

SCENARIO_SCHEMA = "scanstack.scenario/1"
SPLIT_SCHEMA = "scanstack.splits/1"

NOMINAL_FOOTPRINT = {
    ObjectClass.CHAIR: (0.4, 0.4),
    ObjectClass.DESK: (0.8, 1.6),
    ObjectClass.BOX: (0.4, 0.6),
}
LEG_SIZE = {ObjectClass.CHAIR: 0.03, ObjectClass.DESK: 0.05}
DOOR_THICKNESS = 0.1
SPLITS = ("train", "val", "test")


class GenerationFailed(RuntimeError):
    def __init__(self, message: str, seed: int | None = None):
        super().__init__(f"{message} (seed={seed})" if seed is not None else message)
        self.seed = seed


@dataclass(frozen=True)
class WorldObject:
    """Rectangular footprint: ``width`` along the object's local x axis,
    ``depth`` along local y, rotated by ``yaw`` degrees about ``center``."""

    cls: ObjectClass
    center: tuple[float, float]
    yaw: float
    width: float
    depth: float
    scale: tuple[float, float] = (1.0, 1.0)
    leg_size: float | None = None

    def corners(self) -> np.ndarray:
        """Footprint corners, counter-clockwise, shape ``(4, 2)``."""
        hw, hd = self.width / 2.0, self.depth / 2.0
        local = np.array([[-hw, -hd], [hw, -hd], [hw, hd], [-hw, hd]])
        return self._to_world(local)

    def _to_world(self, local: np.ndarray) -> np.ndarray:
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center, dtype=float)

    def polygon(self) -> Polygon:
        return Polygon(self.corners())

    def leg_squares(self) -> list[np.ndarray]:
        """Corner legs (``(4, 2)`` each), inset by half a leg so they sit inside the footprint."""
        if not self.leg_size:
            return []
        half = self.leg_size / 2.0
        hw, hd = self.width / 2.0 - half, self.depth / 2.0 - half
        sq = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
        return [self._to_world(sq + [sx * hw, sy * hd]) for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]

    def solid_polygons(self) -> list[np.ndarray]:
        """Geometry a ray can hit: legs for chairs/desks, the footprint for boxes."""
        if self.cls == ObjectClass.DOORFRAME:
            return []
        if self.leg_size:
            return self.leg_squares()
        return [self.corners()]

    def to_dict(self) -> dict:
        return {
            "class": self.cls.label,
            "center": list(self.center),
            "yaw": self.yaw,
            "width": self.width,
            "depth": self.depth,
            "scale": list(self.scale),
            "leg_size": self.leg_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldObject":
        return cls(
            ObjectClass.parse(d["class"]),
            tuple(d["center"]),
            d["yaw"],
            d["width"],
            d["depth"],
            tuple(d.get("scale", (1.0, 1.0))),
            d.get("leg_size"),
        )


@dataclass(frozen=True)
class Doorway:
    """Opening of ``length`` metres on wall ``side`` (0=E, 1=N, 2=W, 3=S),
    centred at ``offset`` along the wall."""

    side: int
    offset: float
    length: float

    def endpoints(self, room_width: float, room_depth: float) -> np.ndarray:
        """The two ends of the opening in world coordinates, shape ``(2, 2)``."""
        hw, hd = room_width / 2.0, room_depth / 2.0
        lo, hi = self.offset - self.length / 2.0, self.offset + self.length / 2.0
        if self.side == 0:
            return np.array([[hw, lo], [hw, hi]])
        if self.side == 1:
            return np.array([[lo, hd], [hi, hd]])
        if self.side == 2:
            return np.array([[-hw, lo], [-hw, hi]])
        return np.array([[lo, -hd], [hi, -hd]])

    def center(self, room_width: float, room_depth: float) -> tuple[float, float]:
        e = self.endpoints(room_width, room_depth)
        return tuple(float(v) for v in e.mean(axis=0))

    def to_dict(self) -> dict:
        return {"side": self.side, "offset": self.offset, "length": self.length}

    @classmethod
    def from_dict(cls, d: dict) -> "Doorway":
        return cls(int(d["side"]), float(d["offset"]), float(d["length"]))


@dataclass
class Scenario:
    id: int
    room_width: float
    room_depth: float
    doorway: Doorway
    layout_rotation: int
    objects: list[WorldObject]
    waypoints: list[Pose2D]
    rng_seed: int

    def wall_segments(self) -> list[np.ndarray]:
        """Room boundary as ``(2, 2)`` segments, the doorway wall split in two."""
        hw, hd = self.room_width / 2.0, self.room_depth / 2.0
        corners = {
            0: ((hw, -hd), (hw, hd)),
            1: ((hw, hd), (-hw, hd)),
            2: ((-hw, hd), (-hw, -hd)),
            3: ((-hw, -hd), (hw, -hd)),
        }
        door = self.doorway.endpoints(self.room_width, self.room_depth)
        segs = []
        for side, (a, b) in corners.items():
            a, b = np.array(a), np.array(b)
            if side != self.doorway.side:
                segs.append(np.array([a, b]))
                continue
            # order the door ends along a -> b
            d0, d1 = sorted(door, key=lambda p: np.dot(p - a, b - a))
            segs.append(np.array([a, d0]))
            segs.append(np.array([d1, b]))
        return segs

    def room_polygon(self) -> Polygon:
        return shapely_box(-self.room_width / 2, -self.room_depth / 2, self.room_width / 2, self.room_depth / 2)

    def movable_objects(self) -> list[WorldObject]:
        return [o for o in self.objects if o.cls != ObjectClass.DOORFRAME]

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "id": self.id,
            "room": {"width": self.room_width, "depth": self.room_depth},
            "doorway": self.doorway.to_dict(),
            "layout_rotation": self.layout_rotation,
            "objects": [o.to_dict() for o in self.objects],
            "waypoints": [w.to_dict() for w in self.waypoints],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("schema") != SCENARIO_SCHEMA:
            raise InvalidArgument(f"unsupported scenario schema {d.get('schema')!r}")
        return cls(
            id=int(d["id"]),
            room_width=float(d["room"]["width"]),
            room_depth=float(d["room"]["depth"]),
            doorway=Doorway.from_dict(d["doorway"]),
            layout_rotation=int(d["layout_rotation"]),
            objects=[WorldObject.from_dict(o) for o in d["objects"]],
            waypoints=[Pose2D.from_dict(w) for w in d["waypoints"]],
            rng_seed=int(d["rng_seed"]),
        )

    def save(self, path) -> Path:
        return atomic_write(path, json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class GenerationConfig:
    room_width: float = 4.0
    room_depth: float = 4.0
    n_chairs: int = 1
    n_boxes: int = 1
    n_desks: int = 1
    n_waypoints: int = 90
    scale_range: tuple[float, float] = (0.8, 1.2)
    door_length_range: tuple[float, float] = (0.5, 1.0)
    # keep the doorway away from room corners
    door_corner_margin: float = 0.3
    # min distance between object footprints, walls and the doorway
    wall_margin: float = 0.05
    object_gap: float = 0.05
    door_keepout: float = 0.3
    clearance: float = 0.25
    max_retries: int = 100

    def object_counts(self) -> list[tuple[ObjectClass, int]]:
        # big footprints first; placement order is also object-id order
        return [(ObjectClass.DESK, self.n_desks), (ObjectClass.BOX, self.n_boxes), (ObjectClass.CHAIR, self.n_chairs)]


def _sample_object(cls: ObjectClass, rng: np.random.Generator, cfg: GenerationConfig, room: Polygon) -> WorldObject:
    lo, hi = cfg.scale_range
    if cls == ObjectClass.CHAIR:
        s = rng.uniform(lo, hi)
        scale = (s, s)
    else:
        scale = (rng.uniform(lo, hi), rng.uniform(lo, hi))
    w0, d0 = NOMINAL_FOOTPRINT[cls]
    minx, miny, maxx, maxy = room.bounds
    center = (rng.uniform(minx, maxx), rng.uniform(miny, maxy))
    return WorldObject(
        cls,
        center,
        rng.uniform(0.0, 360.0),
        w0 * scale[0],
        d0 * scale[1],
        scale,
        LEG_SIZE.get(cls),
    )


def generate_scenario(seed: int, cfg: GenerationConfig = GenerationConfig(), scenario_id: int = 0) -> Scenario:
    """Deterministic random room for ``seed``.

    Raises :class:`GenerationFailed` when an object cannot be placed without
    overlap within ``cfg.max_retries`` draws.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(4))
    # a quarter turn swaps the room's extents
    if k % 2:
        room_w, room_d = cfg.room_depth, cfg.room_width
    else:
        room_w, room_d = cfg.room_width, cfg.room_depth
    wall_len = room_d if k % 2 == 0 else room_w
    length = rng.uniform(*cfg.door_length_range)
    free = wall_len / 2.0 - cfg.door_corner_margin - length / 2.0
    if free < 0:
        raise GenerationFailed("doorway does not fit on its wall", seed)
    doorway = Doorway(k, rng.uniform(-free, free), length)
    door_center = doorway.center(room_w, room_d)
    doorframe = WorldObject(ObjectClass.DOORFRAME, door_center, 90.0 * k, DOOR_THICKNESS, length)

    room = shapely_box(-room_w / 2, -room_d / 2, room_w / 2, room_d / 2)
    inner = room.buffer(-cfg.wall_margin, join_style="mitre")
    blocked = [doorframe.polygon().buffer(cfg.door_keepout)]
    objects = [doorframe]
    for cls, n in cfg.object_counts():
        for _ in range(n):
            for _attempt in range(cfg.max_retries):
                obj = _sample_object(cls, rng, cfg, inner)
                poly = obj.polygon()
                if not inner.contains(poly):
                    continue
                if any(poly.intersects(b) for b in blocked):
                    continue
                break
            else:
                raise GenerationFailed(f"could not place {cls.label} after {cfg.max_retries} tries", seed)
            objects.append(obj)
            blocked.append(poly.buffer(cfg.object_gap))

    scenario = Scenario(scenario_id, room_w, room_d, doorway, 90 * k, objects, [], seed)
    if cfg.n_waypoints > 0:
        try:
            scenario.waypoints = waypoint_grid(scenario, cfg.n_waypoints, cfg.clearance)
        except GenerationFailed as exc:
            raise GenerationFailed(str(exc), seed) from None
    return scenario


def free_space_distance(scenario: Scenario, xy: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest wall or movable object footprint.

    Points inside a footprint or outside the room get distance 0.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    hw, hd = scenario.room_width / 2.0, scenario.room_depth / 2.0
    to_wall = np.minimum.reduce([hw - xy[:, 0], hw + xy[:, 0], hd - xy[:, 1], hd + xy[:, 1]])
    dist = np.maximum(to_wall, 0.0)
    pts = shapely.points(xy)
    for obj in scenario.movable_objects():
        dist = np.minimum(dist, shapely.distance(pts, obj.polygon()))
    return dist


def waypoint_grid(scenario: Scenario, count: int, clearance: float = 0.25, max_grid: int = 200) -> list[Pose2D]:
    """``count`` robot poses on a regular grid over the room's free space.

    The room is split into ``n x n`` cells (``n`` starting at
    ``ceil(sqrt(count))``); cell centres closer than ``clearance`` to a wall
    or object are dropped and ``n`` grows until enough remain. The kept
    centres are picked evenly in row-major order and headings cycle through
    0, 90, 180, 270 deg.
    """
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    n = math.ceil(math.sqrt(count))
    while n <= max_grid:
        xs = -scenario.room_width / 2.0 + (np.arange(n) + 0.5) * scenario.room_width / n
        ys = -scenario.room_depth / 2.0 + (np.arange(n) + 0.5) * scenario.room_depth / n
        gx, gy = np.meshgrid(xs, ys)
        cells = np.column_stack([gx.ravel(), gy.ravel()])
        free = cells[free_space_distance(scenario, cells) >= clearance]
        if len(free) >= count:
            pick = np.round(np.linspace(0, len(free) - 1, count)).astype(int)
            return [Pose2D(x, y, 90.0 * (i % 4)) for i, (x, y) in enumerate(free[pick])]
        n += 1
    raise GenerationFailed(f"free space too small for {count} waypoints")


@dataclass
class SplitAssignment:
    mapping: dict[int, str] = field(default_factory=dict)

    def ids(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise InvalidArgument(f"unknown split {split!r}")
        return sorted(i for i, s in self.mapping.items() if s == split)

    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(self.ids(s)) for s in SPLITS)

    def to_dict(self) -> dict:
        return {"schema": SPLIT_SCHEMA, **{s: self.ids(s) for s in SPLITS}}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitAssignment":
        mapping = {}
        for s in SPLITS:
            for i in d.get(s, []):
                if i in mapping:
                    raise InvalidArgument(f"scenario {i} appears in two splits")
                mapping[int(i)] = s
        return cls(mapping)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def scenario_split(ids, ratios=(0.85, 0.10, 0.05), seed: int = 0) -> SplitAssignment:
    """Assign whole scenarios to train/val/test.

    Val and test get ``round(ratio * N)`` ids (half rounds up, at least one
    each when their ratio is positive); train takes the remainder. The result
    depends only on the set of ids and ``seed``.
    """
    ids = sorted(set(int(i) for i in ids))
    if len(ids) < 3:
        raise InvalidArgument("need at least 3 scenario ids to split")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise InvalidArgument(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(ids)
    n_val = _round_half_up(ratios[1] * n)
    n_test = _round_half_up(ratios[2] * n)
    if ratios[1] > 0:
        n_val = max(n_val, 1)
    if ratios[2] > 0:
        n_test = max(n_test, 1)
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    mapping = {}
    for rank, idx in enumerate(order):
        mapping[ids[idx]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return SplitAssignment(mapping)
