"""Detector backends for :class:`scanstack.pipeline.Pipeline`.

A backend is a callable ``(tensor, ctx) -> list[Detection]`` with a ``name``.
It keeps no state between frames; the frame buffer lives in the pipeline.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .core import DEFAULT_CONFIG, NUM_CLASSES, EncodingConfig, ObjectClass, Pose2D
from .labels import RasterBox, bins_to_box, label_frame, project_footprint
from .metrics import Detection
from .pipeline import BackendError, FrameContext
from .temporal import tensor_from_bytes, tensor_to_bytes
from .world import DOOR_THICKNESS, NOMINAL_FOOTPRINT, Scenario, WorldObject


class NullBackend:
    name = "null"

    def __call__(self, tensor, ctx):
        return []


class OracleBackend:
    """Returns the ground-truth labels of the stack's middle frame, confidence 1.

    ``poses[i]`` is the pose of stream frame ``i``; ``scenario`` is one
    scenario for the whole stream or a per-frame sequence.
    """

    name = "oracle"

    def __init__(self, scenario: Scenario | Sequence[Scenario], poses: Sequence[Pose2D], cfg: EncodingConfig = DEFAULT_CONFIG):
        self.scenario = scenario
        self.poses = list(poses)
        self.cfg = cfg

    def __call__(self, tensor, ctx: FrameContext) -> list[Detection]:
        i = ctx.mid_index
        if not 0 <= i < len(self.poses):
            raise BackendError(f"no pose for middle frame {i}")
        scenario = self.scenario if isinstance(self.scenario, Scenario) else self.scenario[i]
        return [Detection(b, 1.0) for b in label_frame(scenario, self.poses[i], self.cfg)]


def oracle_backend(scenario, poses, cfg: EncodingConfig = DEFAULT_CONFIG) -> OracleBackend:
    return OracleBackend(scenario, poses, cfg)


class BusyWaitBackend:
    """Spins for a fixed time per call; used to check the timing harness.

    ``first_ms`` overrides the duration of the very first call.
    """

    name = "busy-wait"

    def __init__(self, ms: float = 1.0, first_ms: float | None = None):
        self.ms = ms
        self.first_ms = first_ms
        self._calls = 0

    def __call__(self, tensor, ctx):
        ms = self.first_ms if (self._calls == 0 and self.first_ms is not None) else self.ms
        self._calls += 1
        end = time.perf_counter_ns() + int(ms * 1e6)
        while time.perf_counter_ns() < end:
            pass
        return []


# --- geometric baseline -----------------------------------------------------


def clusters(plane: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[np.ndarray]:
    """8-connected hit clusters of one raster channel as ``(n, 2)`` (row, col) arrays.

    The sentinel row and the padding columns are ignored; columns 359 and 0
    are treated as neighbours.
    """
    top = cfg.range_bins - 1
    hits = np.asarray(plane)[:top, : cfg.angle_bins] > 0
    lab, n = ndimage.label(hits, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    last, first = lab[:, -1], lab[:, 0]
    for r in np.nonzero(last)[0]:
        for dr in (-1, 0, 1):
            rr = r + dr
            if 0 <= rr < top and first[rr]:
                a, b = find(last[r]), find(first[rr])
                if a != b:
                    parent[max(a, b)] = min(a, b)
    roots = np.array([find(i) for i in range(n + 1)])
    rows, cols = np.nonzero(hits)
    ids = roots[lab[rows, cols]]
    order = np.argsort(ids, kind="stable")
    ids, rows, cols = ids[order], rows[order], cols[order]
    splits = np.nonzero(np.diff(ids))[0] + 1
    return [np.column_stack([r, c]) for r, c in zip(np.split(rows, splits), np.split(cols, splits))]


def cell_points(cells: np.ndarray, cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Robot-frame points at the centres of raster cells ``(row, col)``."""
    cells = np.asarray(cells).reshape(-1, 2)
    rho = (cells[:, 0] + 0.5) * cfg.r_max / (cfg.range_bins - 1)
    phi = np.radians(cells[:, 1].astype(float))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi)])


def min_area_rect(xy: np.ndarray, step_deg: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Smallest-area bounding rectangle over orientations in ``[0, 90)``.

    Returns ``(yaw_deg, lo, hi)`` with ``lo``/``hi`` the extents of the points
    along the rotated axes ``u = (cos, sin)`` and ``v = (-sin, cos)``.
    """
    ang = np.radians(np.arange(0.0, 90.0, step_deg))
    u = np.column_stack([np.cos(ang), np.sin(ang)])
    v = np.column_stack([-np.sin(ang), np.cos(ang)])
    pu, pv = xy @ u.T, xy @ v.T
    ext_u = pu.max(axis=0) - pu.min(axis=0)
    ext_v = pv.max(axis=0) - pv.min(axis=0)
    # a tiny floor keeps collinear point sets ordered by their length
    k = int(np.argmin((ext_u + 1e-3) * (ext_v + 1e-3)))
    lo = np.array([pu[:, k].min(), pv[:, k].min()])
    hi = np.array([pu[:, k].max(), pv[:, k].max()])
    return float(np.degrees(ang[k])), lo, hi


@dataclass(frozen=True)
class GeometricParams:
    channel: int = 2
    min_cells: int = 1
    # segment diameter ranges in metres
    leg_max: float = 0.12
    box_max: float = 1.0
    # legs closer than this are grouped into one piece of furniture
    leg_link: float = 1.0
    chair_max: float = 0.65
    door_range: tuple[float, float] = (0.4, 1.1)


def _extrude(lo: np.ndarray, hi: np.ndarray, sizes) -> tuple[np.ndarray, np.ndarray]:
    """Grow each rectangle side to at least its nominal size, away from the
    sensor at the origin (hidden faces lie behind the visible ones).

    The longer visible side is taken as the long nominal side when it is
    longer than the mean of the two nominal sizes.
    """
    lo, hi = lo.copy(), hi.copy()
    ext = hi - lo
    small, large = sorted(sizes)
    long_axis = int(np.argmax(ext))
    want = np.empty(2)
    if ext[long_axis] > 0.5 * (small + large):
        want[long_axis], want[1 - long_axis] = large, small
    else:
        want[long_axis], want[1 - long_axis] = small, large
    for axis in (0, 1):
        if ext[axis] >= want[axis]:
            continue
        if 0.5 * (lo[axis] + hi[axis]) >= 0.0:
            hi[axis] = lo[axis] + want[axis]
        else:
            lo[axis] = hi[axis] - want[axis]
    return lo, hi


def _rect_object(klass: ObjectClass, yaw: float, lo: np.ndarray, hi: np.ndarray) -> WorldObject:
    c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    mu, mv = 0.5 * (lo + hi)
    centre = (mu * c - mv * s, mu * s + mv * c)
    w, d = np.maximum(hi - lo, 1e-3)
    return WorldObject(klass, centre, yaw, float(w), float(d))


def _link_groups(centres: np.ndarray, link: float) -> list[list[int]]:
    n = len(centres)
    if n == 0:
        return []
    d = np.hypot(*(centres[:, None, :] - centres[None, :, :]).transpose(2, 0, 1))
    groups, seen = [], set()
    for i in range(n):
        if i in seen:
            continue
        stack, g = [i], []
        seen.add(i)
        while stack:
            j = stack.pop()
            g.append(j)
            for k in np.nonzero(d[j] < link)[0]:
                if int(k) not in seen:
                    seen.add(int(k))
                    stack.append(int(k))
        groups.append(sorted(g))
    return groups


class GeometricBackend:
    """Rule-based detector on the newest channel of the tensor.

    Hits are grouped into 8-connected clusters (sentinel row and padding
    ignored, columns 0 and 359 adjacent). Each cluster is turned back into
    robot-frame points and read by its metric size: leg-sized clusters are
    grouped into chairs or desks, mid-sized ones are boxes, longer ones are
    walls. A rectangle fitted to each object's points, grown to the nominal
    footprint where faces are hidden, is projected into the raster the same
    way labels are. An empty-column gap between two wall clusters a door
    width apart becomes a doorframe. Confidence is cluster size over the
    largest cluster size in the frame (doorframes get a fixed 0.5).
    """

    name = "geometric"

    def __init__(self, params: GeometricParams = GeometricParams(), cfg: EncodingConfig = DEFAULT_CONFIG):
        self.params = params
        self.cfg = cfg

    def _emit(self, obj: WorldObject, conf: float) -> Detection | None:
        bins = project_footprint(obj, Pose2D(0.0, 0.0, 0.0), self.cfg, step=0.02)
        if not bins:
            return None
        return Detection(bins_to_box(bins, obj.cls, self.cfg), conf)

    def _box(self, pts: np.ndarray, conf: float) -> Detection | None:
        yaw, lo, hi = min_area_rect(pts)
        lo, hi = _extrude(lo, hi, NOMINAL_FOOTPRINT[ObjectClass.BOX])
        return self._emit(_rect_object(ObjectClass.BOX, yaw, lo, hi), conf)

    def _furniture(self, pts: np.ndarray, conf: float) -> Detection | None:
        p = self.params
        yaw, lo, hi = min_area_rect(pts)
        klass = ObjectClass.CHAIR if max(hi - lo) <= p.chair_max else ObjectClass.DESK
        small, large = NOMINAL_FOOTPRINT[klass]
        # hidden legs: grow each side to at least its nominal size
        ext = hi - lo
        want = np.array([large, small]) if ext[0] >= ext[1] else np.array([small, large])
        centre = 0.5 * (lo + hi)
        lo = np.minimum(lo, centre - want / 2)
        hi = np.maximum(hi, centre + want / 2)
        return self._emit(_rect_object(klass, yaw, lo, hi), conf)

    def _doorframes(self, cols: np.ndarray, xy: np.ndarray, on_wall: np.ndarray) -> list[Detection]:
        p = self.params
        dets = []
        n = len(cols)
        far = self.cfg.sensor_max - 0.2
        for i in range(n):
            j = (i + 1) % n
            if (cols[j] - cols[i]) % self.cfg.angle_bins <= 1 or not (on_wall[i] and on_wall[j]):
                continue
            a, b = xy[i], xy[j]
            if max(np.hypot(*a), np.hypot(*b)) > far:
                continue
            width = float(np.hypot(*(b - a)))
            if not p.door_range[0] <= width <= p.door_range[1]:
                continue
            yaw = math.degrees(math.atan2(b[1] - a[1], b[0] - a[0]))
            mid = 0.5 * (a + b)
            det = self._emit(WorldObject(ObjectClass.DOORFRAME, (float(mid[0]), float(mid[1])), yaw, width, DOOR_THICKNESS), 0.5)
            if det is not None:
                dets.append(det)
        return dets

    def __call__(self, tensor, ctx=None) -> list[Detection]:
        p = self.params
        found = [c for c in clusters(tensor[:, :, p.channel], self.cfg) if len(c) >= p.min_cells]
        if not found:
            return []
        biggest = max(len(c) for c in found)
        dets: list[Detection] = []
        legs, wall_cols = [], []
        for cells in found:
            pts = cell_points(cells, self.cfg)
            diam = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
            if diam > p.box_max:
                wall_cols.append(cells[:, 1])
            elif diam <= p.leg_max:
                legs.append((pts, len(cells)))
            else:
                det = self._box(pts, len(cells) / biggest)
                if det is not None:
                    dets.append(det)
        centres = np.array([pts.mean(axis=0) for pts, _ in legs]).reshape(-1, 2)
        for group in _link_groups(centres, p.leg_link):
            pts = np.concatenate([legs[i][0] for i in group])
            size = sum(legs[i][1] for i in group)
            det = self._furniture(pts, min(1.0, size / biggest))
            if det is not None:
                dets.append(det)

        cells = np.concatenate(found)
        order = np.argsort(cells[:, 1], kind="stable")
        cells = cells[order]
        walls = np.concatenate(wall_cols) if wall_cols else np.empty(0, dtype=int)
        dets.extend(self._doorframes(cells[:, 1], cell_points(cells, self.cfg), np.isin(cells[:, 1], walls)))
        return dets


def geometric_backend(params: GeometricParams = GeometricParams(), cfg: EncodingConfig = DEFAULT_CONFIG) -> GeometricBackend:
    return GeometricBackend(params, cfg)


# --- serialized model adapter -------------------------------------------------


class TorchScriptRunner:
    """Loads a TorchScript detector and runs it on raw tensor bytes.

    Input to the model: float32 ``(1, 3, 64, 384)`` scaled to [0, 1].
    """

    def __init__(self, model_path, cfg: EncodingConfig = DEFAULT_CONFIG):
        import torch

        self._torch = torch
        self.cfg = cfg
        self.model = torch.jit.load(str(model_path), map_location="cpu")
        self.model.eval()

    def __call__(self, raw: bytes) -> np.ndarray:
        torch = self._torch
        arr = tensor_from_bytes(raw, self.cfg)
        x = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0).float().div_(255.0)
        with torch.inference_mode():
            out = self.model(x)
        if isinstance(out, (list, tuple)):
            out = out[0]
        return out.detach().cpu().numpy()


def decode_yolo(output: np.ndarray, conf_thr: float = 0.25, cfg: EncodingConfig = DEFAULT_CONFIG) -> list[Detection]:
    """Decode a YOLOv8-style head output ``(1, 4 + C, N)``: pixel ``cx, cy, w, h``
    followed by per-class scores."""
    out = np.asarray(output, dtype=float)
    if out.ndim == 3:
        out = out[0]
    if out.shape[0] != 4 + NUM_CLASSES:
        raise BackendError(f"expected {4 + NUM_CLASSES} output rows, got {out.shape[0]}")
    boxes, scores = out[:4].T, out[4:].T
    cls = scores.argmax(axis=1)
    conf = scores[np.arange(len(cls)), cls]
    dets = []
    for (cx, cy, w, h), k, c in zip(boxes, cls, conf):
        if c < conf_thr:
            continue
        x1, x2 = np.clip([cx - w / 2, cx + w / 2], 0, cfg.width)
        y1, y2 = np.clip([cy - h / 2, cy + h / 2], 0, cfg.height)
        if x2 <= x1 or y2 <= y1:
            continue
        dets.append(Detection(RasterBox.from_pixels(int(k), x1, y1, x2, y2, cfg), float(min(c, 1.0))))
    return dets


class ModelBackend:
    """Adapter for a serialized network: the tensor goes to ``runner`` as the
    raw byte stream of :func:`scanstack.temporal.tensor_to_bytes`."""

    def __init__(
        self,
        model_path,
        runner_factory: Callable[..., Callable[[bytes], np.ndarray]] = TorchScriptRunner,
        conf_thr: float = 0.25,
        cfg: EncodingConfig = DEFAULT_CONFIG,
    ):
        self.model_path = Path(model_path)
        if not self.model_path.exists():
            raise BackendError(f"model file not found: {self.model_path}")
        self.runner = runner_factory(self.model_path, cfg)
        self.conf_thr = conf_thr
        self.cfg = cfg
        self.name = f"model:{self.model_path.name}"

    def __call__(self, tensor, ctx=None) -> list[Detection]:
        return decode_yolo(self.runner(tensor_to_bytes(tensor)), self.conf_thr, self.cfg)


def make_backend(
    name: str,
    scenario: Scenario | Sequence[Scenario] | None = None,
    poses: Sequence[Pose2D] | None = None,
    cfg: EncodingConfig = DEFAULT_CONFIG,
):
    """Build a backend from ``oracle``, ``geometric``, ``null``, ``busywait[:MS]`` or ``model:PATH``.

    The oracle needs the scenario(s) and the per-frame poses of the stream.
    """
    kind, _, arg = name.partition(":")
    if kind == "oracle":
        if scenario is None or poses is None:
            raise BackendError("the oracle backend needs a scenario and frame poses")
        return OracleBackend(scenario, poses, cfg)
    if kind == "geometric":
        return GeometricBackend(cfg=cfg)
    if kind == "null":
        return NullBackend()
    if kind == "busywait":
        return BusyWaitBackend(float(arg) if arg else 1.0)
    if kind == "model":
        if not arg:
            raise BackendError("model backend needs a path: model:PATH")
        return ModelBackend(arg, cfg=cfg)
    raise BackendError(f"unknown backend {name!r}")
