"""Online inference loop and the latency benchmark.

Per scan: rasterize + pad, push into the 3-frame FIFO, stack to RGB, run the
detector backend, then per-class NMS. The first frame of a stream fills the
buffer with three copies of itself; results are flagged ``cold_start`` until
the buffer holds three distinct frames.
"""
from __future__ import annotations

import gc
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, PolarScan, Pose2D
from .metrics import Detection, nms
from .raster import encode_scan
from .temporal import FrameBuffer, stack_rgb


class BackendError(RuntimeError):
    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(f"frame {frame_index}: {message}" if frame_index is not None else message)
        self.message = message
        self.frame_index = frame_index


@dataclass(frozen=True)
class FrameContext:
    """What the pipeline knows about the tensor it hands to a backend."""

    index: int
    mid_index: int
    mid_pose: Pose2D
    cold_start: bool


class DetectorBackend(Protocol):
    name: str

    def __call__(self, tensor: np.ndarray, ctx: FrameContext) -> list[Detection]: ...


@dataclass
class StepResult:
    index: int
    detections: list[Detection]
    boxes_px: np.ndarray
    cold_start: bool
    tensor: np.ndarray
    context: FrameContext
    # encode, infer, postprocess, end-to-end
    times_ns: tuple[int, int, int, int] = (0, 0, 0, 0)


def boxes_to_pixels(dets: Sequence[Detection], cfg: EncodingConfig = DEFAULT_CONFIG) -> np.ndarray:
    return np.array([d.box.to_pixels(cfg) for d in dets], dtype=float).reshape(-1, 4)


class Pipeline:
    """Stateful per-stream runner. One instance per scan stream; not thread-safe."""

    def __init__(self, backend: DetectorBackend, cfg: EncodingConfig = DEFAULT_CONFIG, nms_iou: float = 0.45):
        self.backend = backend
        self.cfg = cfg
        self.nms_iou = nms_iou
        self.buffer = FrameBuffer(3, cfg)
        self._next = 0

    def reset(self):
        self.buffer.clear()
        self._next = 0

    def step(self, scan: PolarScan) -> StepResult:
        clock = time.perf_counter_ns
        t0 = clock()
        index = self._next
        raster = encode_scan(scan, self.cfg)
        if len(self.buffer) == 0:
            self.buffer.fill(raster, scan.pose, index)
        else:
            self.buffer.push(raster, scan.pose, index)
        tensor = stack_rgb(self.buffer)
        t1 = clock()

        mid = self.buffer[1]
        cold = len({f.index for f in self.buffer}) < 3
        ctx = FrameContext(index, mid.index, mid.pose, cold)
        try:
            raw = self.backend(tensor, ctx)
        except BackendError as exc:
            if exc.frame_index is not None:
                raise
            raise BackendError(exc.message, index) from exc
        except Exception as exc:
            raise BackendError(f"{type(exc).__name__}: {exc}", index) from exc
        t2 = clock()

        dets = nms(raw, self.nms_iou, self.cfg)
        px = boxes_to_pixels(dets, self.cfg)
        t3 = clock()

        self._next += 1
        return StepResult(index, dets, px, cold, tensor, ctx, (t1 - t0, t2 - t1, t3 - t2, t3 - t0))

    def run(self, scans) -> list[StepResult]:
        return [self.step(s) for s in scans]


def pipeline_step(pipeline: Pipeline, scan: PolarScan) -> tuple[Pipeline, list[Detection]]:
    """Functional spelling of :meth:`Pipeline.step`."""
    result = pipeline.step(scan)
    return pipeline, result.detections


def timer_overhead_ns(samples: int = 1000) -> float:
    """Median cost of one ``perf_counter_ns`` call."""
    clock = time.perf_counter_ns
    diffs = np.empty(samples)
    for i in range(samples):
        a = clock()
        b = clock()
        diffs[i] = b - a
    return float(np.median(diffs))


@dataclass
class LatencyReport:
    """Per-frame stage times in milliseconds for the timed (post warm-up) frames."""

    backend: str
    warmup: int
    frames: int
    encode_ms: list[float]
    infer_ms: list[float]
    post_ms: list[float]
    e2e_ms: list[float]
    timer_overhead_ns: float
    platform: str = field(default_factory=lambda: f"{platform.system()} {platform.machine()}")

    @property
    def mean_encode_ms(self) -> float:
        return float(np.mean(self.encode_ms))

    @property
    def mean_infer_ms(self) -> float:
        return float(np.mean(self.infer_ms))

    @property
    def mean_post_ms(self) -> float:
        return float(np.mean(self.post_ms))

    @property
    def mean_e2e_ms(self) -> float:
        return float(np.mean(self.e2e_ms))

    @property
    def fps(self) -> float:
        """Derived throughput, ``1000 / mean end-to-end ms``."""
        return 1000.0 / self.mean_e2e_ms

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_ms"] = {
            "encode": self.mean_encode_ms,
            "infer": self.mean_infer_ms,
            "postprocess": self.mean_post_ms,
            "end_to_end": self.mean_e2e_ms,
        }
        d["fps"] = self.fps
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_table(self) -> str:
        return "\n".join(
            [
                f"{'Platform':<28}{'Mean Time (ms)':>16}{'Derived FPS':>14}",
                f"{self.platform + ' / ' + self.backend:<28}{self.mean_e2e_ms:>16.3f}{self.fps:>14.2f}",
                f"  encode {self.mean_encode_ms:.3f} ms, infer {self.mean_infer_ms:.3f} ms, "
                f"postprocess {self.mean_post_ms:.3f} ms over {self.frames} frames after {self.warmup} warm-up",
            ]
        )


def bench_latency(
    scans: Sequence[PolarScan],
    backend: DetectorBackend,
    frames: int = 100,
    warmup: int = 1,
    cfg: EncodingConfig = DEFAULT_CONFIG,
    pipeline: Pipeline | None = None,
) -> LatencyReport:
    """Run ``warmup`` untimed-for-the-mean frames, then time ``frames`` more.

    Frames run strictly one after another (batch size 1) and the garbage
    collector is paused while timing.
    """
    scans = list(scans)
    if frames < 1 or warmup < 0:
        raise InvalidArgument("frames must be >= 1 and warmup >= 0")
    if len(scans) < warmup + frames:
        raise InvalidArgument(f"need {warmup + frames} scans, got {len(scans)}")
    pipe = pipeline if pipeline is not None else Pipeline(backend, cfg)
    overhead = timer_overhead_ns()
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        results = [pipe.step(s) for s in scans[: warmup + frames]]
    finally:
        if gc_was_enabled:
            gc.enable()
    timed = np.array([r.times_ns for r in results[warmup:]], dtype=float) / 1e6
    return LatencyReport(
        backend=getattr(backend, "name", type(backend).__name__),
        warmup=warmup,
        frames=frames,
        encode_ms=timed[:, 0].tolist(),
        infer_ms=timed[:, 1].tolist(),
        post_ms=timed[:, 2].tolist(),
        e2e_ms=timed[:, 3].tolist(),
        timer_overhead_ns=overhead,
    )
