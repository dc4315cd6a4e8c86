"""Three-frame RGB encoding of 2D LiDAR scans for object detection.

Scans become 64x384 occupancy rasters; the rasters at t-2, t-1 and t are
stacked as the red, green and blue channels of one image.
"""
__version__ = "0.1.0"

from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, ObjectClass, PolarScan, Pose2D
from .labels import RasterBox, label_frame
from .metrics import Detection, EvalReport, evaluate
from .pipeline import LatencyReport, Pipeline, bench_latency
from .raster import angle_bin, encode_scan, range_bin, rasterize_scan
from .temporal import FrameBuffer, stack_rgb
from .world import Scenario, generate_scenario, scenario_split

__all__ = [
    "DEFAULT_CONFIG",
    "Detection",
    "EncodingConfig",
    "EvalReport",
    "FrameBuffer",
    "InvalidArgument",
    "LatencyReport",
    "ObjectClass",
    "Pipeline",
    "PolarScan",
    "Pose2D",
    "RasterBox",
    "Scenario",
    "angle_bin",
    "bench_latency",
    "encode_scan",
    "evaluate",
    "generate_scenario",
    "label_frame",
    "range_bin",
    "rasterize_scan",
    "scenario_split",
    "stack_rgb",
]
