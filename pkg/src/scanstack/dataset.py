"""On-disk datasets: generation, the run manifest and split-level evaluation.

Layout of a dataset directory::

    scenarios/s0000.json            one scenario per file
    episodes/s0000_p000.bin/.json   float32 ranges + sidecar, one per episode
    tensors/s0000_p000_f02.png      RGB stack whose newest frame is f02
    labels/s0000_p000_f02.txt       YOLO labels of that stack's middle frame
    splits.json
    manifest.json

Scenario ``i`` is generated from seed ``root_seed + i``; the noise stream of
episode ``(i, p)`` is seeded with ``[root_seed + i, p]``.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write
from .core import DEFAULT_CONFIG, EncodingConfig, InvalidArgument, PolarScan
from .labels import label_frame, read_yolo_labels, write_yolo_labels
from .metrics import EvalReport, evaluate
from .pipeline import Pipeline
from .raster import encode_scan
from .sim import Episode, build_segment_world, simulate_episode
from .temporal import save_tensor_png, stack_rasters
from .world import SPLITS, GenerationConfig, Scenario, SplitAssignment, generate_scenario, scenario_split

MANIFEST_SCHEMA = "scanstack.manifest/1"


def scenario_seed(root_seed: int, index: int) -> int:
    return root_seed + index


def episode_seed(root_seed: int, index: int, position: int) -> int:
    return int(np.random.SeedSequence([scenario_seed(root_seed, index), position]).generate_state(1)[0])


def scenario_stem(sid: int) -> str:
    return f"s{sid:04d}"


def episode_stem(sid: int, position: int) -> str:
    return f"s{sid:04d}_p{position:03d}"


def sample_stem(sid: int, position: int, frame: int) -> str:
    return f"s{sid:04d}_p{position:03d}_f{frame:02d}"


def expected_samples(n_scenarios: int, positions: int, frames_per_episode: int) -> int:
    """Stacks in a dataset: every episode of F frames yields F - 2 full stacks."""
    return n_scenarios * positions * max(frames_per_episode - 2, 0)


@dataclass(frozen=True)
class DatasetConfig:
    scenarios: int = 160
    positions: int = 90
    frames_per_episode: int = 5
    seed: int = 0
    split: tuple[float, float, float] = (0.85, 0.10, 0.05)
    noise_sigma: float = 0.0
    rotation_rate: float = 30.0
    generation: GenerationConfig = GenerationConfig()

    def __post_init__(self):
        if self.scenarios < 1 or self.positions < 1:
            raise InvalidArgument("need at least one scenario and one position")
        if self.frames_per_episode < 3:
            raise InvalidArgument("frames per episode must be >= 3")
        if self.noise_sigma < 0:
            raise InvalidArgument("noise sigma must be >= 0")

    @property
    def scenario_generation(self) -> GenerationConfig:
        return dataclasses.replace(self.generation, n_waypoints=self.positions)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        gen = {k: tuple(v) if isinstance(v, list) else v for k, v in d.pop("generation", {}).items()}
        d["split"] = tuple(d.get("split", (0.85, 0.10, 0.05)))
        return cls(generation=GenerationConfig(**gen), **d)


@dataclass
class RunManifest:
    """Everything needed to regenerate a dataset, plus every file it produced.

    Paths are relative to the dataset directory.
    """

    config: DatasetConfig
    encoding: EncodingConfig = DEFAULT_CONFIG
    tool_version: str = __version__
    scenario_seeds: list[int] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    samples: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "tool_version": self.tool_version,
            "config": self.config.to_dict(),
            "encoding": dataclasses.asdict(self.encoding),
            "seeds": {"root": self.config.seed, "scenarios": self.scenario_seeds},
            "counts": self.counts,
            "artifacts": self.artifacts,
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        if d.get("schema") != MANIFEST_SCHEMA:
            raise InvalidArgument(f"unsupported manifest schema {d.get('schema')!r}")
        return cls(
            config=DatasetConfig.from_dict(d["config"]),
            encoding=EncodingConfig(**d.get("encoding", {})),
            tool_version=d.get("tool_version", ""),
            scenario_seeds=list(d["seeds"]["scenarios"]),
            counts=dict(d.get("counts", {})),
            artifacts=list(d.get("artifacts", [])),
            samples=list(d.get("samples", [])),
        )

    def save(self, directory) -> Path:
        return atomic_write(Path(directory) / "manifest.json", json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"no manifest at {path}")
        return cls.from_dict(json.loads(path.read_text()))


def as_stored(episode: Episode) -> Episode:
    """The episode as it reads back from disk (ranges rounded to float32)."""
    frames = [
        PolarScan(f.ranges.astype("<f4").astype(float), f.pose, f.t, f.bearings) for f in episode.frames
    ]
    return dataclasses.replace(episode, frames=frames)


def episode_stacks(scenario: Scenario, episode: Episode, cfg: EncodingConfig = DEFAULT_CONFIG):
    """Yield ``(newest_frame, tensor, labels)`` for every full stack of an episode."""
    rasters = [encode_scan(f, cfg) for f in episode.frames]
    for k in range(2, len(rasters)):
        tensor = stack_rasters(rasters[k - 2], rasters[k - 1], rasters[k])
        yield k, tensor, label_frame(scenario, episode.frames[k - 1].pose, cfg)


def _write_scenario(args) -> list[dict]:
    """Worker: simulate, encode and label every episode of one scenario."""
    out, dcfg, cfg, sid, seed, split = args
    out = Path(out)
    scenario = generate_scenario(seed, dcfg.scenario_generation, sid)
    scenario.save(out / "scenarios" / f"{scenario_stem(sid)}.json")
    world = build_segment_world(scenario)
    rows = []
    for pos in range(dcfg.positions):
        ep = simulate_episode(
            scenario,
            pos,
            dcfg.frames_per_episode,
            dcfg.rotation_rate,
            dcfg.noise_sigma,
            episode_seed(dcfg.seed, sid, pos),
            cfg,
            world,
        )
        ep = as_stored(ep)
        ep.save(out / "episodes", episode_stem(sid, pos))
        for k, tensor, boxes in episode_stacks(scenario, ep, cfg):
            stem = sample_stem(sid, pos, k)
            save_tensor_png(tensor, out / "tensors" / f"{stem}.png")
            write_yolo_labels(boxes, out / "labels" / f"{stem}.txt")
            rows.append(
                {
                    "tensor": f"tensors/{stem}.png",
                    "label": f"labels/{stem}.txt",
                    "scenario_id": sid,
                    "position": pos,
                    "frame": k,
                    "split": split,
                }
            )
    return rows


def generate_dataset(
    out,
    dcfg: DatasetConfig = DatasetConfig(),
    cfg: EncodingConfig = DEFAULT_CONFIG,
    workers: int = 1,
) -> RunManifest:
    """Write a full dataset under ``out`` and return its manifest.

    With ``workers > 1`` scenarios are processed in parallel; output does not
    depend on the worker count. Fewer than three scenarios all go to train.
    """
    out = Path(out)
    for sub in ("scenarios", "episodes", "tensors", "labels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    ids = list(range(dcfg.scenarios))
    if len(ids) < 3:
        # too few scenarios to hold out; everything trains
        split = SplitAssignment({i: "train" for i in ids})
    else:
        split = scenario_split(ids, dcfg.split, dcfg.seed)
    _check_disjoint(split)
    atomic_write(out / "splits.json", json.dumps(split.to_dict(), indent=1))

    seeds = [scenario_seed(dcfg.seed, i) for i in ids]
    jobs = [(str(out), dcfg, cfg, i, seeds[i], split.mapping[i]) for i in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_scenario = list(pool.map(_write_scenario, jobs))
    else:
        per_scenario = [_write_scenario(j) for j in jobs]
    samples = [row for rows in per_scenario for row in rows]

    artifacts = ["splits.json"]
    for sid in ids:
        artifacts.append(f"scenarios/{scenario_stem(sid)}.json")
        for pos in range(dcfg.positions):
            artifacts += [f"episodes/{episode_stem(sid, pos)}.bin", f"episodes/{episode_stem(sid, pos)}.json"]
    for row in samples:
        artifacts += [row["tensor"], row["label"]]

    manifest = RunManifest(
        config=dcfg,
        encoding=cfg,
        scenario_seeds=seeds,
        counts={
            "scenarios": dcfg.scenarios,
            "positions": dcfg.positions,
            "frames_per_episode": dcfg.frames_per_episode,
            "episodes": dcfg.scenarios * dcfg.positions,
            "samples": len(samples),
            "splits": dict(zip(SPLITS, split.sizes())),
        },
        artifacts=artifacts,
        samples=samples,
    )
    manifest.save(out)
    return manifest


def regenerate(manifest: RunManifest | str | os.PathLike, out, workers: int = 1) -> RunManifest:
    """Rebuild a dataset from a manifest's config snapshot."""
    if not isinstance(manifest, RunManifest):
        manifest = RunManifest.load(manifest)
    return generate_dataset(out, manifest.config, manifest.encoding, workers)


def _check_disjoint(split: SplitAssignment):
    seen: dict[int, str] = {}
    for s in SPLITS:
        for i in split.ids(s):
            if i in seen:
                raise InvalidArgument(f"scenario {i} is in both {seen[i]} and {s}")
            seen[i] = s


def load_splits(directory) -> SplitAssignment:
    path = Path(directory) / "splits.json"
    if not path.exists():
        raise FileNotFoundError(f"no splits file at {path}")
    split = SplitAssignment.from_dict(json.loads(path.read_text()))
    _check_disjoint(split)
    return split


def load_scenario(directory, sid: int) -> Scenario:
    return Scenario.load(Path(directory) / "scenarios" / f"{scenario_stem(sid)}.json")


def list_episodes(directory) -> list[tuple[int, int]]:
    """``(scenario_id, position)`` of every episode file, sorted."""
    found = []
    for p in sorted((Path(directory) / "episodes").glob("s*_p*.json")):
        s, pos = p.stem.split("_")
        found.append((int(s[1:]), int(pos[1:])))
    return found


@dataclass
class SplitEvaluation:
    report: EvalReport
    split: str
    backend: str
    scenario_ids: list[int]
    frames: int


def _eval_episode(args):
    directory, sid, pos, backend_name, cfg, nms_iou = args
    from .backends import make_backend

    directory = Path(directory)
    scenario = load_scenario(directory, sid)
    ep = Episode.load(directory / "episodes", episode_stem(sid, pos))
    backend = make_backend(backend_name, scenario=scenario, poses=ep.poses, cfg=cfg)
    pipe = Pipeline(backend, cfg, nms_iou)
    dets, gts = [], []
    for result in pipe.run(ep.frames):
        if result.cold_start:
            continue
        label = directory / "labels" / f"{sample_stem(sid, pos, result.index)}.txt"
        if not label.exists():
            raise FileNotFoundError(f"missing label file {label}")
        dets.append(result.detections)
        gts.append(read_yolo_labels(label))
    return dets, gts


def evaluate_split(
    directory,
    backend: str = "oracle",
    split: str = "test",
    cfg: EncodingConfig = DEFAULT_CONFIG,
    interpolation: str = "all",
    nms_iou: float = 0.45,
    workers: int = 1,
) -> SplitEvaluation:
    """Run the pipeline over every episode of one split against its stored labels.

    Cold-start frames (fewer than three distinct scans) are not scored.
    """
    directory = Path(directory)
    splits = load_splits(directory)
    if split not in SPLITS:
        raise InvalidArgument(f"unknown split {split!r}; expected one of {SPLITS}")
    ids = set(splits.ids(split))
    if not ids:
        raise InvalidArgument(f"split {split!r} is empty")
    episodes = [(s, p) for s, p in list_episodes(directory) if s in ids]
    jobs = [(str(directory), s, p, backend, cfg, nms_iou) for s, p in episodes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_eval_episode, jobs))
    else:
        parts = [_eval_episode(j) for j in jobs]
    dets = [d for part in parts for d in part[0]]
    gts = [g for part in parts for g in part[1]]
    report = evaluate(dets, gts, interpolation=interpolation, cfg=cfg)
    return SplitEvaluation(report, split, backend, sorted(ids), len(gts))


def write_eval_outputs(result: SplitEvaluation, out) -> list[Path]:
    """``report.json``, ``report.txt`` and ``pr_curve.csv`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    doc = result.report.to_dict()
    doc.update({"split": result.split, "backend": result.backend, "scenario_ids": result.scenario_ids, "frames": result.frames})
    return [
        atomic_write(out / "report.json", json.dumps(doc, indent=1)),
        atomic_write(out / "report.txt", result.report.to_table() + "\n"),
        atomic_write(out / "pr_curve.csv", result.report.pr_curve_csv()),
    ]
