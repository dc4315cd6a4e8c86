"""Command-line entry point: ``scanstack {generate,eval,bench,viz}``.

Success exits 0 and prints a JSON summary on stdout. Failures exit nonzero
and print one JSON object ``{"error": kind, "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._io import atomic_write
from .core import InvalidArgument
from .world import GenerationFailed

EXIT_CODES = {
    "invalid-argument": 2,
    "io-error": 3,
    "generation-failed": 4,
    "backend-error": 5,
    "internal-error": 1,
}


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scanstack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"scanstack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate scenarios, episodes, tensors and labels")
    g.add_argument("--scenarios", type=int, default=160)
    g.add_argument("--positions", type=int, default=90)
    g.add_argument("--frames-per-episode", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", type=_ratios, default=(0.85, 0.10, 0.05), help="train,val,test ratios")
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--rotation-rate", type=float, default=30.0, help="deg/s of in-place rotation")
    g.add_argument("--from-manifest", type=Path, help="reuse the config of an existing manifest")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", type=Path, required=True)

    e = sub.add_parser("eval", help="evaluate a backend on one split of a dataset")
    e.add_argument("--dataset", type=Path, required=True)
    e.add_argument("--backend", default="oracle", help="oracle | geometric | model:PATH")
    e.add_argument("--split", default="test", help="train | val | test")
    e.add_argument("--interpolation", choices=("all", "coco101"), default="all")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", type=Path, help="report directory (default DATASET/eval/BACKEND-SPLIT)")

    b = sub.add_parser("bench", help="time the online loop on recorded episodes")
    b.add_argument("--episodes", type=Path, required=True, help="dataset directory or its episodes/ folder")
    b.add_argument("--backend", default="geometric", help="oracle | geometric | busywait[:MS] | model:PATH")
    b.add_argument("--frames", type=int, default=100)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--out", type=Path, help="write the LatencyReport JSON here")

    v = sub.add_parser("viz", help="render tensors with label overlays, or dump PR curves")
    v.add_argument("--tensor", type=Path, nargs="*", default=[], help="tensor PNG(s)")
    v.add_argument("--labels", type=Path, help="label directory or file to overlay")
    v.add_argument("--scale", type=int, default=4)
    v.add_argument("--report", type=Path, help="report.json to turn into a PR-curve CSV")
    v.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def cmd_generate(args) -> dict:
    from .dataset import DatasetConfig, RunManifest, generate_dataset

    if args.from_manifest:
        manifest = RunManifest.load(args.from_manifest)
        dcfg, enc = manifest.config, manifest.encoding
        result = generate_dataset(args.out, dcfg, enc, workers=args.workers)
    else:
        dcfg = DatasetConfig(
            scenarios=args.scenarios,
            positions=args.positions,
            frames_per_episode=args.frames_per_episode,
            seed=args.seed,
            split=args.split,
            noise_sigma=args.noise_sigma,
            rotation_rate=args.rotation_rate,
        )
        result = generate_dataset(args.out, dcfg, workers=args.workers)
    return {"out": str(args.out), **result.counts}


def cmd_eval(args) -> dict:
    from .dataset import evaluate_split, write_eval_outputs

    result = evaluate_split(args.dataset, args.backend, args.split, interpolation=args.interpolation, workers=args.workers)
    tag = args.backend.replace(":", "_").replace("/", "_")
    out = args.out or args.dataset / "eval" / f"{tag}-{args.split}"
    paths = write_eval_outputs(result, out)
    print(result.report.to_table(), file=sys.stderr)
    return {
        "split": result.split,
        "backend": result.backend,
        "frames": result.frames,
        "map50": result.report.map50,
        "map50_95": result.report.map50_95,
        "outputs": [str(p) for p in paths],
    }


def _bench_stream(root: Path, needed: int):
    """Episodes in sorted order, concatenated and cycled to ``needed`` scans."""
    from .dataset import list_episodes, load_scenario
    from .sim import Episode

    if root.name == "episodes" and not (root / "episodes").is_dir():
        root = root.parent
    if not (root / "episodes").is_dir():
        raise FileNotFoundError(f"no episodes/ directory under {root}")
    found = list_episodes(root)
    if not found:
        raise FileNotFoundError(f"no episodes in {root / 'episodes'}")
    scans, scenarios = [], []
    cache = {}
    i = 0
    while len(scans) < needed:
        sid, pos = found[i % len(found)]
        if sid not in cache:
            scen = root / "scenarios"
            cache[sid] = load_scenario(root, sid) if scen.is_dir() else None
        ep = Episode.load(root / "episodes", f"s{sid:04d}_p{pos:03d}")
        scans.extend(ep.frames)
        scenarios.extend([cache[sid]] * len(ep.frames))
        i += 1
    return scans[:needed], scenarios[:needed], min(i, len(found))


def cmd_bench(args) -> dict:
    from .backends import make_backend
    from .pipeline import bench_latency

    needed = args.warmup + args.frames
    if args.frames < 1 or args.warmup < 0:
        raise InvalidArgument("--frames must be >= 1 and --warmup >= 0")
    scans, scenarios, n_episodes = _bench_stream(args.episodes, needed)
    if args.backend.partition(":")[0] == "oracle" and any(s is None for s in scenarios):
        raise InvalidArgument("the oracle backend needs the dataset's scenarios/ directory")
    backend = make_backend(args.backend, scenario=scenarios, poses=[s.pose for s in scans])
    report = bench_latency(scans, backend, frames=args.frames, warmup=args.warmup)
    print(report.to_table(), file=sys.stderr)
    doc = report.to_dict()
    doc["episodes_used"] = n_episodes
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(args.out, json.dumps(doc, indent=1))
    return {k: doc[k] for k in ("backend", "warmup", "frames", "mean_ms", "fps", "episodes_used")}


def cmd_viz(args) -> dict:
    from .labels import read_yolo_labels
    from .metrics import EvalReport
    from .temporal import load_tensor_png
    from .viz import render_tensor, save_image

    if not args.tensor and not args.report:
        raise InvalidArgument("give --tensor and/or --report")
    args.out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in args.tensor:
        if not path.exists():
            raise FileNotFoundError(f"no tensor at {path}")
        boxes = []
        if args.labels is not None:
            label = args.labels / f"{path.stem}.txt" if args.labels.is_dir() else args.labels
            if not label.exists():
                raise FileNotFoundError(f"no label file at {label}")
            boxes = read_yolo_labels(label)
        img = render_tensor(load_tensor_png(path), boxes, args.scale)
        written.append(save_image(img, args.out / f"{path.stem}_viz.png"))
    if args.report:
        if not args.report.exists():
            raise FileNotFoundError(f"no report at {args.report}")
        doc = json.loads(args.report.read_text())
        keep = {k: doc[k] for k in EvalReport.__dataclass_fields__ if k in doc}
        report = EvalReport.from_dict(keep)
        written.append(atomic_write(args.out / "pr_curve.csv", report.pr_curve_csv()))
    return {"outputs": [str(p) for p in written]}


COMMANDS = {"generate": cmd_generate, "eval": cmd_eval, "bench": cmd_bench, "viz": cmd_viz}


def _error_kind(exc: BaseException) -> str:
    from .pipeline import BackendError

    if isinstance(exc, (InvalidArgument, ValueError)):
        return "invalid-argument"
    if isinstance(exc, OSError):
        return "io-error"
    if isinstance(exc, GenerationFailed):
        return "generation-failed"
    if isinstance(exc, BackendError):
        return "backend-error"
    return "internal-error"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = COMMANDS[args.command](args)
    except Exception as exc:
        kind = _error_kind(exc)
        err = {"error": kind, "message": str(exc), "command": args.command}
        if isinstance(exc, GenerationFailed) and exc.seed is not None:
            err["seed"] = exc.seed
        print(json.dumps(err), file=sys.stderr)
        return EXIT_CODES[kind]
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
