"""Command-line entry point: ``anchordet <memory|ablate|slots|hist|train|eval> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..detector import (
    DetectorConfig,
    evaluate,
    generate_scenes,
    load_config,
    load_scenes,
    model_from_checkpoint,
    save_checkpoint,
    save_scenes,
    train,
)
from .ablation import ABLATION_HEADER, run_ablation
from .dumps import confident_counts, dump_pattern_histograms, dump_prediction_slots, mean_sizes
from .memory import MEMORY_HEADER, bench_memory
from .spec import BenchSpec
from .tables import write_table

log = logging.getLogger("anchordet")

SUBCOMMAND_MODE = {"memory": "memory", "ablate": "ablation", "slots": "slots", "hist": "histogram",
                   "train": "train", "eval": "eval"}
FAILURE_MANIFEST = "failures.json"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of detector config overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--profile", choices=["toy", "paper-shapes"], default="toy")
    p.add_argument("-v", "--verbose", action="store_true")


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenes", type=Path, help="JSONL scene file; generated from --seed when omitted")
    p.add_argument("--n-scenes", type=int, default=16)
    p.add_argument("--max-objects", type=int, default=3)
    p.add_argument("--size-mode", choices=["uniform", "bimodal"], default="uniform")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchordet", description="Anchor-query detector benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("memory", help="attention memory table")
    _common(p)
    for key in ("nq", "h", "w", "m", "c"):
        p.add_argument(f"--{key}", type=int, nargs="+", help=f"{key} values of the shape grid")
    p.add_argument("--forward-only", action="store_true", help="skip backward (implied by paper-shapes)")

    p = sub.add_parser("ablate", help="train the ablation grid")
    _common(p)
    _scene_flags(p)
    p.add_argument("--steps", type=int, default=2000)

    p = sub.add_parser("slots", help="dump per-query predictions and anchors")
    _common(p)
    _scene_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("hist", help="per-pattern box-size histograms")
    _common(p)
    _scene_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--score-thresh", type=float, default=0.5)

    p = sub.add_parser("train", help="train one detector and write a checkpoint")
    _common(p)
    _scene_flags(p)
    p.add_argument("--steps", type=int, default=2000)

    p = sub.add_parser("eval", help="recall/precision of a checkpoint")
    _common(p)
    _scene_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--score-thresh", type=float)
    return parser


def _scenes(args, cfg: Optional[DetectorConfig] = None):
    if args.scenes:
        return load_scenes(args.scenes)
    kw = {}
    if cfg is not None:
        kw = dict(height=cfg.height, width=cfg.width, num_classes=cfg.num_classes)
    return generate_scenes(args.seed, args.n_scenes, max_objects=args.max_objects,
                           size_mode=args.size_mode, **kw)


def cmd_memory(spec: BenchSpec, args) -> list[dict]:
    rows, failures = bench_memory(spec.shapes, seed=spec.seed,
                                  backward=not (spec.forward_only or args.forward_only))
    write_table(spec.out_dir, "memory", MEMORY_HEADER, [r.as_list() for r in rows])
    return failures


def cmd_ablate(spec: BenchSpec, args) -> list[dict]:
    cfg = load_config(args.config, spec.profile)
    scenes = _scenes(args, cfg)
    results = run_ablation(cfg, scenes, args.steps, seed=spec.seed)
    write_table(spec.out_dir, "ablation", ABLATION_HEADER, [r.as_list() for r in results])
    return [{"cell": r.index, "name": r.cell.name, "status": r.status, "error": r.error}
            for r in results if not r.ok]


def cmd_slots(spec: BenchSpec, args) -> list[dict]:
    scenes = _scenes(args, model_from_checkpoint(args.checkpoint).cfg)
    out = dump_prediction_slots(args.checkpoint, scenes, spec.out_dir, seed=spec.seed)
    stat = out["locality"]
    write_table(spec.out_dir, "locality", ["own_median", "other_median", "local"],
                [[stat.own_median, stat.other_median, stat.local]])
    return []


def cmd_hist(spec: BenchSpec, args) -> list[dict]:
    scenes = _scenes(args, model_from_checkpoint(args.checkpoint).cfg)
    out = dump_pattern_histograms(args.checkpoint, scenes, spec.out_dir, args.score_thresh)
    counts = confident_counts(args.checkpoint, scenes, args.score_thresh)
    means = mean_sizes(out["histograms"])
    write_table(spec.out_dir, "pattern_summary", ["pattern", "confident", "mean_size"],
                [[p, counts[p], means[p]] for p in sorted(counts)])
    return []


def cmd_train(spec: BenchSpec, args) -> list[dict]:
    cfg = load_config(args.config, spec.profile)
    scenes = _scenes(args, cfg)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    save_scenes(spec.out_dir / "scenes.jsonl", scenes, cfg.num_classes)
    result = train(cfg, scenes, args.steps, seed=spec.seed, log_every=100)
    save_checkpoint(spec.out_dir / "checkpoint.json", result.model)
    keys = ["step", "total", "focal", "l1", "giou", "grad_norm", "lr"]
    write_table(spec.out_dir, "train_log", keys, [[e[k] for k in keys] for e in result.log])
    return []


def cmd_eval(spec: BenchSpec, args) -> list[dict]:
    scenes = _scenes(args, model_from_checkpoint(args.checkpoint).cfg)
    res = evaluate(args.checkpoint, scenes, args.iou_thresh, args.score_thresh)
    write_table(spec.out_dir, "eval", ["recall", "precision", "true_positives", "n_targets", "n_confident"],
                [[res.recall, res.precision, res.true_positives, res.n_targets, res.n_confident]])
    print(f"recall {res.recall:.4f} precision {res.precision:.4f} "
          f"({res.true_positives}/{res.n_targets} targets, {res.n_confident} confident)")
    return []


COMMANDS = {"memory": cmd_memory, "ablate": cmd_ablate, "slots": cmd_slots, "hist": cmd_hist,
            "train": cmd_train, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.profile == "paper-shapes" and args.command != "memory":
        parser.error("--profile paper-shapes is only available for the memory subcommand")
    try:
        spec = BenchSpec(mode=SUBCOMMAND_MODE[args.command], out_dir=args.out, seed=args.seed,
                         profile=args.profile, nq=getattr(args, "nq", None) or [],
                         h=getattr(args, "h", None) or [], w=getattr(args, "w", None) or [],
                         m=getattr(args, "m", None) or [], c=getattr(args, "c", None) or [],
                         overrides=json.loads(args.config.read_text()) if args.config else {})
    except (ValueError, OSError) as exc:
        parser.error(str(exc))

    failures = COMMANDS[args.command](spec, args)
    manifest = spec.out_dir / FAILURE_MANIFEST
    if failures:
        spec.out_dir.mkdir(parents=True, exist_ok=True)
        manifest.write_text(json.dumps({"command": args.command, "failures": failures}, indent=2, sort_keys=True))
        print(f"{len(failures)} failure(s); see {manifest}", file=sys.stderr)
        return 1
    if manifest.exists():
        manifest.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
