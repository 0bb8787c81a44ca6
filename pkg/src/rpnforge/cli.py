"""Command-line front end.

Subcommands: synth, train, detect, eval, anchors, nms, gradcheck. Global
flags --config/--seed/--jobs; every config key is addressable through
repeated --set section.key=value flags (run with --help for the full list).
Verbosity comes from the RPNFORGE_LOG environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .anchors import dump_anchor_grid, generate_anchors
from .detector.model import Detector
from .evaluation import EvalConfig, emit_report, evaluate_dataset, report_csv
from .gradsuite import run_gradient_suite
from .kitti.labels import parse_label_file, write_detections
from .kitti.ppm import load_ppm
from .kitti.synthetic import write_scene_dataset
from .nms import ScoredBox, greedy_nms
from .nn.checkpoint import read_checkpoint
from .pipeline import detect_image, load_dataset, train_over_dataset
from .runconfig import RunConfig, config_keys, load_run_config, parse_config_text

log = logging.getLogger("rpnforge")


def _setup_logging():
    level = os.environ.get("RPNFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")


def _atomic_write(path: Path, data: str | bytes):
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data)
    tmp.replace(path)


def _parse_overrides(pairs: list[str]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects section.key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        parsed = parse_config_text(f"{key.strip()} = {value.strip()}")
        overrides[key.strip()] = parsed[""][key.strip()]
    return overrides


def _load_config(args) -> RunConfig:
    overrides = _parse_overrides(args.set or [])
    cfg = load_run_config(args.config, overrides)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    spec = cfg.synth.scene_spec(cfg.seed)
    stems = write_scene_dataset(args.out, spec, cfg.synth.images)
    print(f"wrote {len(stems)} scenes to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    samples = load_dataset(args.data)
    model = Detector(cfg.detector, np.random.default_rng(cfg.seed))
    rng = np.random.default_rng(cfg.seed + 1)
    rows, checkpoint = train_over_dataset(model, samples, cfg.train, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(out, checkpoint)
    _atomic_write(out.with_name("loss.csv"), "\n".join(rows) + "\n")
    finals = rows[-1].split(",") if len(rows) > 1 else None
    if finals:
        print(f"trained {len(rows) - 1} steps, final loss {finals[1]}; checkpoint {out}")
    else:
        print(f"trained 0 steps; checkpoint {out}")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    model = Detector(cfg.detector, np.random.default_rng(cfg.seed))
    model.load_param_dict(read_checkpoint(args.checkpoint))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_one(image_path: str):
        path = Path(image_path)
        image = load_ppm(path.read_bytes())
        dets = detect_image(model, image, score_thresh=cfg.detector.score_thresh)
        _atomic_write(out_dir / f"{path.stem}.txt", write_detections(dets))
        return path.stem, len(dets)

    if args.jobs > 1 and len(args.images) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, args.images))
    else:
        results = [run_one(p) for p in args.images]
    for stem, count in results:
        log.info("%s: %d detections", stem, count)
    print(f"wrote detections for {len(results)} images to {out_dir}")
    return 0


def _load_label_dir(path: Path) -> dict[str, list]:
    return {
        p.stem: parse_label_file(p.read_text())
        for p in sorted(path.glob("*.txt"))
    }


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    gts = _load_label_dir(Path(args.gts))
    dets = _load_label_dir(Path(args.dets))
    eval_cfg = EvalConfig(
        iou_default=cfg.eval.iou_default, iou_overrides=(("Car", cfg.eval.iou_car),)
    )
    classes = [c for c in cfg.detector.classes if c != "background"]
    provenance = {
        "anchor_variant": cfg.detector.anchor_variant,
        "checkpoint": args.checkpoint_id or "",
    }
    report = evaluate_dataset(dets, gts, classes, eval_cfg, provenance)
    csv_text, json_text, pr_files = emit_report(report)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "report.csv", csv_text)
    _atomic_write(out_dir / "report.json", json_text)
    for name, text in pr_files.items():
        _atomic_write(out_dir / name, text)
    print(report_csv(report), end="")
    return 0


def cmd_anchors(args) -> int:
    cfg = _load_config(args)
    grid = generate_anchors(cfg.detector.anchor_spec(), args.feat_h, args.feat_w)
    text = dump_anchor_grid(grid)
    if args.out:
        _atomic_write(Path(args.out), text)
        print(f"wrote {len(grid)} anchors to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_nms(args) -> int:
    _load_config(args)  # validates config/overrides even though unused
    labels = parse_label_file(Path(args.input).read_text())
    for i, l in enumerate(labels):
        if l.score is None:
            raise ValueError(f"{args.input} line {i + 1}: detection without score")
    boxes = [
        ScoredBox(box=l.bbox, score=l.score, class_id=0, source_index=i)
        for i, l in enumerate(labels)
    ]
    kept = greedy_nms(boxes, args.thresh)
    out = write_detections([labels[s.source_index] for s in kept])
    _atomic_write(Path(args.output), out)
    print(f"kept {len(kept)} of {len(labels)} boxes")
    return 0


def cmd_gradcheck(args) -> int:
    _load_config(args)
    started = time.monotonic()
    records = run_gradient_suite(seeds=args.seeds)
    failures = 0
    for r in sorted(records, key=lambda r: r.name):
        status = "ok" if r.passed else "FAIL"
        print(f"{status:4s} {r.name:26s} max_rel_err={r.max_err:.3e} tol={r.tol:.0e}")
        failures += 0 if r.passed else 1
    print(f"{len(records) - failures}/{len(records)} checks passed in {time.monotonic() - started:.1f}s")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpnforge",
        description="Two-stage detector toolkit: synthesize data, train, detect, evaluate.",
        epilog="Config keys for --set (flags > file > defaults):\n  "
        + "\n  ".join(config_keys()),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", default=None, help="config file path")
    parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for detect")
    parser.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override one config key (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("out", help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a detector over a dataset")
    p.add_argument("data", help="dataset directory (images/, labels/, dataset.txt)")
    p.add_argument("out", help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="write KITTI-format detections per image")
    p.add_argument("checkpoint", help="trained checkpoint")
    p.add_argument("out", help="output directory for detection files")
    p.add_argument("images", nargs="*", help="PPM image paths")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("dets", help="directory of detection files")
    p.add_argument("gts", help="directory of ground-truth label files")
    p.add_argument("out", help="output directory for reports")
    p.add_argument("--checkpoint-id", default=None, help="provenance tag for the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("anchors", help="dump an anchor grid")
    p.add_argument("feat_h", type=int)
    p.add_argument("feat_w", type=int)
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("nms", help="suppress a KITTI-format detections file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--thresh", type=float, default=0.3)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
