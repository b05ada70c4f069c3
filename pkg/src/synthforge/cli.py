"""Synthetic training-data pipeline: keying, sync, viewpoint stats, generation, splits, evaluation.

Exit codes: 0 ok, 2 config/usage error, 3 I/O, 4 empty result, 5 degenerate input.
Logging goes to stderr at the level named by ``SYNTHFORGE_LOG``
(error, warn, info, debug); machine-readable output goes to stdout or files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, canon
from .annotate import load_manifest
from .assetlib import export_heatmap, load_library, viewing_histogram
from .errors import ConfigError, EmptyForegroundError, SynthForgeError
from .images import list_frames, list_images, read_image
from .metrics import (
    SegCounts,
    evaluate_detection,
    load_predictions_jsonl,
    load_predictions_yolo,
    seg_report,
    segmentation_counts,
)
from .mocap import angular_speed_signal, frame_motion_signal, parse_pose_track, sync_offset, video_series
from .pipeline import config_from_manifest, generate_dataset, key_frames, load_tool_config
from .sampler import coco_subset, load_coco, select_nshot, split

log = logging.getLogger("synthforge")

LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
          "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = LEVELS.get(os.environ.get("SYNTHFORGE_LOG", "warn").lower(), logging.WARNING)
    root = logging.getLogger("synthforge")
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def _print_json(obj) -> None:
    sys.stdout.write(canon.dumps(obj))


def cmd_key(args) -> int:
    config = load_tool_config(args.config, args.set)
    obj = cam = None
    if (args.pose is None) != (args.camera is None):
        raise ConfigError("--pose and --camera must be given together")
    if args.pose is not None:
        obj = parse_pose_track(args.pose, "object")
        cam = parse_pose_track(args.camera, "camera")
    result = key_frames(args.frames, args.out, args.class_label, config.keyer, obj, cam, args.offset, args.fps)
    print(f"stored {len(result.stored)} assets; {result.empty_frames} empty frames; "
          f"{result.unposed_frames} frames without pose", file=sys.stderr)
    if not result.stored:
        raise EmptyForegroundError("no assets extracted")
    return 0


def cmd_sync(args) -> int:
    track = parse_pose_track(args.pose, "camera")
    mocap = angular_speed_signal(track, args.rate or track.rate)
    video = video_series(frame_motion_signal(list_frames(args.frames)), args.fps)
    result = sync_offset(mocap, video, args.window)
    _print_json(result.to_json())
    return 0


def cmd_stats(args) -> int:
    lib = load_library(args.lib)
    hist = viewing_histogram(lib, args.class_label, args.n_az, args.n_el)
    export_heatmap(hist, args.out)
    _print_json({"class": args.class_label, "posed": hist.total, "excluded": hist.excluded,
                 "occupied_bins": int(np.count_nonzero(hist.counts)), "max_count": int(hist.counts.max())})
    return 0


def cmd_generate(args) -> int:
    if args.replay is not None:
        manifest = load_manifest(args.replay)
        config = config_from_manifest(manifest)
        out = args.out
    else:
        manifest = None
        config = load_tool_config(args.config, args.set)
        out = args.out or config.output
        if args.count is None:
            raise ConfigError("--count is required unless --replay is given")
        if args.count < 0:
            raise ConfigError("--count must be >= 0")
    if out is None:
        raise ConfigError("no output directory (use --out or paths.output)")
    result = generate_dataset(config, args.count or 0, out, args.jobs, replay=manifest)
    print(f"generated {result.succeeded} samples, {result.failed} failed", file=sys.stderr)
    return 0 if result.ok else 4


def _parse_ratio(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"ratio must look like 5:1, got {text!r}") from None
    return a, b


def cmd_nshot(args) -> int:
    labeled, doc = load_coco(args.coco)
    subset = select_nshot(labeled, args.n, np.random.default_rng(args.seed))
    canon.write(args.out, coco_subset(doc, subset))
    _print_json({"images": len(subset), "class_counts": subset.class_counts()})
    return 0


def cmd_split(args) -> int:
    ratio_train, ratio_val = _parse_ratio(args.ratio)
    labeled, doc = load_coco(args.coco)
    train, val = split(labeled, ratio_train, ratio_val, np.random.default_rng(args.seed))
    coco = Path(args.coco)
    out = Path(args.out) if args.out else coco.parent
    out.mkdir(parents=True, exist_ok=True)
    stem = coco.name.removesuffix(".json")
    canon.write(out / f"{stem}.train.json", coco_subset(doc, train))
    canon.write(out / f"{stem}.val.json", coco_subset(doc, val))
    _print_json({"train": len(train), "val": len(val)})
    return 0


def _mask_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {p.name: p for p in list_images(path)}
    return {path.name: path}


def cmd_eval(args) -> int:
    if args.seg:
        preds, gts = _mask_files(Path(args.pred)), _mask_files(Path(args.gt))
        if len(preds) == 1 and len(gts) == 1:
            pairs = [(next(iter(preds.values())), next(iter(gts.values())))]
        else:
            missing = sorted(set(gts) - set(preds))
            if missing:
                log.warning("%d ground-truth masks have no prediction; counted as empty", len(missing))
            pairs = [(preds.get(k), gts[k]) for k in sorted(gts)]
        total = SegCounts()
        for pred_path, gt_path in pairs:
            gt = read_image(gt_path) > 0
            gt = gt.any(axis=2) if gt.ndim == 3 else gt
            pred = np.zeros_like(gt) if pred_path is None else read_image(pred_path) > 0
            pred = pred.any(axis=2) if pred.ndim == 3 else pred
            total = total + segmentation_counts(pred, gt)
        report = seg_report(total)
    else:
        labeled, doc = load_coco(args.gt)
        pred_path = Path(args.pred)
        preds = load_predictions_yolo(pred_path, doc) if pred_path.is_dir() else load_predictions_jsonl(pred_path)
        report = evaluate_detection(preds, labeled, args.iou, args.conf)
    print(report.table())
    if args.json:
        canon.write(args.json, report.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("key", help="key green-screen frames into a foreground asset library")
    k.add_argument("--frames", required=True, help="directory of frame_%%06d.png files")
    k.add_argument("--out", required=True, help="asset library root")
    k.add_argument("--class", dest="class_label", required=True, help="class label of the object")
    k.add_argument("--pose", help="object (turntable) pose CSV")
    k.add_argument("--camera", help="camera pose CSV")
    k.add_argument("--offset", type=float, default=0.0, help="mocap minus video time, seconds (default 0)")
    k.add_argument("--fps", type=float, default=30.0, help="video frame rate (default 30)")
    k.add_argument("--config", help="JSON tool config (keyer section is used)")
    k.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="config override")
    k.set_defaults(func=cmd_key)

    s = sub.add_parser("sync", help="estimate the mocap/video time offset from the rapid rotation")
    s.add_argument("--pose", required=True, help="camera pose CSV")
    s.add_argument("--frames", required=True, help="directory of frame_%%06d.png files")
    s.add_argument("--fps", type=float, required=True, help="video frame rate")
    s.add_argument("--window", type=float, default=10.0, help="search window, +/- seconds (default 10)")
    s.add_argument("--rate", type=float, default=None, help="mocap resample rate in Hz (default: track rate)")
    s.set_defaults(func=cmd_sync)

    st = sub.add_parser("stats", help="viewing-direction heatmap of one class")
    st.add_argument("--lib", required=True, help="asset library root")
    st.add_argument("--class", dest="class_label", required=True, help="class label")
    st.add_argument("--out", required=True, help="output heatmap PNG")
    st.add_argument("--n-az", type=int, default=36, help="azimuth bins (default 36)")
    st.add_argument("--n-el", type=int, default=18, help="sin-elevation bins (default 18)")
    st.set_defaults(func=cmd_stats)

    g = sub.add_parser("generate", help="render an annotated synthetic dataset")
    g.add_argument("--config", help="JSON tool config")
    g.add_argument("--count", type=int, help="number of samples")
    g.add_argument("--out", help="output directory (default paths.output)")
    g.add_argument("--jobs", type=int, default=None, help="worker processes (default: number of cores)")
    g.add_argument("--replay", help="re-render the recipes recorded in a manifest")
    g.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="config override")
    g.set_defaults(func=cmd_generate)

    n = sub.add_parser("nshot", help="N-shot subset of a COCO file")
    n.add_argument("--coco", required=True, help="input COCO JSON")
    n.add_argument("--n", type=int, required=True, help="minimum instances per class")
    n.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    n.add_argument("--out", required=True, help="output COCO JSON")
    n.set_defaults(func=cmd_nshot)

    sp = sub.add_parser("split", help="random train/validation split of a COCO file")
    sp.add_argument("--coco", required=True, help="input COCO JSON")
    sp.add_argument("--ratio", default="5:1", help="train:val ratio (default 5:1)")
    sp.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sp.add_argument("--out", help="output directory (default: next to the input)")
    sp.set_defaults(func=cmd_split)

    e = sub.add_parser("eval", help="evaluate detections or segmentation masks")
    e.add_argument("--pred", required=True, help="JSON-lines detections, YOLO label dir, or mask PNG/dir with --seg")
    e.add_argument("--gt", required=True, help="ground-truth COCO JSON, or mask PNG/dir with --seg")
    e.add_argument("--iou", type=float, default=0.5, help="IoU match threshold (default 0.5)")
    e.add_argument("--conf", type=float, default=0.5, help="confidence threshold for P/R/F1 (default 0.5)")
    e.add_argument("--seg", action="store_true", help="evaluate binary segmentation masks")
    e.add_argument("--json", help="also write the report as JSON")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SynthForgeError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return 3
    except json.JSONDecodeError as exc:
        log.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
