"""Whole pipeline on synthetic inputs: key frames, build a library, generate, split, evaluate.

    python3 scripts/demo_pipeline.py /tmp/demo --count 50
"""
import argparse
import json
from pathlib import Path

import numpy as np

from synthforge.cli import main as cli
from synthforge.images import write_png
from synthforge.synthetic import build_backgrounds, build_library, patch_on_green


def run(*args):
    code = cli([str(a) for a in args])
    if code:
        raise SystemExit(f"{args[0]} exited with {code}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", type=Path)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    root = args.workdir
    rng = np.random.default_rng(0)

    frames = root / "frames" / "take01"
    frames.mkdir(parents=True, exist_ok=True)
    for k in range(5):
        write_png(frames / f"frame_{k:06d}.png", patch_on_green(rng, (240, 320))[0])
    run("key", "--frames", frames, "--out", root / "lib", "--class", "patch")

    build_library(root / "lib", rng, classes=("quad", "hex"), per_class=6, size_range=(300, 900))
    build_backgrounds(root / "bg", rng, n=4)
    config = {"paths": {"assets": "lib", "backgrounds": "bg", "output": "dataset"},
              "generate": {"master_seed": 7, "classes": ["quad", "hex"]}}
    (root / "config.json").write_text(json.dumps(config, indent=2))
    run("stats", "--lib", root / "lib", "--class", "quad", "--out", root / "quad_views.png")
    run("generate", "--config", root / "config.json", "--count", args.count, "--jobs", args.jobs)

    coco = root / "dataset" / "annotations.coco.json"
    run("split", "--coco", coco, "--ratio", "5:1", "--seed", 0)
    run("nshot", "--coco", coco, "--n", 5, "--out", root / "dataset" / "five_shot.json")

    # ground truth fed back as predictions; the report should be perfect
    doc = json.loads(coco.read_text())
    names = {c["id"]: c["name"] for c in doc["categories"]}
    files = {im["id"]: im["file_name"] for im in doc["images"]}
    with open(root / "preds.jsonl", "w") as fh:
        for a in doc["annotations"]:
            x, y, w, h = a["bbox"]
            fh.write(json.dumps({"image": files[a["image_id"]], "class": names[a["category_id"]],
                                 "box": [x, y, x + w, y + h], "confidence": 1.0}) + "\n")
    run("eval", "--pred", root / "preds.jsonl", "--gt", coco)


if __name__ == "__main__":
    main()
