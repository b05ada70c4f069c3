"""Annotation emitters (COCO JSON, YOLO text, 16-bit instance masks) and manifests."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, canon
from .errors import CapacityError, FormatError, IntegrityError, NotFoundError
from .images import write_png

MAX_INSTANCES = 65_534

Box = tuple[int, int, int, int]


def bbox_from_mask(mask: np.ndarray) -> Box | None:
    """Inclusive ``(x_min, y_min, x_max, y_max)`` of the true pixels, or None if empty."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


@dataclass(frozen=True)
class InstanceSummary:
    class_label: str
    visible_box: Box
    amodal_box: Box
    area: int
    scale: float = 0.0
    asset_id: str = ""

    def to_dict(self) -> dict:
        return {"class": self.class_label, "visible_box": list(self.visible_box),
                "amodal_box": list(self.amodal_box), "area": self.area,
                "scale": self.scale, "asset_id": self.asset_id}

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSummary":
        return cls(d["class"], tuple(d["visible_box"]), tuple(d["amodal_box"]), d["area"],
                   d.get("scale", 0.0), d.get("asset_id", ""))


@dataclass(frozen=True)
class SampleAnnotation:
    """Per-image annotation without pixel data; what the dataset-level emitters need."""

    sample_index: int
    file_name: str
    width: int
    height: int
    instances: list[InstanceSummary] = field(default_factory=list)

    @property
    def stem(self) -> str:
        return Path(self.file_name).stem


def _summaries(samples) -> list[SampleAnnotation]:
    out = [s if isinstance(s, SampleAnnotation) else s.summary() for s in samples]
    return sorted(out, key=lambda a: a.sample_index)


def coco_document(samples: Iterable, classes: Sequence[str], image_dir: str = "images",
                  mask_dir: str = "masks") -> dict:
    cat_ids = {c: i for i, c in enumerate(classes, start=1)}
    images, annotations = [], []
    ann_id = 1
    for img_id, ann in enumerate(_summaries(samples), start=1):
        images.append({"id": img_id, "file_name": f"{image_dir}/{ann.file_name}",
                       "width": ann.width, "height": ann.height, "sample_index": ann.sample_index})
        for k, inst in enumerate(ann.instances, start=1):
            if inst.class_label not in cat_ids:
                raise FormatError(f"class {inst.class_label!r} not in the class list")
            x0, y0, x1, y1 = inst.visible_box
            annotations.append({
                "id": ann_id, "image_id": img_id, "category_id": cat_ids[inst.class_label],
                "bbox": [float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1)],
                "area": int(inst.area), "iscrowd": 0,
                "mask_file": f"{mask_dir}/{ann.stem}.png", "mask_value": k,
            })
            ann_id += 1
    categories = [{"id": i, "name": c} for c, i in cat_ids.items()]
    return {"images": images, "annotations": annotations, "categories": categories}


def emit_coco(samples: Iterable, path, classes: Sequence[str], image_dir: str = "images",
              mask_dir: str = "masks") -> dict:
    doc = coco_document(samples, classes, image_dir, mask_dir)
    canon.write(path, doc)
    return doc


def yolo_lines(ann: SampleAnnotation, classes: Sequence[str]) -> list[str]:
    index = {c: i for i, c in enumerate(classes)}
    lines = []
    for inst in ann.instances:
        x0, y0, x1, y1 = inst.visible_box
        w, h = x1 - x0 + 1, y1 - y0 + 1
        cx, cy = x0 + w / 2.0, y0 + h / 2.0
        lines.append(f"{index[inst.class_label]} {cx / ann.width:.6f} {cy / ann.height:.6f} "
                     f"{w / ann.width:.6f} {h / ann.height:.6f}")
    return lines


def write_yolo(ann: SampleAnnotation, directory, classes: Sequence[str]) -> Path:
    path = Path(directory) / f"{ann.stem}.txt"
    lines = yolo_lines(ann, classes)
    path.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")
    return path


def write_classes(directory, classes: Sequence[str]) -> None:
    (Path(directory) / "classes.txt").write_text("".join(c + "\n" for c in classes), encoding="utf-8")


def emit_yolo(samples: Iterable, directory, classes: Sequence[str]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ann in _summaries(samples):
        write_yolo(ann, directory, classes)
    write_classes(directory, classes)


def parse_yolo(path, width: int, height: int) -> list[tuple[int, float, float, float, float]]:
    """Read YOLO lines back as ``(class_idx, x_min, y_min, x_max, y_max)`` in continuous pixels."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        k, cx, cy, w, h = line.split()[:5]
        cx, cy, w, h = float(cx) * width, float(cy) * height, float(w) * width, float(h) * height
        out.append((int(k), cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
    return out


def mask_image(sample) -> np.ndarray:
    """16-bit label image: 0 background, instance k (1-based draw order) is k."""
    if len(sample.instances) > MAX_INSTANCES:
        raise CapacityError(f"{len(sample.instances)} instances exceed the 16-bit mask capacity")
    h, w = sample.image.shape[:2]
    out = np.zeros((h, w), dtype=np.uint16)
    for k, inst in enumerate(sample.instances, start=1):
        out[inst.visible_mask] = k
    return out


def write_mask(sample, directory) -> Path:
    path = Path(directory) / f"sample_{sample.sample_index:08d}.png"
    write_png(path, mask_image(sample))
    return path


def emit_masks(samples: Iterable, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in samples:
        write_mask(s, directory)


# -- manifest ------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    config: dict
    master_seed: int
    samples: list[dict] = field(default_factory=list)
    tool_version: str = __version__
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = canon.digest(self.config)
        seen = set()
        for rec in self.samples:
            if rec["sample_index"] in seen:
                raise IntegrityError(f"duplicate sample index {rec['sample_index']}")
            seen.add(rec["sample_index"])

    def to_dict(self) -> dict:
        return {"config": self.config, "config_hash": self.config_hash, "master_seed": self.master_seed,
                "tool_version": self.tool_version,
                "samples": sorted(self.samples, key=lambda r: r["sample_index"])}


def emit_manifest(manifest: DatasetManifest, path) -> None:
    canon.write(path, manifest.to_dict())


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such manifest: {path}")
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if canon.digest(d["config"]) != d["config_hash"]:
        raise IntegrityError(f"{path}: config hash mismatch")
    return DatasetManifest(d["config"], d["master_seed"], d["samples"], d["tool_version"], d["config_hash"])
