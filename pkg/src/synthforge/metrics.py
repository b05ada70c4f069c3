"""Detection (AP, P/R/F1, mAP) and segmentation (IoU, FN/FP rate) evaluation.

Boxes here are continuous ``(x1, y1, x2, y2)`` with area ``(x2-x1)*(y2-y1)``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, InvalidInputError, NotFoundError, UndefinedMetricError
from .sampler import LabeledSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Detection:
    image: str
    class_label: str
    box: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if x2 < x1 or y2 < y1:
            raise InvalidInputError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confidence {self.confidence} outside [0, 1]")


def box_iou(a, b) -> float:
    for box in (a, b):
        if box[2] < box[0] or box[3] < box[1]:
            raise InvalidInputError(f"degenerate box {box}")
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 1.0 if tuple(a) == tuple(b) else 0.0
    return inter / union


@dataclass
class Matching:
    """Greedy assignment result; ``tp[i]`` refers to ``preds[i]``."""

    tp: np.ndarray
    n_gt: dict[str, int]
    unmatched_gt: dict[str, int]


def _gt_index(gts: LabeledSet) -> dict[tuple[str, str], list]:
    index: dict[tuple[str, str], list] = {}
    for im in gts.images:
        for cls, box in im.instances:
            index.setdefault((im.ref, cls), []).append(box)
    return index


def match_detections(preds: Sequence[Detection], gts: LabeledSet, iou_thresh: float = 0.5) -> Matching:
    """Per image and class, visit predictions by descending confidence (stable) and
    match each to the highest-IoU unmatched ground truth with IoU >= ``iou_thresh``."""
    gt_boxes = _gt_index(gts)
    matched = {key: [False] * len(boxes) for key, boxes in gt_boxes.items()}
    tp = np.zeros(len(preds), dtype=bool)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    for i in order:
        d = preds[i]
        key = (d.image, d.class_label)
        boxes = gt_boxes.get(key, ())
        best, best_iou = -1, -1.0
        for j, g in enumerate(boxes):
            if matched[key][j]:
                continue
            iou = box_iou(d.box, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_thresh:
            matched[key][best] = True
            tp[i] = True
    n_gt: dict[str, int] = {c: 0 for c in gts.vocabulary}
    unmatched: dict[str, int] = {c: 0 for c in gts.vocabulary}
    for (_, cls), flags in matched.items():
        n_gt[cls] = n_gt.get(cls, 0) + len(flags)
        unmatched[cls] = unmatched.get(cls, 0) + flags.count(False)
    return Matching(tp, n_gt, unmatched)


def average_precision(tp_ranked: Sequence[bool], n_gt: int) -> float:
    """All-point AP: area under the precision envelope of a ranked TP/FP list."""
    if n_gt < 1:
        raise UndefinedMetricError("AP is undefined without ground truth")
    flags = np.asarray(tp_ranked, dtype=bool)
    if flags.size == 0:
        return 0.0
    ctp = np.cumsum(flags)
    precision = ctp / np.arange(1, flags.size + 1)
    recall = ctp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


@dataclass(frozen=True)
class ClassMetrics:
    ap: float | None
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_gt: int


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    mAP: float | None
    tp: int
    fp: int
    fn: int
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "per_class": {c: vars(m) for c, m in self.per_class.items()},
            "mAP": self.mAP, "counts": {"TP": self.tp, "FP": self.fp, "FN": self.fn},
        }

    def table(self) -> str:
        rows = [("class", "AP", "Precision", "Recall", "F1", "TP", "FP", "FN")]
        fmt = lambda v: "n/a" if v is None else f"{v:.3f}"  # noqa: E731
        for c, m in self.per_class.items():
            rows.append((c, fmt(m.ap), fmt(m.precision), fmt(m.recall), fmt(m.f1), str(m.tp), str(m.fp), str(m.fn)))
        rows.append(("mAP", fmt(self.mAP), "", "", "", str(self.tp), str(self.fp), str(self.fn)))
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        return "\n".join("  ".join(cell.ljust(w) if k == 0 else cell.rjust(w)
                                   for k, (cell, w) in enumerate(zip(r, widths))) for r in rows)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def evaluate_detection(preds: Sequence[Detection], gts: LabeledSet, iou_thresh: float = 0.5,
                       confidence_thresh: float = 0.5) -> EvalReport:
    m = match_detections(preds, gts, iou_thresh)
    classes = list(gts.vocabulary) + sorted({d.class_label for d in preds} - set(gts.vocabulary))
    per_class, notes = {}, []
    totals = [0, 0, 0]
    for cls in classes:
        idx = sorted((i for i, d in enumerate(preds) if d.class_label == cls), key=lambda i: -preds[i].confidence)
        n_gt = m.n_gt.get(cls, 0)
        if n_gt:
            ap = average_precision(m.tp[idx], n_gt)
        else:
            ap = None
            notes.append(f"class {cls!r} has no ground truth; AP undefined and excluded from mAP")
            log.warning(notes[-1])
        above = [i for i in idx if preds[i].confidence >= confidence_thresh]
        tp = int(np.count_nonzero(m.tp[above])) if above else 0
        fp = len(above) - tp
        fn = n_gt - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / n_gt if n_gt else 0.0
        per_class[cls] = ClassMetrics(ap, p, r, _f1(p, r), tp, fp, fn, n_gt)
        totals = [totals[0] + tp, totals[1] + fp, totals[2] + fn]
    aps = [cm.ap for cm in per_class.values() if cm.ap is not None]
    mean_ap = float(np.mean(aps)) if aps else None
    return EvalReport(per_class, mean_ap, *totals, warnings=notes)


# -- segmentation -----------------------------------------------------------------

@dataclass(frozen=True)
class SegCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "SegCounts") -> "SegCounts":
        return SegCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class SegReport:
    iou: float
    fn_rate: float
    fp_rate: float
    counts: SegCounts = SegCounts()
    undefined: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"IoU": self.iou, "FN_rate": self.fn_rate, "FP_rate": self.fp_rate,
                "counts": vars(self.counts), "undefined": list(self.undefined)}

    def table(self) -> str:
        return "\n".join(f"{k:<8}{v:>8.2f}" for k, v in
                         (("IoU", self.iou), ("FN Rate", self.fn_rate), ("FP Rate", self.fp_rate)))


def segmentation_counts(pred_mask, gt_mask) -> SegCounts:
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return SegCounts(int(np.count_nonzero(pred & gt)), int(np.count_nonzero(pred & ~gt)),
                     int(np.count_nonzero(~pred & gt)), int(np.count_nonzero(~pred & ~gt)))


def seg_report(c: SegCounts) -> SegReport:
    undefined = []

    def pct(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return 100.0 * num / den

    iou = pct(c.tp, c.tp + c.fp + c.fn, "IoU")
    fnr = pct(c.fn, c.tp + c.fn, "FN_rate")
    fpr = pct(c.fp, c.fp + c.tn, "FP_rate")
    return SegReport(iou, fnr, fpr, c, tuple(undefined))


def evaluate_segmentation(pred_mask, gt_mask) -> SegReport:
    """Pixelwise IoU, FN rate and FP rate as percentages; zero denominators give 0 and a flag."""
    return seg_report(segmentation_counts(pred_mask, gt_mask))


# -- prediction ingestion ------------------------------------------------------------

def load_predictions_jsonl(path) -> list[Detection]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such prediction file: {path}")
    preds = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            preds.append(Detection(rec["image"], rec["class"], tuple(rec["box"]), float(rec["confidence"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return preds


def load_predictions_yolo(directory, coco_doc: dict) -> list[Detection]:
    """YOLO text files (``k cx cy w h conf``) named after the COCO images' stems."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFoundError(f"no such prediction directory: {directory}")
    names = [c["name"] for c in sorted(coco_doc["categories"], key=lambda c: c["id"])]
    preds = []
    for im in coco_doc["images"]:
        path = directory / f"{Path(im['file_name']).stem}.txt"
        if not path.exists():
            continue
        w, h = im["width"], im["height"]
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            k, cx, cy, bw, bh, conf = int(parts[0]), *map(float, parts[1:])
            cx, cy, bw, bh = cx * w, cy * h, bw * w, bh * h
            preds.append(Detection(im["file_name"], names[k],
                                   (cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2), conf))
    return preds
