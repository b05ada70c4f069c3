"""Train/validation splits and N-shot subsets over labelled image sets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InfeasibleError, InsufficientDataError, InvalidInputError, NotFoundError


@dataclass(frozen=True)
class LabeledImage:
    ref: str
    instances: tuple[tuple[str, tuple[float, float, float, float]], ...] = ()
    image_id: int | None = None

    @property
    def classes(self) -> list[str]:
        return [c for c, _ in self.instances]


@dataclass(frozen=True)
class LabeledSet:
    """Images with (class, box) instances; boxes are continuous ``(x1, y1, x2, y2)``."""

    images: tuple[LabeledImage, ...]
    vocabulary: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        vocab = tuple(self.vocabulary) or tuple(sorted({c for im in self.images for c in im.classes}))
        object.__setattr__(self, "vocabulary", vocab)
        known = set(vocab)
        for im in self.images:
            for c in im.classes:
                if c not in known:
                    raise InvalidInputError(f"{im.ref}: class {c!r} not in vocabulary")

    def __len__(self) -> int:
        return len(self.images)

    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.vocabulary}
        for im in self.images:
            for c in im.classes:
                counts[c] += 1
        return counts

    def subset(self, indices) -> "LabeledSet":
        return LabeledSet(tuple(self.images[i] for i in indices), self.vocabulary)


def load_coco(path) -> tuple[LabeledSet, dict]:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such COCO file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        cats = {c["id"]: c["name"] for c in doc["categories"]}
        per_image: dict[int, list] = {im["id"]: [] for im in doc["images"]}
        for a in doc["annotations"]:
            x, y, w, h = a["bbox"]
            per_image[a["image_id"]].append((cats[a["category_id"]], (x, y, x + w, y + h)))
        images = tuple(LabeledImage(im["file_name"], tuple(per_image[im["id"]]), im["id"])
                       for im in doc["images"])
        vocab = tuple(cats[k] for k in sorted(cats))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed COCO document ({exc})") from None
    return LabeledSet(images, vocab), doc


def coco_subset(doc: dict, subset: LabeledSet) -> dict:
    """The COCO document restricted to the images of ``subset`` (original ids kept)."""
    keep = {im.image_id for im in subset.images}
    return {
        **{k: v for k, v in doc.items() if k not in ("images", "annotations")},
        "images": [im for im in doc["images"] if im["id"] in keep],
        "annotations": [a for a in doc["annotations"] if a["image_id"] in keep],
    }


def split(labeled: LabeledSet, ratio_train: int, ratio_val: int,
          rng: np.random.Generator) -> tuple[LabeledSet, LabeledSet]:
    """Random disjoint partition with ``|val| = floor(n * val / (train + val))``."""
    if ratio_train <= 0 or ratio_val <= 0:
        raise InvalidInputError("split ratios must be positive")
    parts = ratio_train + ratio_val
    n = len(labeled)
    if n < parts:
        raise InsufficientDataError(f"{n} images cannot be split {ratio_train}:{ratio_val}")
    n_val = n * ratio_val // parts
    perm = rng.permutation(n)
    val = np.sort(perm[:n_val])
    train = np.sort(perm[n_val:])
    return labeled.subset(train.tolist()), labeled.subset(val.tolist())


def select_nshot(labeled: LabeledSet, n: int, rng: np.random.Generator) -> LabeledSet:
    """Greedy N-shot subset: every class ends with at least ``n`` instances.

    Images are visited in a seeded random order; an image is taken only if it
    contains a class still below ``n``. The result keeps the order of addition.
    """
    if n < 0:
        raise InvalidInputError("n must be >= 0")
    if n == 0:
        return LabeledSet((), labeled.vocabulary)
    totals = labeled.class_counts()
    short = [c for c, k in totals.items() if k < n]
    if short:
        raise InfeasibleError(f"class {short[0]!r} has only {totals[short[0]]} instances, need {n}")
    counts = {c: 0 for c in labeled.vocabulary}
    chosen = []
    for i in rng.permutation(len(labeled)).tolist():
        if all(k >= n for k in counts.values()):
            break
        classes = labeled.images[i].classes
        if any(counts[c] < n for c in classes):
            chosen.append(i)
            for c in classes:
                counts[c] += 1
    return labeled.subset(chosen)
