"""Scene recipes and rendering: transform, inverse-square brightness, blending.

Rasters inside the compositor are float32 in [0, 1]. Foreground canvases are
straight-alpha RGBA; resampling happens on premultiplied colour.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .annotate import InstanceSummary, SampleAnnotation, bbox_from_mask
from .assetlib import AssetLibrary, SamplingStrategy, sample_asset
from .errors import (
    ConfigError,
    DegenerateTransformError,
    GenerationFailureError,
    InvalidInputError,
    NotFoundError,
)
from .images import list_images, read_rgb, to_uint8
from .mocap import ViewSample
from .poisson import PoissonParams, poisson_blend

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
SEED_MASK = (1 << 64) - 1


# -- configuration ------------------------------------------------------------------

def _from_dict(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**data)


@dataclass(frozen=True)
class BlendConfig:
    mode: str = "feather"
    sigma: float = 1.0
    mixed_gradients: bool = True
    tol: float = 1e-4
    max_iter: int = 10_000

    def __post_init__(self):
        if self.mode not in ("feather", "poisson"):
            raise ConfigError(f"blend mode must be feather or poisson, got {self.mode!r}")
        if self.sigma < 0:
            raise ConfigError("feather sigma must be >= 0")

    @property
    def poisson(self) -> PoissonParams:
        return PoissonParams(self.mixed_gradients, self.tol, self.max_iter)


@dataclass(frozen=True)
class GenConfig:
    scale_min: float = 0.1
    scale_max: float = 0.3
    s_ref: float | None = None
    brightness_floor: float = 0.3
    brightness_mode: str = "scale"
    objects_min: int = 1
    objects_max: int = 3
    inplane_rotation: str = "uniform"
    blend: BlendConfig = BlendConfig()
    placement: str = "inside"
    min_visible_fraction: float = 0.25
    max_pairwise_overlap_iou: float = 0.3
    master_seed: int = 0
    classes: tuple[str, ...] | None = None
    strategy: str = "random"
    image_size: tuple[int, int] | None = None
    matte_threshold: float = 0.5
    max_tries: int = 100

    def __post_init__(self):
        if isinstance(self.blend, dict):
            object.__setattr__(self, "blend", _from_dict(BlendConfig, self.blend, "blend"))
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))
        if self.image_size is not None:
            object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if not 0 < self.scale_min <= self.scale_max:
            raise ConfigError("need 0 < scale_min <= scale_max")
        if self.s_ref is not None and self.s_ref <= 0:
            raise ConfigError("s_ref must be > 0")
        if not 0 < self.brightness_floor <= 1:
            raise ConfigError("brightness_floor must lie in (0, 1]")
        if self.brightness_mode not in ("scale", "depth"):
            raise ConfigError("brightness_mode must be scale or depth")
        if not 1 <= self.objects_min <= self.objects_max:
            raise ConfigError("need 1 <= objects_min <= objects_max")
        if self.inplane_rotation not in ("uniform", "off"):
            raise ConfigError("inplane_rotation must be uniform or off")
        if self.placement not in ("inside", "truncate"):
            raise ConfigError("placement must be inside or truncate")
        if not 0 < self.min_visible_fraction <= 1:
            raise ConfigError("min_visible_fraction must lie in (0, 1]")
        if not 0 <= self.max_pairwise_overlap_iou <= 1:
            raise ConfigError("max_pairwise_overlap_iou must lie in [0, 1]")
        if not 0 <= int(self.master_seed) <= SEED_MASK:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        try:
            SamplingStrategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}") from None
        if not 0 < self.matte_threshold < 1:
            raise ConfigError("matte_threshold must lie in (0, 1)")
        if self.max_tries < 1:
            raise ConfigError("max_tries must be >= 1")

    @property
    def reference_scale(self) -> float:
        return self.scale_max if self.s_ref is None else self.s_ref

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        return _from_dict(cls, data, "generate")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["classes"] is not None:
            d["classes"] = list(d["classes"])
        if d["image_size"] is not None:
            d["image_size"] = list(d["image_size"])
        return d


# -- recipes -------------------------------------------------------------------------

@dataclass(frozen=True)
class Placement:
    asset_id: str
    class_label: str
    scale: float
    center: tuple[float, float]
    rotation: float
    brightness_factor: float

    def to_dict(self) -> dict:
        return {"asset_id": self.asset_id, "class": self.class_label, "scale": self.scale,
                "center": list(self.center), "rotation": self.rotation,
                "brightness_factor": self.brightness_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(d["asset_id"], d["class"], d["scale"], tuple(d["center"]), d["rotation"],
                   d["brightness_factor"])


@dataclass(frozen=True)
class SceneRecipe:
    sample_index: int
    sample_seed: int
    background: str
    placements: tuple[Placement, ...]
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"sample_index": self.sample_index, "sample_seed": self.sample_seed,
                "background": self.background,
                "placements": [p.to_dict() for p in self.placements],
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneRecipe":
        return cls(d["sample_index"], d["sample_seed"], d["background"],
                   tuple(Placement.from_dict(p) for p in d["placements"]), tuple(d.get("warnings", ())))


class BackgroundSet:
    """Named background images, loaded lazily as float32 RGB and kept in a small cache."""

    def __init__(self, sources: dict, image_size: tuple[int, int] | None = None, cache_size: int = 32):
        if not sources:
            raise NotFoundError("no background images")
        self._sources = dict(sorted(sources.items()))
        self.image_size = image_size
        self._cache: OrderedDict[str, np.ndarray] = OrderedDict()
        self._cache_size = cache_size

    @classmethod
    def from_directory(cls, directory, image_size=None) -> "BackgroundSet":
        return cls({p.name: p for p in list_images(directory)}, image_size)

    @property
    def refs(self) -> list[str]:
        return list(self._sources)

    def get(self, ref: str) -> np.ndarray:
        if ref in self._cache:
            self._cache.move_to_end(ref)
            return self._cache[ref]
        try:
            src = self._sources[ref]
        except KeyError:
            raise NotFoundError(f"unknown background {ref!r}") from None
        img = read_rgb(src) if isinstance(src, (str, Path)) else np.asarray(src)
        if img.dtype == np.uint8:
            img = img.astype(np.float32) / np.float32(255.0)
        img = np.ascontiguousarray(img, dtype=np.float32)
        if self.image_size is not None and (img.shape[1], img.shape[0]) != self.image_size:
            img = cv2.resize(img, self.image_size, interpolation=cv2.INTER_AREA)
        img.setflags(write=False)
        self._cache[ref] = img
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return img

    def size(self, ref: str) -> tuple[int, int]:
        img = self.get(ref)
        return img.shape[1], img.shape[0]


def derive_seed(master_seed: int, sample_index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & SEED_MASK, int(sample_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


def scaled_size(w: int, h: int, s: float) -> tuple[int, int]:
    return _round(s * w), _round(s * h)


def transformed_size(w: int, h: int, s: float, theta: float) -> tuple[int, int]:
    """Canvas size of an asset after scaling by ``s`` and rotating by ``theta``."""
    sw, sh = scaled_size(w, h, s)
    if sw < 1 or sh < 1:
        raise DegenerateTransformError(f"scale {s} shrinks a {w}x{h} asset below 1x1")
    if theta == 0.0:
        return sw, sh
    c, sn = abs(math.cos(theta)), abs(math.sin(theta))
    return (max(1, math.ceil(sw * c + sh * sn - 1e-6)), max(1, math.ceil(sw * sn + sh * c - 1e-6)))


def top_left(center, shape) -> tuple[int, int]:
    """Integer top-left corner that centres a raster of ``shape`` (h, w) at ``center``."""
    h, w = shape[:2]
    return _round(center[0] - w / 2.0), _round(center[1] - h / 2.0)


def box_iou_float(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def brightness_factor(s: float, s_ref: float, floor: float) -> float:
    return min(1.0, max(floor, (s / s_ref) ** 2))


def _sample_center(rng, cw, ch, width, height, config: GenConfig, margin: int):
    if config.placement == "inside":
        lo_x, hi_x = cw / 2 + margin, width - cw / 2 - margin
        lo_y, hi_y = ch / 2 + margin, height - ch / 2 - margin
        if lo_x > hi_x or lo_y > hi_y:
            return None
        return float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y))
    cx = float(rng.uniform(-cw / 2, width + cw / 2))
    cy = float(rng.uniform(-ch / 2, height + ch / 2))
    vis_w = min(width, cx + cw / 2) - max(0.0, cx - cw / 2)
    vis_h = min(height, cy + ch / 2) - max(0.0, cy - ch / 2)
    if vis_w <= 0 or vis_h <= 0 or vis_w * vis_h < config.min_visible_fraction * cw * ch:
        return None
    return cx, cy


def sample_recipe(config: GenConfig, backgrounds: BackgroundSet, library: AssetLibrary,
                  sample_index: int) -> SceneRecipe:
    """Draw one fully resolved scene from the per-sample random stream."""
    seed = derive_seed(config.master_seed, sample_index)
    rng = np.random.default_rng(seed)
    refs = backgrounds.refs
    background = refs[int(rng.integers(len(refs)))]
    width, height = backgrounds.size(background)
    classes = list(config.classes) if config.classes else library.classes
    if not classes:
        raise NotFoundError("asset library has no classes")
    strategy = SamplingStrategy(config.strategy)
    margin = 1 if config.blend.mode == "poisson" else 0
    n_objects = int(rng.integers(config.objects_min, config.objects_max + 1))
    chosen: list[tuple[Placement, tuple, float | None]] = []
    notes = []
    for k in range(n_objects):
        cls = classes[int(rng.integers(len(classes)))]
        asset = sample_asset(library, cls, strategy, rng)
        w, h = asset.size
        for _ in range(config.max_tries):
            s = float(rng.uniform(config.scale_min, config.scale_max))
            theta = float(rng.uniform(0.0, TWO_PI)) if config.inplane_rotation == "uniform" else 0.0
            try:
                cw, ch = transformed_size(w, h, s, theta)
            except DegenerateTransformError:
                continue
            center = _sample_center(rng, cw, ch, width, height, config, margin)
            if center is None:
                continue
            box = (center[0] - cw / 2, center[1] - ch / 2, center[0] + cw / 2, center[1] + ch / 2)
            if any(box_iou_float(box, other) > config.max_pairwise_overlap_iou for _, other, _ in chosen):
                continue
            depth = asset.view.depth if asset.view is not None else None
            chosen.append((Placement(asset.id, cls, s, center, theta, 1.0), box, depth))
            break
        else:
            msg = f"object {k} ({cls}) dropped: no feasible placement in {config.max_tries} tries"
            log.warning("sample %d: %s", sample_index, msg)
            notes.append(msg)
    if not chosen:
        raise GenerationFailureError(f"sample {sample_index}: no object could be placed")
    depths = [d for _, _, d in chosen if d is not None and d > 0]
    d_ref = min(depths) if depths else None
    placements = []
    for pl, _, depth in chosen:
        if config.brightness_mode == "depth" and depth is not None and depth > 0:
            f = min(1.0, max(config.brightness_floor, (d_ref / depth) ** 2))
        else:
            f = brightness_factor(pl.scale, config.reference_scale, config.brightness_floor)
        placements.append(dataclasses.replace(pl, brightness_factor=f))
    placements.sort(key=lambda p: p.scale)
    return SceneRecipe(sample_index, seed, background, tuple(placements), tuple(notes))


# -- raster operations -------------------------------------------------------------------

def premultiply(rgba: np.ndarray) -> np.ndarray:
    src = np.asarray(rgba, dtype=np.float32)
    out = src.copy()
    out[:, :, :3] *= src[:, :, 3:4]
    return out


def _transform_premultiplied(prem: np.ndarray, s: float, theta: float) -> np.ndarray:
    h, w = prem.shape[:2]
    out_w, out_h = transformed_size(w, h, s, theta)
    sw, sh = scaled_size(w, h, s)
    if (sw, sh) == (w, h) and theta == 0.0:
        prem = prem.copy()
    if (sw, sh) != (w, h):
        interp = cv2.INTER_AREA if s < 1.0 else cv2.INTER_LINEAR
        prem = cv2.resize(prem, (sw, sh), interpolation=interp)
    if theta != 0.0:
        c, sn = math.cos(theta), math.sin(theta)
        # rotate about the scaled centre, then shift it to the new canvas centre
        cx, cy = (sw - 1) / 2.0, (sh - 1) / 2.0
        ox, oy = (out_w - 1) / 2.0, (out_h - 1) / 2.0
        m = np.array([[c, -sn, ox - c * cx + sn * cy],
                      [sn, c, oy - sn * cx - c * cy]], dtype=np.float64)
        prem = cv2.warpAffine(prem, m, (out_w, out_h), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0, 0))
    out = np.clip(prem, 0.0, 1.0, out=prem)
    alpha = out[:, :, 3:4]
    rgb = out[:, :, :3]
    covered = np.broadcast_to(alpha > 0, rgb.shape)
    np.divide(rgb, alpha, out=rgb, where=covered)
    rgb[~covered] = 0.0
    np.minimum(rgb, 1.0, out=rgb)
    return out


def transform_asset(rgba: np.ndarray, s: float, theta: float) -> np.ndarray:
    """Scale then rotate a straight-alpha canvas about its centre, growing the canvas.

    Colour is resampled premultiplied (area filter when shrinking, bilinear for
    the rotation) and un-premultiplied on output. ``s=1, theta=0`` returns an
    exact copy.
    """
    if s <= 0:
        raise DegenerateTransformError("scale must be > 0")
    h, w = rgba.shape[:2]
    transformed_size(w, h, s, theta)
    if s == 1.0 and theta == 0.0:
        return rgba.copy()
    out = _transform_premultiplied(premultiply(rgba), s, theta)
    return out.astype(rgba.dtype) if rgba.dtype.kind == "f" else out


def brightness_adjust(raster: np.ndarray, factor: float) -> np.ndarray:
    if not 0.0 < factor <= 1.0:
        raise InvalidInputError(f"brightness factor must lie in (0, 1], got {factor}")
    out = raster.copy()
    if factor != 1.0:
        out[:, :, :3] = np.clip(out[:, :, :3] * out.dtype.type(factor), 0.0, 1.0)
    return out


def _clip_window(x0, y0, fw, fh, bw, bh):
    """Overlap of a canvas at (x0, y0) with the background, as (bg slices, fg slices)."""
    bx0, by0 = max(x0, 0), max(y0, 0)
    bx1, by1 = min(x0 + fw, bw), min(y0 + fh, bh)
    if bx0 >= bx1 or by0 >= by1:
        return None
    return ((slice(by0, by1), slice(bx0, bx1)),
            (slice(by0 - y0, by1 - y0), slice(bx0 - x0, bx1 - x0)))


def alpha_blend(background: np.ndarray, fg: np.ndarray, center, sigma: float = 1.0,
                out: np.ndarray | None = None) -> np.ndarray:
    """Composite ``fg`` over ``background`` with a Gaussian-feathered alpha."""
    if out is None:
        out = np.array(background, copy=True)
    x0, y0 = top_left(center, fg.shape)
    win = _clip_window(x0, y0, fg.shape[1], fg.shape[0], out.shape[1], out.shape[0])
    if win is None:
        log.warning("foreground at %s does not intersect the background", center)
        return out
    alpha = fg[:, :, 3]
    if sigma > 0:
        alpha = ndimage.gaussian_filter(alpha, sigma, mode="constant", cval=0.0)
    bsl, fsl = win
    a = alpha[fsl][:, :, None].astype(out.dtype)
    out[bsl] = a * fg[fsl][:, :, :3].astype(out.dtype) + (1 - a) * out[bsl]
    return out


# -- rendering --------------------------------------------------------------------------

@dataclass(eq=False)
class Instance:
    class_label: str
    asset_id: str
    scale: float
    amodal_box: tuple[int, int, int, int]
    visible_mask: np.ndarray
    pose: ViewSample | None = None

    @property
    def visible_box(self):
        return bbox_from_mask(self.visible_mask)

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.visible_mask))


@dataclass(eq=False)
class AnnotatedSample:
    image: np.ndarray
    instances: list[Instance]
    recipe: SceneRecipe
    warnings: list[str] = field(default_factory=list)

    @property
    def sample_index(self) -> int:
        return self.recipe.sample_index

    def summary(self, file_name: str | None = None) -> SampleAnnotation:
        h, w = self.image.shape[:2]
        name = file_name or f"sample_{self.sample_index:08d}.png"
        return SampleAnnotation(self.sample_index, name, w, h, [
            InstanceSummary(inst.class_label, inst.visible_box, inst.amodal_box, inst.area,
                            inst.scale, inst.asset_id)
            for inst in self.instances])


def render(recipe: SceneRecipe, config: GenConfig, library: AssetLibrary,
           backgrounds: BackgroundSet) -> AnnotatedSample:
    """Draw placements far to near, erasing occluded pixels from earlier masks."""
    canvas = np.array(backgrounds.get(recipe.background), dtype=np.float32, copy=True)
    bh, bw = canvas.shape[:2]
    tau = config.matte_threshold
    poisson = config.blend.mode == "poisson"
    kept: list[Instance] = []
    notes: list[str] = []
    for pl in sorted(recipe.placements, key=lambda p: p.scale):
        asset = library.get(pl.asset_id)
        if pl.scale == 1.0 and pl.rotation == 0.0:
            fg = asset.rgba_float.copy()
        else:
            fg = _transform_premultiplied(asset.rgba_premultiplied, pl.scale, pl.rotation)
        fg = brightness_adjust(fg, pl.brightness_factor)
        fh, fw = fg.shape[:2]
        x0, y0 = top_left(pl.center, fg.shape)
        footprint = fg[:, :, 3] >= tau
        ys, xs = np.nonzero(footprint)
        if ys.size == 0:
            notes.append(f"{pl.asset_id}: empty footprint after transform")
            continue
        amodal = (int(xs.min() + x0), int(ys.min() + y0), int(xs.max() + x0), int(ys.max() + y0))
        if poisson:
            # the cloned region must keep a 1-pixel margin inside the image
            yy = np.arange(fh)[:, None] + y0
            xx = np.arange(fw)[None, :] + x0
            footprint &= (yy >= 1) & (yy <= bh - 2) & (xx >= 1) & (xx <= bw - 2)
        win = _clip_window(x0, y0, fw, fh, bw, bh)
        if win is None or not footprint[win[1]].any():
            notes.append(f"{pl.asset_id}: outside the image")
            continue
        bsl, fsl = win
        drawn = footprint[fsl]
        for inst in kept:
            inst.visible_mask[bsl] &= ~drawn
        mask = np.zeros((bh, bw), dtype=bool)
        mask[bsl] = drawn
        if poisson:
            poisson_blend(canvas, fg, pl.center, config.blend.poisson, tau, region=footprint, out=canvas)
        else:
            alpha_blend(canvas, fg, pl.center, config.blend.sigma, out=canvas)
        kept.append(Instance(pl.class_label, pl.asset_id, pl.scale, amodal, mask, asset.view))
    visible = [inst for inst in kept if inst.visible_mask.any()]
    if len(visible) < len(kept):
        notes.append(f"{len(kept) - len(visible)} fully occluded instance(s) dropped")
    return AnnotatedSample(to_uint8(canvas), visible, recipe, notes)


def generate_sample(config: GenConfig, library: AssetLibrary, backgrounds: BackgroundSet,
                    sample_index: int) -> AnnotatedSample:
    return render(sample_recipe(config, backgrounds, library, sample_index), config, library, backgrounds)
