"""On-disk asset library, viewing-direction histograms and asset sampling."""
from __future__ import annotations

import enum
import json
import logging
import math
import uuid
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import canon
from .errors import InvalidInputError, NotFoundError, StrategyUnavailableError
from .images import read_image, write_png
from .mocap import Pose, ViewSample

log = logging.getLogger(__name__)

N_AZ = 36
N_EL = 18


@dataclass(frozen=True, eq=False)
class ForegroundAsset:
    """A straight-alpha RGBA cutout stored as uint16, with its class and optional view."""

    id: str
    class_label: str
    rgba: np.ndarray
    view: ViewSample | None = None
    source: dict = field(default_factory=dict)

    @cached_property
    def rgba_float(self) -> np.ndarray:
        return self.rgba.astype(np.float32) / np.float32(65535.0)

    @cached_property
    def rgba_premultiplied(self) -> np.ndarray:
        out = self.rgba_float.copy()
        out[:, :, :3] *= out[:, :, 3:4]
        return out

    @property
    def size(self) -> tuple[int, int]:
        return self.rgba.shape[1], self.rgba.shape[0]

    def metadata(self) -> dict:
        view = None
        if self.view is not None:
            view = {"v": self.view.v.tolist(), "depth_m": float(self.view.depth),
                    "frame_index": int(self.view.frame_index)}
            if self.view.rel is not None:
                view["rel"] = self.view.rel.to_dict()
        return {"id": self.id, "class": self.class_label, "view": view,
                "source": {"video": self.source.get("video"), "frame": self.source.get("frame")}}


def view_from_json(d: dict | None) -> ViewSample | None:
    if d is None:
        return None
    rel = Pose.from_dict(d["rel"]) if d.get("rel") else None
    return ViewSample(int(d.get("frame_index", -1)), d["v"], float(d["depth_m"]), rel)


class AssetLibrary:
    """Immutable index of assets by class."""

    def __init__(self, assets=(), skipped: int = 0):
        by_class: dict[str, list[ForegroundAsset]] = {}
        self._by_id: dict[str, ForegroundAsset] = {}
        for a in assets:
            by_class.setdefault(a.class_label, []).append(a)
            self._by_id[a.id] = a
        self._by_class = {c: tuple(v) for c, v in sorted(by_class.items())}
        self.skipped = skipped

    @property
    def classes(self) -> list[str]:
        return list(self._by_class)

    def assets(self, class_label: str) -> tuple[ForegroundAsset, ...]:
        try:
            return self._by_class[class_label]
        except KeyError:
            raise NotFoundError(f"unknown class {class_label!r}") from None

    def get(self, asset_id: str) -> ForegroundAsset:
        try:
            return self._by_id[asset_id]
        except KeyError:
            raise NotFoundError(f"unknown asset {asset_id!r}") from None

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        for assets in self._by_class.values():
            yield from assets


def store_asset(library_root, asset: ForegroundAsset, overwrite: bool = False) -> str:
    """Write ``<root>/<class>/<id>.png`` plus a JSON sidecar and return the id.

    A missing or colliding id is replaced by a fresh random one unless
    ``overwrite`` is set.
    """
    if not asset.class_label:
        raise InvalidInputError("asset class label must be non-empty")
    if "/" in asset.class_label or asset.class_label in (".", ".."):
        raise InvalidInputError(f"class label {asset.class_label!r} is not a valid directory name")
    class_dir = Path(library_root) / asset.class_label
    class_dir.mkdir(parents=True, exist_ok=True)
    asset_id = asset.id
    while not asset_id or (not overwrite and (class_dir / f"{asset_id}.png").exists()):
        asset_id = uuid.uuid4().hex[:12]
    meta = asset.metadata()
    meta["id"] = asset_id
    write_png(class_dir / f"{asset_id}.png", asset.rgba)
    canon.write(class_dir / f"{asset_id}.json", meta)
    return asset_id


def _load_rgba(path: Path) -> np.ndarray:
    img = read_image(path)
    if img.ndim == 2:
        img = np.dstack([img] * 3)
    if img.shape[2] == 3:
        opaque = np.full(img.shape[:2], np.iinfo(img.dtype).max, dtype=img.dtype)
        img = np.dstack([img, opaque])
    if img.dtype == np.uint8:
        img = img.astype(np.uint16) * 257
    if img.dtype != np.uint16:
        raise ValueError(f"unsupported dtype {img.dtype}")
    return img


def load_library(root) -> AssetLibrary:
    root = Path(root)
    if not root.is_dir():
        raise NotFoundError(f"no such library: {root}")
    assets, skipped = [], 0
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for png in sorted(class_dir.glob("*.png")):
            sidecar = png.with_suffix(".json")
            try:
                rgba = _load_rgba(png)
                if sidecar.exists():
                    meta = json.loads(sidecar.read_text(encoding="utf-8"))
                    view = view_from_json(meta.get("view"))
                    source = {k: v for k, v in (meta.get("source") or {}).items()}
                    asset_id = meta.get("id") or png.stem
                else:
                    view, source, asset_id = None, {}, png.stem
            except Exception as exc:
                log.warning("skipping %s: %s", png, exc)
                skipped += 1
                continue
            assets.append(ForegroundAsset(asset_id, class_dir.name, rgba, view, source))
    if skipped:
        log.warning("%s: skipped %d malformed entries", root, skipped)
    return AssetLibrary(assets, skipped)


# -- viewing-direction histogram --------------------------------------------------

def sphere_bin(v, n_az: int = N_AZ, n_el: int = N_EL) -> tuple[int, int]:
    """Equal-area cell of a direction: azimuth arc and sin-elevation slab."""
    x, y, z = (float(c) for c in v)
    az = math.atan2(y, x)
    ia = min(int((az + math.pi) / (2 * math.pi) * n_az), n_az - 1)
    ie = min(max(int((z + 1.0) / 2.0 * n_el), 0), n_el - 1)
    return ia, ie


def bin_edges(n_az: int = N_AZ, n_el: int = N_EL) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth edges in radians and sin-elevation (z) edges."""
    return np.linspace(-math.pi, math.pi, n_az + 1), np.linspace(-1.0, 1.0, n_el + 1)


@dataclass(frozen=True, eq=False)
class SphereHistogram:
    n_az: int
    n_el: int
    counts: np.ndarray
    excluded: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def bin_area(self, ia: int, ie: int) -> float:
        # area of a zone between heights z0..z1 over an arc dphi is dphi * (z1 - z0)
        az, z = bin_edges(self.n_az, self.n_el)
        return float((az[ia + 1] - az[ia]) * (z[ie + 1] - z[ie]))


def histogram_of(directions, n_az: int = N_AZ, n_el: int = N_EL) -> SphereHistogram:
    counts = np.zeros((n_az, n_el), dtype=np.int64)
    for v in directions:
        counts[sphere_bin(v, n_az, n_el)] += 1
    return SphereHistogram(n_az, n_el, counts)


def viewing_histogram(library: AssetLibrary, class_label: str,
                      n_az: int = N_AZ, n_el: int = N_EL) -> SphereHistogram:
    assets = library.assets(class_label)
    posed = [a.view.v for a in assets if a.view is not None]
    h = histogram_of(posed, n_az, n_el)
    return SphereHistogram(n_az, n_el, h.counts, excluded=len(assets) - len(posed))


class SamplingStrategy(enum.Enum):
    RANDOM = "random"
    UNIFORM_VIEWPOINT = "uniform_viewpoint"


def _viewpoint_bins(assets, n_az: int, n_el: int) -> list[list[ForegroundAsset]]:
    bins: dict[tuple[int, int], list[ForegroundAsset]] = {}
    for a in assets:
        if a.view is not None:
            bins.setdefault(sphere_bin(a.view.v, n_az, n_el), []).append(a)
    return [bins[k] for k in sorted(bins)]


def sample_asset(library: AssetLibrary, class_label: str, strategy: SamplingStrategy,
                 rng: np.random.Generator, n_az: int = N_AZ, n_el: int = N_EL) -> ForegroundAsset:
    """Draw an asset uniformly, or draw an occupied viewpoint bin uniformly then an asset in it."""
    assets = library.assets(class_label)
    if not assets:
        raise NotFoundError(f"class {class_label!r} is empty")
    if SamplingStrategy(strategy) is SamplingStrategy.RANDOM:
        return assets[int(rng.integers(len(assets)))]
    bins = _viewpoint_bins(assets, n_az, n_el)
    if not bins:
        raise StrategyUnavailableError(f"class {class_label!r} has no posed assets")
    members = bins[int(rng.integers(len(bins)))]
    return members[int(rng.integers(len(members)))]


def export_heatmap(hist: SphereHistogram, path, cell: tuple[int, int] = (10, 10)) -> np.ndarray:
    """Write an equirectangular 8-bit heatmap (top row = highest elevation) and return it.

    Intensity is ``floor(255 * count / max + 0.5)``; an empty histogram is all black.
    """
    peak = int(hist.counts.max()) if hist.counts.size else 0
    if peak == 0:
        levels = np.zeros_like(hist.counts, dtype=np.uint8)
    else:
        levels = np.floor(255.0 * hist.counts / peak + 0.5).astype(np.uint8)
    grid = levels.T[::-1]  # rows: elevation descending; columns: azimuth ascending
    img = np.kron(grid, np.ones((cell[1], cell[0]), dtype=np.uint8))
    write_png(path, img)
    return img
