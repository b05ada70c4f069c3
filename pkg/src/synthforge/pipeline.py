"""Batch drivers behind the CLI: tool config, asset keying and dataset generation.

Generation is parallel over sample indices. Every sample draws from its own
stream derived from ``(master_seed, sample_index)`` and writes only its own
files, so any worker count produces the same bytes.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .annotate import (
    DatasetManifest,
    SampleAnnotation,
    emit_coco,
    emit_manifest,
    write_classes,
    write_mask,
    write_yolo,
)
from .assetlib import AssetLibrary, load_library, store_asset
from .compositor import BackgroundSet, GenConfig, SceneRecipe, render, sample_recipe
from .errors import ConfigError, EmptyForegroundError, OutOfRangeError, SynthForgeError
from .images import frame_index, list_frames, read_rgb, write_png
from .keyer import KeyerParams, extract_asset
from .mocap import PoseTrack, interpolate_pose, relative_pose, viewing_sample

log = logging.getLogger(__name__)

SUCCESS_FRACTION = 0.99


@dataclass(frozen=True)
class EmitConfig:
    coco: bool = True
    yolo: bool = True
    masks: bool = True


@dataclass(frozen=True)
class ToolConfig:
    assets: str | None = None
    backgrounds: str | None = None
    output: str | None = None
    keyer: KeyerParams = KeyerParams()
    generate: GenConfig = GenConfig()
    emit: EmitConfig = EmitConfig()

    def snapshot(self) -> dict:
        """Config as recorded in manifests; the output location is deliberately left out."""
        return {
            "paths": {"assets": self.assets, "backgrounds": self.backgrounds},
            "keyer": dataclasses.asdict(self.keyer),
            "generate": self.generate.to_dict(),
            "emit": dataclasses.asdict(self.emit),
        }


SECTIONS = ("paths", "keyer", "generate", "sampling", "emit")


def _section(cls, data: dict, name: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def tool_config_from_dict(data: dict, base_dir: Path | None = None) -> ToolConfig:
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    paths = dict(data.get("paths") or {})
    bad = sorted(set(paths) - {"assets", "backgrounds", "output"})
    if bad:
        raise ConfigError(f"paths: unknown keys {bad}")
    for k, v in paths.items():
        if v is not None and base_dir is not None and not Path(v).is_absolute():
            paths[k] = str((base_dir / v).resolve())
    gen = dict(data.get("generate") or {})
    sampling = dict(data.get("sampling") or {})
    if set(sampling) - {"strategy"}:
        raise ConfigError(f"sampling: unknown keys {sorted(set(sampling) - {'strategy'})}")
    if "strategy" in sampling:
        gen["strategy"] = sampling["strategy"]
    try:
        generate = GenConfig.from_dict(gen)
    except TypeError as exc:
        raise ConfigError(f"generate: {exc}") from None
    return ToolConfig(
        assets=paths.get("assets"), backgrounds=paths.get("backgrounds"), output=paths.get("output"),
        keyer=_section(KeyerParams, data.get("keyer") or {}, "keyer"),
        generate=generate,
        emit=_section(EmitConfig, data.get("emit") or {}, "emit"),
    )


def _apply_override(data: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    section, name = key.split(".", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    data.setdefault(section, {})[name] = value


def load_tool_config(path=None, overrides=()) -> ToolConfig:
    data: dict = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = path.parent.resolve()
    for item in overrides:
        _apply_override(data, item)
    return tool_config_from_dict(data, base)


# -- keying -----------------------------------------------------------------------------

@dataclass
class KeyResult:
    stored: list[str] = field(default_factory=list)
    empty_frames: int = 0
    unposed_frames: int = 0


def _view_for(frame_idx: int, fps: float, offset: float, obj: PoseTrack, cam: PoseTrack):
    t = frame_idx / fps + offset
    rel = relative_pose(interpolate_pose(cam, t), interpolate_pose(obj, t))
    return viewing_sample(rel, frame_idx)


def key_frames(frames_dir, library_root, class_label: str, params: KeyerParams = KeyerParams(),
               object_track: PoseTrack | None = None, camera_track: PoseTrack | None = None,
               offset: float = 0.0, fps: float = 30.0) -> KeyResult:
    """Extract one asset per numbered frame; ids are ``<video>_<frame>`` so reruns overwrite."""
    frames_dir = Path(frames_dir)
    video = frames_dir.name
    result = KeyResult()
    posed = object_track is not None and camera_track is not None
    for path in list_frames(frames_dir):
        k = frame_index(path)
        view = None
        if posed:
            try:
                view = _view_for(k, fps, offset, object_track, camera_track)
            except OutOfRangeError:
                result.unposed_frames += 1
        try:
            asset = extract_asset(read_rgb(path), params, class_label, view=view,
                                  source={"video": video, "frame": k}, asset_id=f"{video}_{k:06d}")
        except EmptyForegroundError:
            result.empty_frames += 1
            continue
        result.stored.append(store_asset(library_root, asset, overwrite=True))
    if result.unposed_frames:
        log.warning("%d frames fell outside the pose tracks and carry no view", result.unposed_frames)
    return result


# -- generation -------------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(config: ToolConfig, out_dir: str, replay: dict | None) -> None:
    _WORKER.clear()
    _WORKER.update(
        config=config, out=Path(out_dir), replay=replay or {},
        library=load_library(config.assets),
        backgrounds=BackgroundSet.from_directory(config.backgrounds, config.generate.image_size),
    )


def _classes(config: ToolConfig, library: AssetLibrary) -> list[str]:
    return list(config.generate.classes) if config.generate.classes else library.classes


def _render_one(index: int) -> tuple[dict, SampleAnnotation | None]:
    config: ToolConfig = _WORKER["config"]
    out: Path = _WORKER["out"]
    library, backgrounds = _WORKER["library"], _WORKER["backgrounds"]
    name = f"sample_{index:08d}.png"
    record = {"sample_index": index, "output": f"images/{name}", "status": "ok", "error": None,
              "recipe": None, "instances": [], "warnings": []}
    try:
        recipe_dict = _WORKER["replay"].get(index)
        if recipe_dict is not None:
            recipe = SceneRecipe.from_dict(recipe_dict)
        else:
            recipe = sample_recipe(config.generate, backgrounds, library, index)
        record["recipe"] = recipe.to_dict()
        sample = render(recipe, config.generate, library, backgrounds)
    except SynthForgeError as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}", output=None)
        return record, None
    write_png(out / "images" / name, sample.image)
    if config.emit.masks:
        write_mask(sample, out / "masks")
    ann = sample.summary(name)
    if config.emit.yolo:
        write_yolo(ann, out / "labels", _classes(config, library))
    record["instances"] = [inst.to_dict() for inst in ann.instances]
    record["warnings"] = list(sample.warnings)
    return record, ann


@dataclass
class GenerateResult:
    manifest: DatasetManifest
    succeeded: int
    failed: int

    @property
    def ok(self) -> bool:
        total = self.succeeded + self.failed
        return total == 0 or self.succeeded / total >= SUCCESS_FRACTION


def generate_dataset(config: ToolConfig, count: int, out_dir, jobs: int | None = None,
                     replay: DatasetManifest | None = None) -> GenerateResult:
    """Render samples ``0..count-1`` (or the recipes of ``replay``) and write the dataset."""
    if config.assets is None or config.backgrounds is None:
        raise ConfigError("paths.assets and paths.backgrounds are required")
    library = load_library(config.assets)
    BackgroundSet.from_directory(config.backgrounds, config.generate.image_size)
    classes = _classes(config, library)
    for c in classes:
        library.assets(c)
    recipes = None
    if replay is not None:
        recipes = {r["sample_index"]: r["recipe"] for r in replay.samples if r.get("recipe")}
        indices = sorted(r["sample_index"] for r in replay.samples)
    else:
        indices = list(range(count))
    out = Path(out_dir)
    for sub in ("images", "masks", "labels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1:
        _init_worker(config, str(out), recipes)
        results = [_render_one(i) for i in indices]
    else:
        chunk = max(1, len(indices) // (jobs * 4))
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(config, str(out), recipes)) as pool:
            results = list(pool.map(_render_one, indices, chunksize=chunk))
    records = [r for r, _ in results]
    annotations = [a for _, a in results if a is not None]
    if config.emit.coco:
        emit_coco(annotations, out / "annotations.coco.json", classes)
    if config.emit.yolo:
        write_classes(out / "labels", classes)
    manifest = DatasetManifest(config.snapshot(), config.generate.master_seed, records)
    emit_manifest(manifest, out / "manifest.json")
    failed = sum(r["status"] != "ok" for r in records)
    return GenerateResult(manifest, len(records) - failed, failed)


def config_from_manifest(manifest: DatasetManifest) -> ToolConfig:
    snap = manifest.config
    return tool_config_from_dict({"paths": snap["paths"], "keyer": snap["keyer"],
                                  "generate": snap["generate"], "emit": snap["emit"]})

