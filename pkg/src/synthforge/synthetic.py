"""Synthetic fixtures with known ground truth: green-screen frames, assets,
backgrounds and mocap/video pairs containing a rapid camera rotation."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.special import erf

from .assetlib import ForegroundAsset, store_asset
from .images import to_uint16, write_png
from .mocap import PoseTrack, TimeSeries, quat_from_axis_angle, video_series, frame_motion_signal

GREEN = np.array([0.0, 1.0, 0.0])


def non_green_colors(rng: np.random.Generator, n: int, max_dominance: float = 0.0) -> np.ndarray:
    """``n`` random RGB colours in [0, 1] whose green dominance is at most ``max_dominance``."""
    out = np.empty((0, 3))
    while len(out) < n:
        c = rng.random((2 * n, 3))
        ok = c[:, 1] - np.maximum(c[:, 0], c[:, 2]) <= max_dominance
        out = np.concatenate([out, c[ok]])
    return out[:n]


def patch_on_green(rng: np.random.Generator, size: tuple[int, int] = (96, 128),
                   patch: tuple[int, int] | None = None, textured: bool = True):
    """An 8-bit frame with one opaque rectangular patch over pure green.

    Returns ``(frame_uint8, matte, patch_rgb_uint8, (y0, x0))``.
    """
    h, w = size
    ph, pw = patch or (int(rng.integers(h // 6, h // 2)), int(rng.integers(w // 6, w // 2)))
    y0 = int(rng.integers(1, h - ph - 1))
    x0 = int(rng.integers(1, w - pw - 1))
    if textured:
        colors = non_green_colors(rng, ph * pw).reshape(ph, pw, 3)
    else:
        colors = np.broadcast_to(non_green_colors(rng, 1)[0], (ph, pw, 3))
    rgb = np.round(colors * 255).astype(np.uint8)
    # quantisation can nudge green up by at most half a level
    rgb[..., 1] = np.minimum(rgb[..., 1], np.maximum(rgb[..., 0], rgb[..., 2]))
    frame = np.zeros((h, w, 3), dtype=np.uint8)
    frame[..., 1] = 255
    frame[y0:y0 + ph, x0:x0 + pw] = rgb
    matte = np.zeros((h, w))
    matte[y0:y0 + ph, x0:x0 + pw] = 1.0
    return frame, matte, rgb, (y0, x0)


def solid_asset(asset_id: str, class_label: str, w: int, h: int, color=(0.5, 0.5, 0.5),
                shape: str = "rect", view=None) -> ForegroundAsset:
    rgba = np.zeros((h, w, 4))
    rgba[..., :3] = color
    if shape == "rect":
        rgba[..., 3] = 1.0
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        inside = ((xx + 0.5 - w / 2) / (w / 2)) ** 2 + ((yy + 0.5 - h / 2) / (h / 2)) ** 2 <= 1.0
        rgba[..., 3] = inside
        rgba[0, :, 3] = rgba[-1, :, 3] = rgba[:, 0, 3] = rgba[:, -1, 3] = 0
        rgba[h // 2, 0, 3] = rgba[h // 2, -1, 3] = rgba[0, w // 2, 3] = rgba[-1, w // 2, 3] = 1.0
    return ForegroundAsset(asset_id, class_label, to_uint16(rgba), view=view)


def textured_asset(rng: np.random.Generator, asset_id: str, class_label: str, w: int, h: int,
                   view=None) -> ForegroundAsset:
    """An elliptical cutout with a smooth random colour field and a soft edge."""
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.sqrt(((xx + 0.5 - w / 2) / (w / 2)) ** 2 + ((yy + 0.5 - h / 2) / (h / 2)) ** 2)
    alpha = np.clip((1.0 - r) * max(w, h) / 4.0, 0.0, 1.0)
    base = rng.random(3)
    fx, fy = rng.uniform(1, 4, size=2)
    wave = 0.5 + 0.5 * np.sin(2 * math.pi * (fx * xx / w + fy * yy / h))
    rgb = np.clip(base[None, None, :] * (0.6 + 0.4 * wave[..., None]), 0.0, 1.0)
    rgba = np.dstack([rgb, alpha])
    # crop tight to alpha >= 0.5
    rows = np.flatnonzero((alpha >= 0.5).any(axis=1))
    cols = np.flatnonzero((alpha >= 0.5).any(axis=0))
    rgba = rgba[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return ForegroundAsset(asset_id, class_label, to_uint16(rgba), view=view)


def random_direction(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def build_library(root, rng: np.random.Generator, classes=("quad", "hex"), per_class: int = 4,
                  size_range=(200, 600)) -> None:
    from .mocap import ViewSample

    for cls in classes:
        for k in range(per_class):
            w, h = (int(x) for x in rng.integers(*size_range, size=2))
            v = random_direction(rng, 1)[0]
            view = ViewSample(k, v, float(rng.uniform(1.0, 4.0)))
            store_asset(root, textured_asset(rng, f"{cls}_{k:03d}", cls, w, h, view=view))


def background(rng: np.random.Generator, w: int = 640, h: int = 480) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] / max(w, h)
    img = np.zeros((h, w, 3))
    for c in range(3):
        for _ in range(3):
            f = rng.uniform(0.5, 6, size=2)
            img[..., c] += rng.uniform(0.05, 0.2) * np.sin(2 * math.pi * (f[0] * xx + f[1] * yy) + rng.uniform(0, 6.3))
        img[..., c] += rng.uniform(0.3, 0.6)
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def build_backgrounds(directory, rng: np.random.Generator, n: int = 3, w: int = 640, h: int = 480) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k in range(n):
        write_png(directory / f"bg_{k:03d}.png", background(rng, w, h))


# -- rapid-rotation synchronisation fixtures ---------------------------------------------------

def yaw_angle(t, drift: float = 0.05, peak: float = 4.0, t_pulse: float = 8.0, width: float = 0.15):
    """Camera yaw for a slow drift plus one Gaussian burst of angular speed."""
    t = np.asarray(t, dtype=float)
    burst = peak * width * math.sqrt(math.pi / 2) * (1 + erf((t - t_pulse) / (width * math.sqrt(2))))
    return drift * t + burst


def rotation_track(t0: float, t1: float, rate: float, **yaw_kw) -> PoseTrack:
    t = np.arange(int(round((t1 - t0) * rate)) + 1) / rate + t0
    q = np.array([quat_from_axis_angle((0, 0, 1), a) for a in yaw_angle(t, **yaw_kw)])
    return PoseTrack("camera", t, np.zeros((len(t), 3)), q)


def panning_frames(offset: float, duration: float, fps: float, width: int = 512, height: int = 4,
                   px_per_rad: float = 20.0, seed: int = 0, **yaw_kw) -> np.ndarray:
    """8-bit frames of a smooth texture panned by the camera yaw at mocap time ``k/fps + offset``."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.01, 0.05, size=4)
    phases = rng.uniform(0, 2 * math.pi, size=4)
    n = int(round(duration * fps))
    shift = px_per_rad * yaw_angle(np.arange(n) / fps + offset, **yaw_kw)
    x = np.arange(width)[None, :] + shift[:, None]
    row = sum(np.sin(2 * math.pi * f * x + p) for f, p in zip(freqs, phases))
    row = 127.5 + 30.0 * row
    return np.repeat(np.round(np.clip(row, 0, 255)).astype(np.uint8)[:, None, :], height, axis=1)[..., None].repeat(3, axis=3)


def sync_pair(offset: float, mocap_rate: float = 100.0, fps: float = 30.0,
              duration: float = 25.0, seed: int = 0) -> tuple[TimeSeries, TimeSeries]:
    """Mocap angular-speed and video motion signals whose true offset is ``offset``."""
    from .mocap import angular_speed_signal

    track = rotation_track(-10.0, duration + 10.0, mocap_rate)
    mocap = angular_speed_signal(track, mocap_rate)
    frames = panning_frames(offset, duration, fps, seed=seed)
    return mocap, video_series(frame_motion_signal(list(frames)), fps)
