"""Green-screen keying: colour-difference alpha, despill and asset extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, EmptyForegroundError, InvalidInputError
from .images import to_float, to_uint16

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class KeyerParams:
    ramp_low: float = 0.05
    ramp_high: float = 0.25
    despill_enabled: bool = True
    min_component_area: int = 64
    matte_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ramp_low < self.ramp_high <= 1.0:
            raise ConfigError(f"need 0 <= ramp_low < ramp_high <= 1, got {self.ramp_low}, {self.ramp_high}")
        if self.min_component_area < 0:
            raise ConfigError("min_component_area must be >= 0")
        if not 0.0 < self.matte_threshold < 1.0:
            raise ConfigError("matte_threshold must lie strictly between 0 and 1")


def _check_frame(frame) -> np.ndarray:
    frame = to_float(np.asarray(frame))
    if frame.ndim != 3 or frame.shape[2] < 3 or frame.shape[0] == 0 or frame.shape[1] == 0:
        raise InvalidInputError(f"expected a non-empty H x W x 3 frame, got shape {frame.shape}")
    return frame[:, :, :3]


def green_dominance(frame: np.ndarray) -> np.ndarray:
    return frame[..., 1] - np.maximum(frame[..., 0], frame[..., 2])


def compute_alpha(frame, params: KeyerParams = KeyerParams()) -> np.ndarray:
    """Per-pixel alpha: 1 below ``ramp_low`` green dominance, 0 above ``ramp_high``."""
    frame = _check_frame(frame)
    d = green_dominance(frame)
    alpha = 1.0 - (d - params.ramp_low) / (params.ramp_high - params.ramp_low)
    return np.clip(alpha, 0.0, 1.0)


def despill(frame, matte: np.ndarray) -> np.ndarray:
    """Clamp green to ``max(r, b)`` wherever the matte is not fully opaque."""
    frame = _check_frame(frame)
    matte = np.asarray(matte)
    if matte.shape != frame.shape[:2]:
        raise InvalidInputError(f"matte shape {matte.shape} does not match frame {frame.shape[:2]}")
    out = frame.copy()
    limit = np.maximum(frame[..., 0], frame[..., 2])
    spill = matte < 1.0
    out[..., 1] = np.where(spill, np.minimum(frame[..., 1], limit), frame[..., 1])
    return out


def foreground_components(matte: np.ndarray, params: KeyerParams) -> np.ndarray:
    """Binary foreground with 8-connected components under the area floor removed."""
    binary = matte >= params.matte_threshold
    labels, n = ndimage.label(binary, structure=_EIGHT_CONNECTED)
    if n == 0:
        return binary
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = areas >= params.min_component_area
    keep[0] = False
    return keep[labels]


def extract_asset(frame, params: KeyerParams, label: str, view=None, source=None, asset_id: str = ""):
    """Key a frame and return the tight straight-alpha cutout as a ForegroundAsset.

    Alpha of removed small components is zeroed so they cannot reappear
    inside the crop.
    """
    from .assetlib import ForegroundAsset

    frame = _check_frame(frame)
    matte = compute_alpha(frame, params)
    fg = foreground_components(matte, params)
    if not fg.any():
        raise EmptyForegroundError("no foreground component survives the area filter")
    removed = (matte >= params.matte_threshold) & ~fg
    matte = np.where(removed, 0.0, matte)
    rgb = despill(frame, matte) if params.despill_enabled else frame
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    sl = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    rgba = np.dstack([rgb[sl], matte[sl]])
    return ForegroundAsset(asset_id, label, to_uint16(rgba), view=view, source=source or {})
