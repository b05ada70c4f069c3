"""PNG/JPEG reading and writing with RGB channel order and dtype helpers."""
from __future__ import annotations

import re
from pathlib import Path

import cv2
import numpy as np

from .errors import FormatError, NotFoundError

FRAME_PATTERN = re.compile(r"frame_(\d{6})\.png$")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def read_image(path) -> np.ndarray:
    """Read an image as RGB or RGBA (or single channel), keeping its dtype."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such image: {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"cannot decode image: {path}")
    if img.ndim == 3:
        if img.shape[2] == 3:
            img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        elif img.shape[2] == 4:
            img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGBA)
    return img


def write_png(path, img: np.ndarray) -> None:
    path = Path(path)
    if img.ndim == 3 and img.shape[2] == 3:
        img = cv2.cvtColor(img, cv2.COLOR_RGB2BGR)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_RGBA2BGRA)
    if not cv2.imwrite(str(path), np.ascontiguousarray(img)):
        raise OSError(f"failed to write {path}")


def to_float(img: np.ndarray) -> np.ndarray:
    """Integer rasters to float64 in [0, 1]; float input is passed through."""
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float64) / 65535.0
    return np.asarray(img, dtype=np.float64)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_uint16(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)


def read_rgb(path) -> np.ndarray:
    """Read a colour image as float64 RGB in [0, 1], dropping any alpha."""
    img = read_image(path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return to_float(img[:, :, :3])


def list_frames(directory) -> list[Path]:
    """Numbered ``frame_%06d.png`` files in index order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFoundError(f"no such directory: {directory}")
    frames = [p for p in directory.iterdir() if FRAME_PATTERN.search(p.name)]
    return sorted(frames, key=frame_index)


def frame_index(path) -> int:
    m = FRAME_PATTERN.search(Path(path).name)
    if m is None:
        raise FormatError(f"not a numbered frame: {path}")
    return int(m.group(1))


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFoundError(f"no such directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
