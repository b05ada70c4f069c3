"""Motion-capture pose tracks, video synchronisation and viewing geometry.

Quaternions are (w, x, y, z) and rotate body coordinates into world
coordinates. A pose ``(R, p)`` maps a body point ``x`` to ``R x + p``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DegenerateSignalError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    NotFoundError,
    OutOfRangeError,
)
from .images import read_image

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "px", "py", "pz", "qw", "qx", "qy", "qz")
UNIT_TOL = 1e-6
LOW_CONFIDENCE = 0.2


# -- quaternion algebra ------------------------------------------------------

def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=float), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[math.cos(angle / 2)], math.sin(angle / 2) * axis])


def slerp(q0: np.ndarray, q1: np.ndarray, u) -> np.ndarray:
    """Shortest-arc spherical interpolation; broadcasts over leading axes.

    ``u`` of 0 and 1 return ``q0`` and the (sign-aligned) ``q1`` exactly.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = np.asarray(u, dtype=float)[..., None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    near = sin_theta < 1e-8
    safe = np.where(near, 1.0, sin_theta)
    w0 = np.where(near, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    w1 = np.where(near, u, np.sin(u * theta) / safe)
    out = w0 * q0 + w1 * q1
    out = out / np.linalg.norm(out, axis=-1, keepdims=True)
    out = np.where(u == 0.0, q0, out)
    return np.where(u == 1.0, q1, out)


# -- types --------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    t: float
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(4))

    @classmethod
    def identity(cls, t: float = 0.0) -> "Pose":
        return cls(t, np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(self.t, self.rotation @ other.p + self.p, quat_mul(self.q, other.q))

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(self.t, -rt @ self.p, quat_conj(self.q))

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(float(np.linalg.norm(self.q)) - 1.0) <= tol

    def to_dict(self) -> dict:
        return {"t": float(self.t), "p": [float(x) for x in self.p], "q": [float(x) for x in self.q]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d.get("t", 0.0), d["p"], d["q"])


@dataclass(frozen=True)
class PoseTrack:
    """Time-ordered rigid-body samples for one subject (``camera`` or ``object``)."""

    subject: str
    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        if self.subject not in ("camera", "object"):
            raise InvalidInputError(f"subject must be camera or object, got {self.subject!r}")
        if len(self.t) < 2:
            raise InsufficientDataError("a pose track needs at least 2 samples")
        if np.any(np.diff(self.t) <= 0):
            raise FormatError("pose timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> Pose:
        return Pose(float(self.t[k]), self.p[k], self.q[k])

    @property
    def samples(self) -> list[Pose]:
        return [self[k] for k in range(len(self))]

    @property
    def rate(self) -> float:
        return float(1.0 / np.median(np.diff(self.t)))

    @property
    def span(self) -> float:
        return float(self.t[-1] - self.t[0])

    @classmethod
    def from_poses(cls, subject: str, poses: Sequence[Pose]) -> "PoseTrack":
        return cls(
            subject,
            np.array([ps.t for ps in poses], dtype=float),
            np.array([ps.p for ps in poses], dtype=float),
            np.array([ps.q for ps in poses], dtype=float),
        )


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled signal; ``start`` is the time of ``values[0]``."""

    values: np.ndarray
    rate: float
    start: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self.values)) / self.rate


@dataclass(frozen=True)
class SyncResult:
    offset_s: float
    peak_correlation: float
    common_rate_hz: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def low_confidence(self) -> bool:
        return self.peak_correlation < LOW_CONFIDENCE

    def to_json(self) -> dict:
        return {
            "offset_s": self.offset_s,
            "peak_correlation": self.peak_correlation,
            "common_rate_hz": self.common_rate_hz,
        }


@dataclass(frozen=True)
class ViewSample:
    frame_index: int
    v: np.ndarray
    depth: float
    rel: Pose | None = None

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))


# -- parsing and interpolation ---------------------------------------------------

def parse_pose_track(path, subject: str) -> PoseTrack:
    """Read a ``t,px,py,pz,qw,qx,qy,qz`` CSV; non-finite rows are dropped."""
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"no such pose file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty pose file")
    rows = csv.reader(lines)
    header = tuple(h.strip() for h in next(rows))
    if header != CSV_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
    good, dropped = [], 0
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(CSV_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            vals = [float(x) for x in row]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        qn = math.sqrt(sum(x * x for x in vals[4:]))
        if not all(math.isfinite(x) for x in vals) or qn == 0.0:
            dropped += 1
            continue
        good.append(vals[:4] + [x / qn for x in vals[4:]])
    if dropped:
        log.warning("%s: dropped %d rows with non-finite fields", path, dropped)
    if len(good) < 2:
        raise InsufficientDataError(f"{path}: {len(good)} valid rows, need at least 2")
    arr = np.array(good, dtype=float)
    return PoseTrack(subject, arr[:, 0], arr[:, 1:4], arr[:, 4:8], dropped=dropped)


def write_pose_track(path, track: PoseTrack) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for k in range(len(track)):
            w.writerow([repr(float(x)) for x in (track.t[k], *track.p[k], *track.q[k])])


def _interpolate_arrays(track: PoseTrack, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = np.clip(np.searchsorted(track.t, times, side="right") - 1, 0, len(track) - 2)
    t0, t1 = track.t[k], track.t[k + 1]
    u = (times - t0) / (t1 - t0)
    p = track.p[k] + u[:, None] * (track.p[k + 1] - track.p[k])
    q = slerp(track.q[k], track.q[k + 1], u)
    return p, q


def interpolate_pose(track: PoseTrack, t: float) -> Pose:
    if not track.t[0] <= t <= track.t[-1]:
        raise OutOfRangeError(f"t={t} outside track span [{track.t[0]}, {track.t[-1]}]")
    exact = np.flatnonzero(track.t == t)
    if exact.size:
        return track[int(exact[0])]
    p, q = _interpolate_arrays(track, np.array([t], dtype=float))
    return Pose(t, p[0], q[0])


# -- synchronisation ----------------------------------------------------------------

def angular_speed_signal(track: PoseTrack, sample_rate: float) -> TimeSeries:
    """Rotation rate (rad/s) between consecutive uniformly resampled orientations."""
    dt = 1.0 / sample_rate
    if track.span < 2.0 * dt:
        raise InsufficientDataError(f"track spans {track.span:.6g} s, need at least {2 * dt:.6g} s")
    n = int(math.floor(track.span * sample_rate + 1e-9))
    times = np.minimum(track.t[0] + np.arange(n + 1) * dt, track.t[-1])
    _, q = _interpolate_arrays(track, times)
    dots = np.abs(np.sum(q[:-1] * q[1:], axis=1))
    omega = 2.0 * np.arccos(np.minimum(1.0, dots)) / dt
    return TimeSeries(omega, float(sample_rate), float(track.t[0] + dt / 2))


def _gray(frame) -> np.ndarray:
    img = read_image(frame) if isinstance(frame, (str, Path)) else np.asarray(frame)
    img = img.astype(np.float64)
    return img[..., :3].mean(axis=-1) if img.ndim == 3 else img


def frame_motion_signal(frames: Sequence) -> np.ndarray:
    """Mean absolute grayscale difference between consecutive frames, in raw units."""
    if len(frames) < 2:
        raise InsufficientDataError("need at least 2 frames")
    out = np.empty(len(frames) - 1)
    prev = _gray(frames[0])
    for k in range(1, len(frames)):
        cur = _gray(frames[k])
        if cur.shape != prev.shape:
            raise InvalidInputError(f"frame {k} has shape {cur.shape}, expected {prev.shape}")
        out[k - 1] = np.mean(np.abs(cur - prev))
        prev = cur
    return out


def video_series(motion: np.ndarray, fps: float) -> TimeSeries:
    """Frame-difference values sit halfway between the frames they compare."""
    return TimeSeries(np.asarray(motion, dtype=float), float(fps), 0.5 / fps)


def _on_grid(series: TimeSeries, rate: float) -> tuple[int, np.ndarray]:
    times = series.times
    k0 = int(math.ceil(times[0] * rate - 1e-9))
    k1 = int(math.floor(times[-1] * rate + 1e-9))
    grid = np.arange(k0, k1 + 1) / rate
    return k0, np.interp(grid, times, series.values)


def sync_offset(mocap: TimeSeries, video: TimeSeries, search_window: float = 10.0,
                min_overlap: float = 0.5) -> SyncResult:
    """Offset (mocap time minus video time) maximising normalised cross-correlation.

    Both signals are mean-removed and put on a shared integer grid at the higher
    of the two rates, so the answer is quantised to one resample period. The
    score at each lag is the Pearson correlation over the overlapping span;
    lags overlapping less than ``min_overlap`` of the shorter signal are skipped.
    """
    for name, s in (("mocap", mocap), ("video", video)):
        if len(s.values) < 2 or np.ptp(s.values) <= 1e-12 * max(1.0, float(np.max(np.abs(s.values)))):
            raise DegenerateSignalError(f"{name} signal is constant")
    rate = max(mocap.rate, video.rate)
    km, m = _on_grid(mocap, rate)
    kv, v = _on_grid(video, rate)
    m = m - m.mean()
    v = v - v.mean()
    need = max(2, int(math.ceil(min_overlap * min(len(m), len(v)))))
    w = int(math.floor(search_window * rate + 1e-9))
    best_lag, best = None, -np.inf
    # offset = (km - kv + lag) / rate, where m[j + lag] pairs with v[j]
    for off in range(-w, w + 1):
        lag = off - (km - kv)
        j0, j1 = max(0, -lag), min(len(v), len(m) - lag)
        if j1 - j0 < need:
            continue
        a = m[j0 + lag:j1 + lag]
        b = v[j0:j1]
        a = a - a.mean()
        b = b - b.mean()
        den = math.sqrt(float(a @ a) * float(b @ b))
        if den == 0.0:
            continue
        c = float(a @ b) / den
        if c > best:
            best, best_lag = c, off
    if best_lag is None:
        raise DegenerateSignalError("no lag in the search window has a non-constant overlap")
    result = SyncResult(best_lag / rate, min(1.0, best), rate)
    if result.low_confidence:
        msg = f"low sync confidence: peak correlation {best:.3f} < {LOW_CONFIDENCE}"
        log.warning(msg)
        result = SyncResult(result.offset_s, result.peak_correlation, rate, (msg,))
    return result


# -- geometry ----------------------------------------------------------------------

def relative_pose(camera: Pose, obj: Pose) -> Pose:
    """Object-to-camera transform ``inverse(T_world_camera) ∘ T_world_object``."""
    for name, ps in (("camera", camera), ("object", obj)):
        if not ps.is_unit():
            raise InvalidInputError(f"{name} quaternion has norm {np.linalg.norm(ps.q):.9g}")
    rel = camera.inverse().compose(obj)
    return Pose(obj.t, rel.p, rel.q)


def viewing_sample(rel: Pose, frame_index: int) -> ViewSample:
    depth = float(np.linalg.norm(rel.p))
    if depth == 0.0:
        raise DegenerateGeometryError("camera and object origins coincide")
    c = -rel.rotation.T @ rel.p
    return ViewSample(int(frame_index), c / np.linalg.norm(c), depth, rel)
