"""Gradient-domain (Poisson) cloning solved by successive over-relaxation."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidInputError, RegionOutOfBoundsError

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PoissonParams:
    mixed_gradients: bool = True
    tol: float = 1e-4
    max_iter: int = 10_000
    omega: float = 1.9
    check_every: int = 10

    def __post_init__(self):
        if not 0.0 < self.omega < 2.0:
            raise InvalidInputError("SOR relaxation factor must lie in (0, 2)")
        if self.tol <= 0 or self.max_iter < 0 or self.check_every < 1:
            raise InvalidInputError("tol must be > 0, max_iter >= 0, check_every >= 1")


@dataclass
class PoissonSolution:
    values: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)


@numba.njit(cache=True)
def _sor_sweeps(f, rhs, mask, omega, n_sweeps):
    h, w, nc = f.shape
    for _ in range(n_sweeps):
        for y in range(1, h - 1):
            for x in range(1, w - 1):
                if mask[y, x]:
                    for c in range(nc):
                        gs = 0.25 * (f[y - 1, x, c] + f[y + 1, x, c] + f[y, x - 1, c]
                                     + f[y, x + 1, c] + rhs[y, x, c])
                        f[y, x, c] += omega * (gs - f[y, x, c])


def _neighbour_sum(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[1:-1, 1:-1] = a[:-2, 1:-1] + a[2:, 1:-1] + a[1:-1, :-2] + a[1:-1, 2:]
    return out


def guidance_divergence(src: np.ndarray, dst: np.ndarray | None = None) -> np.ndarray:
    """Sum over the 4 neighbours q of the guidance difference v_pq at each pixel p.

    With ``dst`` given (mixed gradients) each v_pq is whichever of the source
    and destination differences has the larger magnitude. Border pixels get 0.
    """
    out = np.zeros_like(src)
    inner = (slice(1, -1), slice(1, -1))
    shifts = ((slice(0, -2), slice(1, -1)), (slice(2, None), slice(1, -1)),
              (slice(1, -1), slice(0, -2)), (slice(1, -1), slice(2, None)))
    for sh in shifts:
        v = src[inner] - src[sh]
        if dst is not None:
            vd = dst[inner] - dst[sh]
            v = np.where(np.abs(v) > np.abs(vd), v, vd)
        out[inner] += v
    return out


def solve_poisson(target: np.ndarray, mask: np.ndarray, divergence: np.ndarray,
                  params: PoissonParams = PoissonParams()) -> PoissonSolution:
    """Solve ``4 f_p - sum_q f_q = div_p`` on ``mask`` with ``f = target`` elsewhere.

    ``target`` is (H, W, C) and doubles as the initial iterate. ``mask`` must
    not touch the outer ring. The stopping rule is the relative residual in the
    max norm, ``max|r| / max|b|`` with ``b`` the full right-hand side including
    the Dirichlet terms; it is checked every ``check_every`` sweeps and the
    iterate with the smallest residual is returned.
    """
    f = np.array(target, dtype=np.float64, copy=True)
    if f.ndim == 2:
        f = f[:, :, None]
    mask = np.asarray(mask, dtype=bool)
    rhs = np.asarray(divergence, dtype=np.float64).reshape(f.shape)
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        raise RegionOutOfBoundsError("region touches the working-window border")
    m3 = mask[:, :, None]
    fixed = np.where(m3, 0.0, f)
    b_full = np.where(m3, rhs + _neighbour_sum(fixed), 0.0)
    scale = float(np.max(np.abs(b_full))) or 1.0

    def residual(g):
        r = np.where(m3, rhs + _neighbour_sum(g) - 4.0 * g, 0.0)
        return float(np.max(np.abs(r))) / scale

    res = residual(f)
    history = [res]
    best, best_res = f.copy(), res
    it = 0
    while res > params.tol and it < params.max_iter:
        n = min(params.check_every, params.max_iter - it)
        _sor_sweeps(f, rhs, mask, params.omega, n)
        it += n
        res = residual(f)
        history.append(res)
        if res < best_res:
            best, best_res = f.copy(), res
    converged = best_res <= params.tol
    if not converged:
        msg = f"Poisson solve stopped at relative residual {best_res:.3g} > tol {params.tol:.3g} after {it} sweeps"
        log.warning(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    values = best if target.ndim == 3 else best[:, :, 0]
    return PoissonSolution(values, it, converged, history)


def poisson_blend(background: np.ndarray, fg: np.ndarray, center, params: PoissonParams = PoissonParams(),
                  threshold: float = 0.5, region: np.ndarray | None = None,
                  out: np.ndarray | None = None) -> np.ndarray:
    """Seamlessly clone the RGBA canvas ``fg`` into ``background`` centred at ``center``.

    The cloned region is ``alpha >= threshold`` (or ``region``, in canvas
    coordinates) and must keep a 1-pixel margin from the background border.
    Pixels outside the region are left untouched.
    """
    from .compositor import top_left

    bh, bw = background.shape[:2]
    fh, fw = fg.shape[:2]
    x0, y0 = top_left(center, (fh, fw))
    omega = (fg[:, :, 3] >= threshold) if region is None else np.asarray(region, dtype=bool)
    if out is None:
        out = np.array(background, copy=True)
    if not omega.any():
        return out
    ys, xs = np.nonzero(omega)
    ry0, ry1 = ys.min() + y0, ys.max() + y0
    rx0, rx1 = xs.min() + x0, xs.max() + x0
    if ry0 < 1 or rx0 < 1 or ry1 > bh - 2 or rx1 > bw - 2:
        raise RegionOutOfBoundsError("cloned region must keep a 1-pixel margin inside the background")
    # working window: region bounding box grown by one pixel
    wy0, wy1, wx0, wx1 = ry0 - 1, ry1 + 2, rx0 - 1, rx1 + 2
    dst = background[wy0:wy1, wx0:wx1].astype(np.float64)
    mask = np.zeros(dst.shape[:2], dtype=bool)
    mask[ys + y0 - wy0, xs + x0 - wx0] = True
    # source colours over the window; pixels beyond the canvas replicate its edge
    pad = ((max(0, y0 - wy0), max(0, wy1 - (y0 + fh))), (max(0, x0 - wx0), max(0, wx1 - (x0 + fw))), (0, 0))
    src = np.pad(fg[:, :, :3].astype(np.float64), pad, mode="edge")
    sy, sx = wy0 - (y0 - pad[0][0]), wx0 - (x0 - pad[1][0])
    src = src[sy:sy + dst.shape[0], sx:sx + dst.shape[1]]
    div = guidance_divergence(src, dst if params.mixed_gradients else None)
    sol = solve_poisson(dst, mask, div, params)
    vals = np.clip(sol.values, 0.0, 1.0) if np.issubdtype(out.dtype, np.floating) else sol.values
    win = out[wy0:wy1, wx0:wx1]
    win[mask] = vals[mask].astype(out.dtype)
    return out
