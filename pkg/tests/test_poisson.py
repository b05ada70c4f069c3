import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from synthforge.errors import RegionOutOfBoundsError
from synthforge.poisson import (
    ConvergenceWarning,
    PoissonParams,
    guidance_divergence,
    poisson_blend,
    solve_poisson,
)


def laplacian(f):
    return f[:-2, 1:-1] + f[2:, 1:-1] + f[1:-1, :-2] + f[1:-1, 2:] - 4 * f[1:-1, 1:-1]


def strip_oracle(target, div):
    """Direct solve of 4 f_i - f_{i-1} - f_{i+1} = div_i + up_i + down_i on the middle row."""
    n = target.shape[1] - 2
    rhs = div[1, 1:-1] + target[0, 1:-1] + target[2, 1:-1]
    rhs[0] += target[1, 0]
    rhs[-1] += target[1, -1]
    bands = np.zeros((3, n))
    bands[0, 1:] = -1
    bands[1, :] = 4
    bands[2, :-1] = -1
    return solve_banded((1, 1), bands, rhs)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 120), seed=st.integers(0, 2**32 - 1))
def test_strip_matches_tridiagonal_oracle(n, seed):
    rng = np.random.default_rng(seed)
    target = rng.random((3, n + 2))
    div = np.zeros_like(target)
    div[1, 1:-1] = rng.normal(scale=0.1, size=n)
    mask = np.zeros(target.shape, dtype=bool)
    mask[1, 1:-1] = True
    sol = solve_poisson(target, mask, div, PoissonParams(tol=1e-12, max_iter=100_000))
    assert sol.converged
    np.testing.assert_allclose(sol.values[1, 1:-1], strip_oracle(target, div), atol=1e-6)
    # pixels off the strip are untouched
    assert np.array_equal(sol.values[~mask], target[~mask])


def test_identical_patch_is_bit_identical():
    rng = np.random.default_rng(1)
    bg = rng.random((40, 50, 3)).astype(np.float32)
    fg = np.dstack([bg[10:30, 15:35], np.ones((20, 20), np.float32)])
    out = poisson_blend(bg, fg, (25.0, 20.0))
    assert np.array_equal(out, bg)


def test_zero_guidance_maximum_principle():
    rng = np.random.default_rng(2)
    bg = rng.random((64, 64, 3))
    fg = np.zeros((40, 40, 4))
    fg[..., :3] = 0.3
    fg[..., 3] = 1.0
    params = PoissonParams(mixed_gradients=False)
    out = poisson_blend(bg, fg, (32.0, 32.0), params)
    inner = out[12:52, 12:52]
    ring = np.concatenate([out[11, 11:53], out[52, 11:53], out[11:53, 11], out[11:53, 52]])
    assert inner.min() >= ring.min() - 1e-12 and inner.max() <= ring.max() + 1e-12
    assert np.abs(laplacian(out[11:53, 11:53])).max() <= 10 * params.tol
    # outside the region nothing changes
    keep = np.ones((64, 64), bool)
    keep[12:52, 12:52] = False
    assert np.array_equal(out[keep], bg[keep])


def test_residual_history_decreases_at_checkpoints():
    rng = np.random.default_rng(3)
    target = rng.random((30, 30))
    mask = np.zeros((30, 30), bool)
    mask[2:-2, 2:-2] = True
    sol = solve_poisson(target, mask, np.zeros_like(target), PoissonParams(tol=1e-8))
    assert all(b <= a for a, b in zip(sol.residuals, sol.residuals[1:]))


def test_nonconvergence_returns_best_iterate():
    target = np.zeros((60, 60))
    target[0] = 1.0
    mask = np.zeros((60, 60), bool)
    mask[1:-1, 1:-1] = True
    with pytest.warns(ConvergenceWarning):
        sol = solve_poisson(target, mask, np.zeros_like(target), PoissonParams(tol=1e-12, max_iter=20))
    assert not sol.converged and sol.iterations == 20
    assert min(sol.residuals) < sol.residuals[0]


def test_region_touching_border_rejected():
    bg = np.zeros((20, 20, 3))
    fg = np.ones((20, 20, 4))
    with pytest.raises(RegionOutOfBoundsError):
        poisson_blend(bg, fg, (10.0, 10.0))
    with pytest.raises(RegionOutOfBoundsError):
        solve_poisson(np.zeros((5, 5)), np.ones((5, 5), bool), np.zeros((5, 5)))


def test_mixed_guidance_picks_larger_gradient():
    src = np.zeros((3, 3, 1))
    dst = np.zeros((3, 3, 1))
    src[1, 1] = 1.0   # every source difference is +1
    dst[0, 1] = 5.0   # one destination difference is -5
    div = guidance_divergence(src, dst)
    assert div[1, 1, 0] == pytest.approx(3 * 1.0 - 5.0)
    assert guidance_divergence(src)[1, 1, 0] == pytest.approx(4.0)
