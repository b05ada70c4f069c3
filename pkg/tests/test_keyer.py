import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthforge.errors import ConfigError, EmptyForegroundError, InvalidInputError
from synthforge.keyer import KeyerParams, compute_alpha, despill, extract_asset, foreground_components
from synthforge.synthetic import patch_on_green

unit = st.floats(0.0, 1.0, allow_nan=False)
pixel = st.tuples(unit, unit, unit)


def px(*rgb):
    return np.array(rgb, dtype=float).reshape(1, 1, 3)


def test_alpha_pure_green_and_gray():
    assert compute_alpha(px(0, 1, 0))[0, 0] == 0.0
    assert compute_alpha(px(0.5, 0.5, 0.5))[0, 0] == 1.0


def test_alpha_ramp_midpoint():
    # d = 0.2 -> 1 - 0.15 / 0.2
    assert compute_alpha(px(0.2, 0.4, 0.2))[0, 0] == pytest.approx(0.25, abs=1e-12)


def test_alpha_rejects_empty_frame():
    with pytest.raises(InvalidInputError):
        compute_alpha(np.zeros((0, 4, 3)))


def test_params_validation():
    with pytest.raises(ConfigError):
        KeyerParams(ramp_low=0.3, ramp_high=0.2)
    with pytest.raises(ConfigError):
        KeyerParams(matte_threshold=1.0)


@given(a=pixel, b=pixel)
def test_alpha_monotone_in_dominance(a, b):
    da = a[1] - max(a[0], a[2])
    db = b[1] - max(b[0], b[2])
    aa, ab = compute_alpha(px(*a))[0, 0], compute_alpha(px(*b))[0, 0]
    assert 0.0 <= aa <= 1.0
    if da <= db:
        assert aa >= ab


@given(p=pixel)
def test_alpha_is_per_pixel(p):
    frame = np.zeros((3, 3, 3))
    frame[...] = (0, 1, 0)
    frame[1, 1] = p
    assert compute_alpha(frame)[1, 1] == compute_alpha(px(*p))[0, 0]


@pytest.mark.parametrize("rgb, alpha, expected", [
    ((0.5, 0.5, 0.5), 1.0, (0.5, 0.5, 0.5)),
    ((0.2, 0.6, 0.3), 0.5, (0.2, 0.3, 0.3)),
    ((0.4, 0.1, 0.2), 0.5, (0.4, 0.1, 0.2)),
])
def test_despill_examples(rgb, alpha, expected):
    out = despill(px(*rgb), np.full((1, 1), alpha))
    np.testing.assert_allclose(out[0, 0], expected, atol=1e-12)


def test_despill_shape_mismatch():
    with pytest.raises(InvalidInputError):
        despill(np.zeros((4, 4, 3)), np.zeros((4, 5)))


@given(p=pixel, a=unit)
def test_despill_never_increases(p, a):
    out = despill(px(*p), np.full((1, 1), a))[0, 0]
    assert out[0] == p[0] and out[2] == p[2]
    assert out[1] <= p[1]


def test_extract_all_green_is_empty():
    frame = np.zeros((20, 20, 3))
    frame[..., 1] = 1.0
    with pytest.raises(EmptyForegroundError):
        extract_asset(frame, KeyerParams(), "x")


def green_frame(h=100, w=100):
    frame = np.zeros((h, w, 3))
    frame[..., 1] = 1.0
    return frame


def test_extract_gray_square():
    frame = green_frame()
    frame[45:55, 45:55] = 0.5
    asset = extract_asset(frame, KeyerParams(), "sq")
    assert asset.size == (10, 10)
    assert np.all(asset.rgba[..., 3] == 65535)
    assert asset.class_label == "sq"


def test_extract_drops_speck():
    frame = green_frame()
    frame[40:60, 40:60] = 0.5
    frame[5:7, 5:7] = 0.5  # 4-pixel speck
    fg = foreground_components(compute_alpha(frame), KeyerParams(min_component_area=64))
    assert fg.sum() == 400
    asset = extract_asset(frame, KeyerParams(min_component_area=64), "sq")
    assert asset.size == (20, 20)


def test_extract_speck_alpha_zeroed_inside_crop():
    frame = green_frame()
    frame[20:40, 20:40] = 0.5
    frame[60:80, 60:80] = 0.5
    frame[50, 50] = 0.5  # isolated pixel inside the union crop
    asset = extract_asset(frame, KeyerParams(min_component_area=64), "sq")
    assert asset.size == (60, 60)
    assert asset.rgba[30, 30, 3] == 0


def test_components_are_eight_connected():
    matte = np.zeros((10, 10))
    for k in range(8):
        matte[k + 1, k + 1] = 1.0  # a diagonal line is one component under 8-connectivity
    assert foreground_components(matte, KeyerParams(min_component_area=8)).sum() == 8


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_trip_exact_rgb(seed):
    rng = np.random.default_rng(seed)
    frame, matte, rgb, (y0, x0) = patch_on_green(rng, size=(48, 64))
    asset = extract_asset(frame, KeyerParams(min_component_area=1), "p")
    alpha = asset.rgba[..., 3] / 65535.0
    got = np.round(asset.rgba[..., :3] / 65535.0 * 255.0).astype(np.uint8)
    assert got.shape[:2] == rgb.shape[:2]
    assert np.array_equal(got[alpha == 1.0], rgb[alpha == 1.0])
    assert np.all(alpha == 1.0)
