import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthforge.assetlib import AssetLibrary
from synthforge.compositor import (
    BackgroundSet,
    BlendConfig,
    GenConfig,
    Placement,
    SceneRecipe,
    alpha_blend,
    brightness_adjust,
    brightness_factor,
    generate_sample,
    render,
    sample_recipe,
    top_left,
    transform_asset,
)
from synthforge.errors import ConfigError, DegenerateTransformError, InvalidInputError, NotFoundError
from synthforge.images import to_uint8
from synthforge.synthetic import background, solid_asset, textured_asset


def gray_bg(w=200, h=150, value=0.0):
    return BackgroundSet({"bg": np.full((h, w, 3), value, dtype=np.float32)})


def recipe(*placements, bg="bg"):
    return SceneRecipe(0, 0, bg, tuple(placements))


def place(asset_id, center, scale=1.0, rotation=0.0, factor=1.0, cls="c"):
    return Placement(asset_id, cls, scale, center, rotation, factor)


# -- config ------------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(scale_min=0.4, scale_max=0.3)
    with pytest.raises(ConfigError):
        GenConfig(brightness_floor=0.0)
    with pytest.raises(ConfigError):
        GenConfig(objects_min=0)
    with pytest.raises(ConfigError):
        GenConfig(max_pairwise_overlap_iou=1.5)
    with pytest.raises(ConfigError):
        GenConfig.from_dict({"scale_mn": 0.1})
    cfg = GenConfig.from_dict({"blend": {"mode": "poisson"}, "classes": ["a"]})
    assert cfg.blend.mode == "poisson" and cfg.classes == ("a",)
    assert GenConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.reference_scale == cfg.scale_max


# -- recipes -----------------------------------------------------------------------------

def small_world(n_assets=1, seed=0):
    rng = np.random.default_rng(seed)
    lib = AssetLibrary([textured_asset(rng, f"a{k}", "c", 300, 200) for k in range(n_assets)])
    return lib, BackgroundSet({"bg": background(rng, 640, 480)})


def test_single_placement_recipe():
    lib, bgs = small_world()
    r = sample_recipe(GenConfig(objects_min=1, objects_max=1), bgs, lib, 0)
    assert len(r.placements) == 1 and r.background == "bg"


def test_recipe_deterministic_and_round_trips():
    lib, bgs = small_world(3)
    cfg = GenConfig(master_seed=99)
    a, b = sample_recipe(cfg, bgs, lib, 5), sample_recipe(cfg, bgs, lib, 5)
    assert a == b
    assert SceneRecipe.from_dict(a.to_dict()) == a
    assert sample_recipe(cfg, bgs, lib, 6) != a


def test_recipe_invariants():
    lib, bgs = small_world(4)
    cfg = GenConfig(master_seed=1, objects_min=3, objects_max=3)
    for i in range(50):
        r = sample_recipe(cfg, bgs, lib, i)
        scales = [p.scale for p in r.placements]
        assert scales == sorted(scales)
        for p in r.placements:
            assert cfg.scale_min <= p.scale <= cfg.scale_max
            assert p.brightness_factor == brightness_factor(p.scale, cfg.reference_scale, cfg.brightness_floor)


def test_scale_distribution():
    lib, bgs = small_world()
    cfg = GenConfig(objects_min=1, objects_max=1, master_seed=3)
    scales = np.array([sample_recipe(cfg, bgs, lib, i).placements[0].scale for i in range(10_000)])
    assert scales.min() >= 0.1 and scales.max() <= 0.3
    assert abs(scales.mean() - 0.2) <= 0.005


def test_depth_brightness_mode():
    from synthforge.mocap import ViewSample

    rng = np.random.default_rng(0)
    lib = AssetLibrary([textured_asset(rng, "near", "c", 100, 100, view=ViewSample(0, (0, 0, 1), 1.0)),
                        textured_asset(rng, "far", "d", 100, 100, view=ViewSample(0, (0, 0, 1), 2.0))])
    cfg = GenConfig(brightness_mode="depth", objects_min=2, objects_max=2, max_pairwise_overlap_iou=1.0,
                    brightness_floor=0.1)
    for i in range(20):
        r = sample_recipe(cfg, gray_bg(640, 480), lib, i)
        factors = {p.asset_id: p.brightness_factor for p in r.placements}
        if set(factors) == {"near", "far"}:
            assert factors == {"near": 1.0, "far": 0.25}
            return
    pytest.fail("no recipe drew both assets")


# -- raster operations -----------------------------------------------------------------------

def test_transform_identity_and_sizes(rng):
    a = textured_asset(rng, "a", "c", 100, 80).rgba_float
    assert np.array_equal(transform_asset(a, 1.0, 0.0), a)
    assert transform_asset(a, 0.5, 0.0).shape[:2] == (a.shape[0] // 2, a.shape[1] // 2)
    box = solid_asset("b", "c", 100, 80).rgba_float
    assert transform_asset(box, 0.5, 0.0).shape[:2] == (40, 50)
    with pytest.raises(DegenerateTransformError):
        transform_asset(box, 0.001, 0.0)


@given(w=st.integers(5, 60), h=st.integers(5, 60))
@settings(max_examples=30, deadline=None)
def test_quarter_turn_conserves_alpha(w, h):
    box = solid_asset("b", "c", w, h, shape="ellipse").rgba_float
    out = transform_asset(box, 1.0, math.pi / 2)
    assert out.shape[:2] == (w, h)
    assert out[..., 3].sum() == pytest.approx(box[..., 3].sum(), rel=0.01)


def test_transform_keeps_straight_colour():
    box = solid_asset("b", "c", 40, 30, color=(0.2, 0.6, 0.9), shape="ellipse").rgba_float
    out = transform_asset(box, 0.37, 0.7)
    covered = out[..., 3] > 1e-3
    np.testing.assert_allclose(out[covered][:, :3], np.broadcast_to([0.2, 0.6, 0.9], (covered.sum(), 3)), atol=2e-3)


def test_brightness_examples():
    r = np.full((4, 4, 4), 0.8, dtype=np.float32)
    assert np.array_equal(brightness_adjust(r, 1.0), r)
    half = brightness_adjust(r, 0.5)
    np.testing.assert_allclose(half[..., :3], 0.4)
    assert np.array_equal(half[..., 3], r[..., 3])
    with pytest.raises(InvalidInputError):
        brightness_adjust(r, 0.0)
    assert brightness_factor(0.3, 0.3, 0.3) == 1.0
    assert brightness_factor(0.15, 0.3, 0.3) == 0.3
    assert brightness_factor(0.15, 0.3, 0.1) == pytest.approx(0.25)


def test_alpha_blend_examples():
    bg = np.random.default_rng(0).random((30, 40, 3)).astype(np.float32)
    fg = np.zeros((10, 12, 4), np.float32)
    fg[..., :3] = 0.7
    fg[..., 3] = 1.0
    out = alpha_blend(bg, fg, (20.0, 15.0), sigma=0)
    x0, y0 = top_left((20.0, 15.0), fg.shape)
    inside = np.zeros((30, 40), bool)
    inside[y0:y0 + 10, x0:x0 + 12] = True
    assert np.all(out[inside] == np.float32(0.7))
    assert np.array_equal(out[~inside], bg[~inside])
    fg[..., 3] = 0.0
    assert np.array_equal(alpha_blend(bg, fg, (20.0, 15.0)), bg)
    fg[..., 3] = 0.5
    black = np.zeros_like(bg)
    np.testing.assert_allclose(alpha_blend(black, fg, (20.0, 15.0), sigma=0)[inside], 0.35, atol=1e-6)
    # no intersection leaves the background alone
    assert np.array_equal(alpha_blend(bg, fg, (500.0, 500.0)), bg)


# -- rendering ---------------------------------------------------------------------------------

def test_single_opaque_object():
    lib = AssetLibrary([solid_asset("sq", "c", 20, 10)])
    cfg = GenConfig(blend=BlendConfig(sigma=0.0))
    s = render(recipe(place("sq", (50.0, 40.0))), cfg, lib, gray_bg())
    (inst,) = s.instances
    assert inst.visible_box == inst.amodal_box == (40, 35, 59, 44)
    assert inst.area == 200
    assert np.all(s.image[35:45, 40:60] == 128)


def test_occlusion_erases_farther_mask():
    lib = AssetLibrary([solid_asset("big", "c", 30, 30, color=(1, 0, 0)),
                        solid_asset("small", "c", 20, 20, color=(0, 0, 1))])
    cfg = GenConfig(blend=BlendConfig(sigma=0.0))
    # smaller scale is drawn first (farther); the nearer one covers it entirely
    r = recipe(place("small", (50.0, 50.0), scale=0.9), place("big", (50.0, 50.0), scale=1.0))
    s = render(r, cfg, lib, gray_bg())
    assert len(s.instances) == 1 and s.instances[0].asset_id == "big"
    assert s.instances[0].area == 900
    # partial overlap: set arithmetic on the footprints
    r = recipe(place("small", (40.0, 40.0), scale=0.99), place("big", (60.0, 60.0), scale=1.0))
    s = render(r, cfg, lib, gray_bg())
    far, near = s.instances
    fp_far = np.zeros((150, 200), bool)
    fp_far[30:50, 30:50] = True
    fp_near = np.zeros((150, 200), bool)
    fp_near[45:75, 45:75] = True
    assert np.array_equal(near.visible_mask, fp_near)
    assert np.array_equal(far.visible_mask, fp_far & ~fp_near)
    assert far.amodal_box == (30, 30, 49, 49)


def test_empty_recipe_returns_background():
    bgs = BackgroundSet({"bg": background(np.random.default_rng(1), 64, 48)})
    s = render(recipe(), GenConfig(), AssetLibrary(), bgs)
    assert s.instances == [] and np.array_equal(s.image, background(np.random.default_rng(1), 64, 48))


def test_missing_asset():
    with pytest.raises(NotFoundError):
        render(recipe(place("nope", (5.0, 5.0))), GenConfig(), AssetLibrary(), gray_bg())


@pytest.mark.parametrize("mode", ["feather", "poisson"])
def test_render_invariants(mode):
    lib, bgs = small_world(4)
    cfg = GenConfig(master_seed=4, blend=BlendConfig(mode=mode), objects_min=2, objects_max=3)
    for i in range(4 if mode == "poisson" else 20):
        s = generate_sample(cfg, lib, bgs, i)
        bg = to_uint8(bgs.get("bg"))
        touched = np.zeros(bg.shape[:2], bool)
        total = np.zeros(bg.shape[:2], int)
        for pl in s.recipe.placements:
            asset = lib.get(pl.asset_id)
            fg = transform_asset(asset.rgba_float, pl.scale, pl.rotation)
            x0, y0 = top_left(pl.center, fg.shape)
            touched[max(y0 - 1, 0):y0 + fg.shape[0] + 1, max(x0 - 1, 0):x0 + fg.shape[1] + 1] = True
        for inst in s.instances:
            total += inst.visible_mask
            x0, y0, x1, y1 = inst.amodal_box
            ys, xs = np.nonzero(inst.visible_mask)
            assert xs.min() >= x0 and xs.max() <= x1 and ys.min() >= y0 and ys.max() <= y1
        assert total.max() <= 1
        assert np.array_equal(s.image[~touched], bg[~touched])


def test_generate_is_deterministic():
    lib, bgs = small_world(3)
    cfg = GenConfig(master_seed=21)
    a, b = generate_sample(cfg, lib, bgs, 3), generate_sample(cfg, lib, bgs, 3)
    assert np.array_equal(a.image, b.image)
    assert [i.amodal_box for i in a.instances] == [i.amodal_box for i in b.instances]


def test_background_resize_to_image_size():
    bgs = BackgroundSet({"bg": np.zeros((100, 120, 3))}, image_size=(60, 50))
    assert bgs.size("bg") == (60, 50)
    with pytest.raises(NotFoundError):
        BackgroundSet({})
