import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from synthforge.assetlib import (
    AssetLibrary,
    ForegroundAsset,
    SamplingStrategy,
    SphereHistogram,
    export_heatmap,
    histogram_of,
    load_library,
    sample_asset,
    sphere_bin,
    store_asset,
    viewing_histogram,
)
from synthforge.errors import InvalidInputError, NotFoundError, StrategyUnavailableError
from synthforge.images import read_image
from synthforge.mocap import Pose, ViewSample
from synthforge.synthetic import random_direction, solid_asset, textured_asset


def test_store_load_round_trip(tmp_path, rng):
    view = ViewSample(7, random_direction(rng, 1)[0], 2.5, Pose(0.25, (0.1, 0.2, -2.0), (1, 0, 0, 0)))
    asset = textured_asset(rng, "a1", "mav", 40, 30, view=view)
    asset = ForegroundAsset(asset.id, asset.class_label, asset.rgba, view, {"video": "v0", "frame": 7})
    new_id = store_asset(tmp_path, asset)
    lib = load_library(tmp_path)
    assert len(lib) == 1 and lib.classes == ["mav"]
    back = lib.get(new_id)
    assert back.rgba.dtype == np.uint16 and np.array_equal(back.rgba, asset.rgba)
    assert back.metadata() == asset.metadata()
    assert back.source == {"video": "v0", "frame": 7}


def test_store_twice_gives_distinct_ids(tmp_path):
    a = solid_asset("same", "c", 5, 5)
    assert store_asset(tmp_path, a) != store_asset(tmp_path, a)
    assert len(load_library(tmp_path)) == 2


def test_store_requires_label(tmp_path):
    with pytest.raises(InvalidInputError):
        store_asset(tmp_path, solid_asset("x", "", 5, 5))


def test_load_edge_cases(tmp_path):
    assert len(load_library(tmp_path)) == 0
    with pytest.raises(NotFoundError):
        load_library(tmp_path / "missing")
    store_asset(tmp_path, solid_asset("a", "c", 5, 5))
    (tmp_path / "c" / "a.json").unlink()
    (tmp_path / "c" / "junk.png").write_bytes(b"not a png")
    lib = load_library(tmp_path)
    assert len(lib) == 1 and lib.get("a").view is None
    assert lib.skipped == 1


def test_equal_area_bins_exact():
    # zone area between z0 and z1 over an arc dphi is dphi * (z1 - z0); with
    # equal z slabs and equal arcs every bin is 4*pi / (n_az * n_el)
    for n_az, n_el in ((36, 18), (7, 5)):
        dz = Fraction(2, n_el)
        dphi = Fraction(2, n_az)  # in units of pi
        assert dphi * dz * n_az * n_el == 4
        hist = SphereHistogram(n_az, n_el, np.zeros((n_az, n_el)))
        areas = [hist.bin_area(i, j) for i in range(n_az) for j in range(n_el)]
        np.testing.assert_allclose(areas, 4 * math.pi / (n_az * n_el), rtol=1e-12)


def test_top_direction_single_bin(tmp_path):
    store_asset(tmp_path, solid_asset("a", "c", 4, 4, view=ViewSample(0, (0, 0, 1), 1.0)))
    hist = viewing_histogram(load_library(tmp_path), "c")
    assert np.count_nonzero(hist.counts) == 1
    assert hist.counts[:, -1].sum() == 1


def test_unposed_class_excluded(tmp_path):
    for k in range(3):
        store_asset(tmp_path, solid_asset(f"a{k}", "c", 4, 4))
    hist = viewing_histogram(load_library(tmp_path), "c")
    assert hist.total == 0 and hist.excluded == 3
    with pytest.raises(NotFoundError):
        viewing_histogram(load_library(tmp_path), "nope")


@given(seed=st.integers(0, 2**32 - 1))
def test_histogram_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    dirs = random_direction(rng, 50)
    a = histogram_of(dirs).counts
    b = histogram_of(dirs[rng.permutation(50)]).counts
    assert np.array_equal(a, b) and a.sum() == 50


@given(v=st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: sum(x * x for x in v) > 1e-6))
def test_sphere_bin_matches_edges(v):
    v = np.array(v) / np.linalg.norm(v)
    ia, ie = sphere_bin(v)
    az = math.atan2(v[1], v[0])
    assert -math.pi + ia * 2 * math.pi / 36 <= az + 1e-12
    assert az <= -math.pi + (ia + 1) * 2 * math.pi / 36 + 1e-12
    assert -1 + ie * 2 / 18 <= v[2] + 1e-12 and v[2] <= -1 + (ie + 1) * 2 / 18 + 1e-12


def test_random_sampling_frequencies():
    assets = [solid_asset(f"a{k}", "c", 3, 3) for k in range(4)]
    lib = AssetLibrary(assets)
    rng = np.random.default_rng(0)
    n = 8000
    ids = [sample_asset(lib, "c", SamplingStrategy.RANDOM, rng).id for _ in range(n)]
    sigma = math.sqrt(n * 0.25 * 0.75)
    for a in assets:
        assert abs(ids.count(a.id) - n / 4) <= 3 * sigma
    lone = AssetLibrary([assets[0]])
    assert sample_asset(lone, "c", SamplingStrategy.RANDOM, rng) is assets[0]


def test_uniform_viewpoint_unavailable_without_pose():
    lib = AssetLibrary([solid_asset("a", "c", 3, 3)])
    with pytest.raises(StrategyUnavailableError):
        sample_asset(lib, "c", SamplingStrategy.UNIFORM_VIEWPOINT, np.random.default_rng(0))
    with pytest.raises(NotFoundError):
        sample_asset(lib, "zz", SamplingStrategy.RANDOM, np.random.default_rng(0))


def test_sampling_deterministic():
    assets = [solid_asset(f"a{k}", "c", 3, 3, view=ViewSample(k, random_direction(np.random.default_rng(k), 1)[0], 1.0))
              for k in range(10)]
    lib = AssetLibrary(assets)
    for strategy in SamplingStrategy:
        a = [sample_asset(lib, "c", strategy, np.random.default_rng(5)).id for _ in range(3)]
        b = [sample_asset(lib, "c", strategy, np.random.default_rng(5)).id for _ in range(3)]
        assert a == b


def test_heatmap_examples(tmp_path):
    hist = SphereHistogram(4, 2, np.zeros((4, 2), dtype=int))
    img = export_heatmap(hist, tmp_path / "z.png", cell=(3, 2))
    assert img.shape == (4, 12) and not img.any()
    counts = np.zeros((4, 2), dtype=int)
    counts[1, 1] = 10
    counts[2, 0] = 5
    img = export_heatmap(SphereHistogram(4, 2, counts), tmp_path / "h.png", cell=(3, 2))
    assert np.array_equal(read_image(tmp_path / "h.png"), img)
    # top rows hold the upper elevation slab
    assert np.all(img[0:2, 3:6] == 255)
    assert img[2:4, 6:9].min() in (127, 128) and img[2:4, 6:9].max() in (127, 128)
    assert np.count_nonzero(img) == 12
