import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrainqa.metrics import (
    STATISTICS_FIELDS,
    DensityWeights,
    MetricWeights,
    OpennessWeights,
    RegionFeatures,
    SceneAnalysis,
    SkyVisibilityWeights,
    avg_floors,
    bcr,
    building_penalty,
    edge_density,
    edge_penalty,
    far,
    openness_index,
    scene_statistics,
    sky_visibility_score,
    spatial_openness_score,
    terrain_flatness,
    terrain_roughness,
    urban_density_score,
    visibility_range_score,
    visual_simplicity,
)
from terrainqa.raster import FULL_IMAGE, PointPct, Raster, RegionPct, SceneBundle, SegRaster, edge_map
from terrainqa.synthetic import LABEL, city_scene, uniform_scene

unit = st.floats(0.0, 1.0)


def features(**kw) -> RegionFeatures:
    base = dict(mean_svf=0.5, std_svf=0.1, mean_h=5.0, std_h=2.0, bcr=0.2, far=0.1,
                building_ratio=0.2, nature_ratio=0.3, edge_var=100.0, edge_density=0.2, brightness=0.5)
    base.update(kw)
    return RegionFeatures(**base)


# -- weights


def test_default_weights():
    w = MetricWeights()
    assert (w.density.bcr, w.density.far, w.density.svf_comp) == (0.5, 0.25, 0.15)
    assert (w.openness.openness_index, w.openness.mean_svf, w.openness.low_building) == (0.5, 0.25, 0.15)
    assert (w.sky_visibility.svf, w.sky_visibility.building_penalty, w.sky_visibility.edge_penalty) == (0.7, 0.3, 0.05)
    assert (w.visibility_range.viewshed, w.visibility_range.svf_context, w.visibility_range.terrain) == (0.6, 0.25, 0.15)


def test_weights_validation():
    with pytest.raises(ValueError):
        MetricWeights(density=DensityWeights(bcr=0.6))
    with pytest.raises(ValueError):
        MetricWeights(openness=OpennessWeights(openness_index=0.4))
    with pytest.raises(ValueError):
        DensityWeights(bcr=-0.1)
    with pytest.raises(ValueError):
        MetricWeights(sky_visibility=SkyVisibilityWeights(edge_penalty=0.1))
    assert MetricWeights(sky_visibility=SkyVisibilityWeights(edge_penalty=0.025))


# -- scalar terms


def test_openness_index():
    assert openness_index(1.0, 0.5) == 1.0
    assert openness_index(0.0, 0.0) == 0.0
    assert openness_index(0.6, 0.2) == pytest.approx(0.56)


def test_flatness_simplicity_roughness():
    assert terrain_flatness(0) == 1.0
    assert terrain_flatness(5) == pytest.approx(0.3679, abs=1e-4)
    assert visual_simplicity(0) == 1.0
    assert visual_simplicity(500) == pytest.approx(0.3679, abs=1e-4)
    assert visual_simplicity(5000) == pytest.approx(4.54e-5, rel=1e-3)
    assert terrain_roughness(10) == 1.0
    assert terrain_roughness(0) == pytest.approx(0.6065, abs=1e-4)


@given(st.floats(0, 100), st.floats(0, 100))
def test_flatness_monotone_and_roughness_symmetric(a, b):
    lo, hi = sorted((a, b))
    assert terrain_flatness(hi) <= terrain_flatness(lo)
    d = hi / 10
    assert terrain_roughness(10 + d) == pytest.approx(terrain_roughness(10 - d))


def test_far():
    assert far(0.0, 7.0) == 0.0
    assert far(0.5, 10.0) == 1.0
    assert far(0.31, 3.53) == pytest.approx(0.219, abs=1e-3)


def _seg(labels: np.ndarray) -> SegRaster:
    return SegRaster(labels.astype(np.int64))


def test_bcr_and_avg_floors():
    n = 10
    classes = np.full((n, n), LABEL["grassland"])
    assert bcr(_seg(classes), FULL_IMAGE) == 0.0
    assert avg_floors(Raster(np.zeros((n, n))), _seg(classes), FULL_IMAGE) == 0.0
    classes[:] = LABEL["buildings"]
    assert bcr(_seg(classes), FULL_IMAGE) == 1.0
    assert avg_floors(Raster(np.full((n, n), 7.0)), _seg(classes), FULL_IMAGE) == 2.0
    assert avg_floors(Raster(np.full((n, n), 105.0)), _seg(classes), FULL_IMAGE) == 20.0
    # 28 of 100 pixels are buildings
    mixed = np.full((n, n), LABEL["grassland"]).ravel()
    mixed[:28] = LABEL["buildings"]
    assert bcr(_seg(mixed.reshape(n, n)), FULL_IMAGE) == pytest.approx(0.28)


def test_building_penalty():
    classes = np.full((41, 41), LABEL["roads"])
    centre = PointPct(50, 50)
    assert building_penalty(_seg(classes), centre) == 0.0
    classes[:] = LABEL["buildings"]
    assert building_penalty(_seg(classes), centre) == pytest.approx(0.3)
    half = np.full((42, 42), LABEL["roads"])
    half[:, :21] = LABEL["buildings"]
    # 21x21 window centred on column 21 spans 11..31: columns 11..20 are buildings
    p = building_penalty(_seg(half), PointPct(50, 50))
    assert p == pytest.approx(0.3 * 10 / 21)
    # the window covers this whole 20x20 grid, half of it built
    even = np.full((20, 20), LABEL["roads"])
    even[:, :10] = LABEL["buildings"]
    assert building_penalty(_seg(even), PointPct(50, 50)) == pytest.approx(0.15)


def test_edge_penalty():
    flat = Raster(np.full((30, 30), 0.4), kind="brightness")
    assert edge_penalty(edge_map(flat), PointPct(50, 50)) == 0.0
    step = np.zeros((30, 30))
    step[:, 15:] = 1.0
    e = edge_map(Raster(step, kind="brightness"))
    assert edge_penalty(e, PointPct(50, 50)) > edge_penalty(e, PointPct(10, 50))


def test_edge_penalty_matches_window_oracle():
    v = np.random.default_rng(1).random((40, 40))
    e = edge_map(Raster(v, kind="brightness"))
    scale = np.percentile(e.values, 99)
    for px, py in [(0, 0), (20, 13), (39, 39), (5, 30)]:
        p = PointPct(px * 2.5, py * 2.5)
        win = e.values[max(py - 2, 0):py + 3, max(px - 2, 0):px + 3]
        assert edge_penalty(e, p) == pytest.approx(min(1.0, win.mean() / scale), abs=1e-9)


def test_edge_density_uses_scene_threshold():
    v = np.random.default_rng(2).random((40, 40))
    e = edge_map(Raster(v, kind="brightness"))
    # strictly above the 75th percentile: about a quarter of the scene
    assert edge_density(e, FULL_IMAGE) == pytest.approx(0.25, abs=1 / 1600)


# -- composites


def test_urban_density_examples():
    top = features(bcr=1, far=1, mean_svf=0, edge_density=1, brightness=0, nature_ratio=0)
    assert urban_density_score(top) == pytest.approx(1.0)
    meadow = features(bcr=0, far=0, edge_density=0, brightness=0.5, mean_svf=0.6, nature_ratio=1.0)
    assert urban_density_score(meadow) == pytest.approx(0.025)
    unclamped = features(bcr=0, far=0, edge_density=0, brightness=0.5, mean_svf=0.6, nature_ratio=0.8)
    assert urban_density_score(unclamped) == pytest.approx(0.085)


def test_spatial_openness_examples():
    flat = features(mean_svf=1, std_svf=0, building_ratio=0, std_h=0, edge_var=0)
    assert spatial_openness_score(flat) == pytest.approx(0.9)
    canyon = features(mean_svf=0, std_svf=0, building_ratio=1, std_h=1e3, edge_var=1e6)
    assert spatial_openness_score(canyon) < 1e-6


def test_sky_visibility_examples():
    assert sky_visibility_score(1.0, 0.0, 0.0) == pytest.approx(0.7)
    assert sky_visibility_score(0.0, 0.3, 1.0) == pytest.approx(-0.35)
    hard = MetricWeights(sky_visibility=SkyVisibilityWeights(edge_penalty=0.025))
    assert sky_visibility_score(0.0, 0.3, 1.0, hard) == pytest.approx(-0.325)


def test_visibility_range_examples():
    assert visibility_range_score(1, 1, 1) == pytest.approx(1.0)
    assert visibility_range_score(0, 0, 0) == 0.0
    assert visibility_range_score(0.5, 0.8, 1.0) == pytest.approx(0.65)


@st.composite
def region_features(draw):
    return RegionFeatures(
        mean_svf=draw(unit), std_svf=draw(st.floats(0, 0.5)), mean_h=draw(st.floats(0, 100)),
        std_h=draw(st.floats(0, 50)), bcr=draw(unit), far=draw(unit), building_ratio=draw(unit),
        nature_ratio=draw(unit), edge_var=draw(st.floats(0, 1e4)), edge_density=draw(unit),
        brightness=draw(unit),
    )


@settings(max_examples=200)
@given(region_features(), unit, unit, unit)
def test_composite_ranges(f, a, b, c):
    assert 0.0 <= urban_density_score(f) <= 1.0
    assert 0.0 <= spatial_openness_score(f) <= 1.0
    assert 0.0 <= visibility_range_score(a, b, c) <= 1.0 + 1e-12
    assert -0.35 - 1e-12 <= sky_visibility_score(a, 0.3 * b, c) <= 0.7 + 1e-12


@settings(max_examples=100)
@given(region_features(), unit, unit)
def test_monotonicity(f, x, y):
    lo, hi = sorted((x, y))
    d = lambda v: urban_density_score(RegionFeatures(**{**f.__dict__, "bcr": v}))
    o = lambda v: spatial_openness_score(RegionFeatures(**{**f.__dict__, "building_ratio": v}))
    assert d(lo) <= d(hi)
    assert o(lo) >= o(hi)
    if hi - lo > 1e-9:
        assert sky_visibility_score(hi, 0.1, 0.2) > sky_visibility_score(lo, 0.1, 0.2)


def test_park_outranks_courtyard():
    b = city_scene(2, size=96)
    a = SceneAnalysis(b)
    pts = [PointPct(x, y) for x in range(5, 100, 15) for y in range(5, 100, 15)]
    terms = {p: a.sky_visibility_terms(p) for p in pts}
    for p in pts:
        for q in pts:
            sp, bp, ep = terms[p]
            sq, bq, eq = terms[q]
            if sp > sq and bp <= bq and ep <= eq:
                assert a.sky_visibility(p) > a.sky_visibility(q)


# -- scene analysis and statistics


def test_region_features_on_constructed_scene():
    n = 40
    classes = np.full((n, n), LABEL["grassland"])
    dsm = np.zeros((n, n))
    classes[:20, :20] = LABEL["buildings"]
    dsm[:20, :20] = 14.0
    b = SceneBundle(Raster(dsm), _seg(classes))
    a = SceneAnalysis(b)
    f = a.region_features(RegionPct(0, 0, 50, 50))
    assert f.bcr == 1.0 and f.building_ratio == 1.0
    assert f.far == pytest.approx(min(1.0, 1.0 * 4.0 / 5))
    assert f.nature_ratio == 0.0 and f.brightness == 0.5 and f.edge_var == 0.0
    g = a.region_features(FULL_IMAGE)
    assert g.bcr == 0.25 and g.nature_ratio == 0.75


def test_uniform_water_statistics():
    b = uniform_scene("water", size=24)
    s = scene_statistics(b).to_dict()
    assert list(s) == list(STATISTICS_FIELDS)
    assert s["land_cover_statistics"]["water_ratio"] == 1.0
    assert s["svf_statistics"]["mean"] == 1.0
    # only the darkness term of the density score remains
    assert s["derived_metrics"]["urban_density_score"] == pytest.approx(0.05 * 0.5)
    assert s["spatial_statistics"]["patch_count"] == 1
    assert s["spatial_statistics"]["largest_patch_ratio"] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_statistics_partition_and_json(seed):
    st_ = scene_statistics(city_scene(seed, size=64))
    d = st_.to_dict()
    assert abs(sum(d["land_cover_statistics"].values()) - 1.0) < 1e-6
    assert set(d) == {"scene_id", "svf_statistics", "height_statistics", "land_cover_statistics",
                      "spatial_statistics", "rgb_statistics", "derived_metrics"}
    assert set(d["svf_statistics"]) == {"mean", "std", "min", "max", "quartiles"}
    assert set(d["height_statistics"]) == {"mean", "std", "building_coverage_ratio", "max_height"}
    assert set(d["rgb_statistics"]) == {"brightness_mean", "contrast_std", "dominant_colors"}
    assert set(d["derived_metrics"]) == {"urban_density_score", "openness_index", "solar_potential"}
    json.dumps(st_.to_dict(include_grid=True))
    grid = st_.grid3x3
    assert len(grid) == 9 and {g["dominant_class"] for g in grid} <= set(SegRaster(np.zeros((1, 1), int)).vocabulary)
    assert scene_statistics(city_scene(seed, size=64)).to_dict() == d


def test_visibility_range_prefers_open_ground():
    n = 64
    dsm = np.zeros((n, n))
    dsm[:, 40:] = 30.0
    b = SceneBundle(Raster(dsm), _seg(np.full((n, n), LABEL["grassland"])))
    a = SceneAnalysis(b)
    assert a.visibility_range(PointPct(10, 50)) > a.visibility_range(PointPct(60, 50))
    assert 0.0 <= a.visibility_range(PointPct(99.9, 0)) <= 1.0
