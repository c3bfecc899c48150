"""Composite spatial metrics for Tier-1/Tier-2 questions and the scene-level
statistics payload used for free-form prompts.

Scalar scoring functions are pure and operate on plain numbers.
:class:`SceneAnalysis` caches the per-scene rasters (SVF, Sobel edges and
their percentiles) that the windowed features need.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .raster import (
    FULL_IMAGE,
    PointPct,
    Raster,
    RegionPct,
    SceneBundle,
    SegRaster,
    brightness_default,
    class_ratios,
    crop,
    edge_map,
    point_to_pixel,
    region_stats,
    region_to_pixels,
    window_rect,
)
from .svf import SvfParams, ViewshedParams, svf_raster, viewshed_range

FLOOR_HEIGHT = 3.5
MAX_FLOORS = 20.0
FAR_NORM = 5.0
BUILDING_PENALTY_COEF = 0.3
NATURE_THRESHOLD = 0.8
PENALTY_WINDOW = 21
EDGE_WINDOW = 5
EDGE_DENSITY_PERCENTILE = 75.0
EDGE_PENALTY_PERCENTILE = 99.0
# edge variance is measured on an 8-bit intensity scale
INTENSITY_SCALE = 255.0

BUILT_LABELS = ("buildings",)
NATURE_LABELS = ("forest", "grassland", "agricultural", "water")
VEGETATION_LABELS = ("forest", "grassland", "agricultural")
ROAD_LABELS = ("roads", "railways")
OTHER_LABELS = ("residential", "bare_soil", "other")


def _check_nonneg(group, name):
    for k, v in asdict(group).items():
        if v < 0:
            raise ValueError(f"{name} weight {k} must be non-negative, got {v}")


def _check_unit_sum(group, name):
    total = sum(asdict(group).values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"{name} weights must sum to 1.0, got {total}")


@dataclass(frozen=True)
class DensityWeights:
    bcr: float = 0.5
    far: float = 0.25
    svf_comp: float = 0.15
    edge_density: float = 0.05
    darkness: float = 0.05

    def __post_init__(self):
        _check_nonneg(self, "density")


@dataclass(frozen=True)
class OpennessWeights:
    openness_index: float = 0.5
    mean_svf: float = 0.25
    low_building: float = 0.15
    terrain_flatness: float = 0.05
    visual_simplicity: float = 0.05

    def __post_init__(self):
        _check_nonneg(self, "openness")


@dataclass(frozen=True)
class SkyVisibilityWeights:
    svf: float = 0.7
    building_penalty: float = 0.3
    edge_penalty: float = 0.05
    window_norm: float = 1.0

    def __post_init__(self):
        _check_nonneg(self, "sky_visibility")


@dataclass(frozen=True)
class VisibilityRangeWeights:
    viewshed: float = 0.6
    svf_context: float = 0.25
    terrain: float = 0.15

    def __post_init__(self):
        _check_nonneg(self, "visibility_range")


EDGE_WEIGHT_SETTINGS = {"standard": 0.05, "hard": 0.025}


@dataclass(frozen=True)
class MetricWeights:
    density: DensityWeights = field(default_factory=DensityWeights)
    openness: OpennessWeights = field(default_factory=OpennessWeights)
    sky_visibility: SkyVisibilityWeights = field(default_factory=SkyVisibilityWeights)
    visibility_range: VisibilityRangeWeights = field(default_factory=VisibilityRangeWeights)

    def __post_init__(self):
        _check_unit_sum(self.density, "density")
        _check_unit_sum(self.openness, "openness")
        if self.sky_visibility.edge_penalty not in EDGE_WEIGHT_SETTINGS.values():
            raise ValueError("sky_visibility edge_penalty weight must be 0.05 (standard) or 0.025 (hard)")


@dataclass(frozen=True)
class RegionFeatures:
    mean_svf: float
    std_svf: float
    mean_h: float
    std_h: float
    bcr: float
    far: float
    building_ratio: float
    nature_ratio: float
    edge_var: float
    edge_density: float
    brightness: float


# --------------------------------------------------------------------------
# scalar terms


def openness_index(mean_svf: float, std_svf: float) -> float:
    return min(max((mean_svf + 0.5 * std_svf) / 1.25, 0.0), 1.0)


def terrain_flatness(std_h: float) -> float:
    return math.exp(-std_h / 5.0)


def visual_simplicity(edge_var: float) -> float:
    return math.exp(-edge_var / 500.0)


def terrain_roughness(std_h: float) -> float:
    return math.exp(-((std_h - 10.0) ** 2) / (2.0 * 10.0 ** 2))


def far(bcr: float, avg_floors: float) -> float:
    return min(1.0, bcr * avg_floors / FAR_NORM)


# --------------------------------------------------------------------------
# raster-backed terms


def bcr(seg: SegRaster, region) -> float:
    rect = _rect(region, seg.width, seg.height)
    return float(np.mean(crop(seg.classes, rect) == seg.vocabulary.index("buildings")))


def avg_floors(dsm: Raster, seg: SegRaster, region) -> float:
    rect = _rect(region, seg.width, seg.height)
    mask = crop(seg.classes, rect) == seg.vocabulary.index("buildings")
    if not mask.any():
        return 0.0
    heights = crop(dsm.values, rect)[mask]
    return float(np.mean(np.minimum(MAX_FLOORS, heights / FLOOR_HEIGHT)))


def building_penalty(seg: SegRaster, point: PointPct, window: int = PENALTY_WINDOW,
                     norm: float = 1.0) -> float:
    rect = window_rect(point_to_pixel(point, seg.width, seg.height), window, seg.width, seg.height)
    ratio = float(np.mean(crop(seg.classes, rect) == seg.vocabulary.index("buildings")))
    return BUILDING_PENALTY_COEF * ratio * norm


def edge_penalty(edges: Raster, point: PointPct, window: int = EDGE_WINDOW,
                 scale: float | None = None) -> float:
    """Window-mean gradient magnitude over the scene's 99th-percentile magnitude."""
    if scale is None:
        scale = float(np.percentile(edges.values, EDGE_PENALTY_PERCENTILE))
    if scale <= 0:
        return 0.0
    rect = window_rect(point_to_pixel(point, edges.width, edges.height), window, edges.width, edges.height)
    return min(max(float(crop(edges.values, rect).mean()) / scale, 0.0), 1.0)


def edge_density(edges: Raster, region, threshold: float | None = None) -> float:
    """Share of pixels whose gradient magnitude exceeds the scene's 75th percentile."""
    if threshold is None:
        threshold = float(np.percentile(edges.values, EDGE_DENSITY_PERCENTILE))
    rect = _rect(region, edges.width, edges.height)
    return float(np.mean(crop(edges.values, rect) > threshold))


def _rect(region, width, height):
    if isinstance(region, RegionPct):
        return region_to_pixels(region, width, height)
    return tuple(region)


# --------------------------------------------------------------------------
# composite scores


def urban_density_score(features: RegionFeatures, weights: MetricWeights = MetricWeights()) -> float:
    w = weights.density
    svf_comp = 0.0 if features.nature_ratio > NATURE_THRESHOLD else 1.0 - features.mean_svf
    score = (
        w.bcr * features.bcr
        + w.far * features.far
        + w.svf_comp * svf_comp
        + w.edge_density * features.edge_density
        + w.darkness * (1.0 - features.brightness)
    )
    return min(max(score, 0.0), 1.0)


def spatial_openness_score(features: RegionFeatures, weights: MetricWeights = MetricWeights()) -> float:
    w = weights.openness
    score = (
        w.openness_index * openness_index(features.mean_svf, features.std_svf)
        + w.mean_svf * features.mean_svf
        + w.low_building * (1.0 - features.building_ratio)
        + w.terrain_flatness * terrain_flatness(features.std_h)
        + w.visual_simplicity * visual_simplicity(features.edge_var)
    )
    return min(max(score, 0.0), 1.0)


def sky_visibility_score(svf: float, bpen: float, epen: float,
                         weights: MetricWeights | SkyVisibilityWeights = MetricWeights()) -> float:
    """Unclamped ranking score.  ``bpen`` is the raw building penalty (already
    carrying the 0.3 factor); it is rescaled to unit range here so that the
    0.3 coefficient is applied once."""
    w = weights.sky_visibility if isinstance(weights, MetricWeights) else weights
    bpen_unit = bpen / BUILDING_PENALTY_COEF
    return w.svf * svf - w.building_penalty * bpen_unit - w.edge_penalty * epen


def visibility_range_score(viewshed: float, svf_ctx: float, roughness: float,
                           weights: MetricWeights = MetricWeights()) -> float:
    w = weights.visibility_range
    return w.viewshed * viewshed + w.svf_context * svf_ctx + w.terrain * roughness


# --------------------------------------------------------------------------
# per-scene cache


class SceneAnalysis:
    """Derived rasters of one scene, computed once and shared by every
    question generated from it."""

    def __init__(self, bundle: SceneBundle, svf_params: SvfParams = SvfParams(),
                 viewshed_params: ViewshedParams = ViewshedParams()):
        self.bundle = bundle
        self.viewshed_params = viewshed_params
        self.svf = bundle.svf if bundle.svf is not None else svf_raster(bundle.dsm, svf_params)
        self.brightness = (bundle.brightness if bundle.brightness is not None
                           else brightness_default(bundle.seg, bundle.dsm.resolution))
        self.edges = edge_map(self.brightness) if min(bundle.shape) >= 3 else Raster(
            np.zeros(bundle.shape), kind="brightness")
        self.edge_threshold = float(np.percentile(self.edges.values, EDGE_DENSITY_PERCENTILE))
        self.edge_scale = float(np.percentile(self.edges.values, EDGE_PENALTY_PERCENTILE))
        self._viewshed_cache: dict[tuple[int, int], float] = {}

    @property
    def width(self) -> int:
        return self.bundle.width

    @property
    def height(self) -> int:
        return self.bundle.height

    def region_features(self, region) -> RegionFeatures:
        b = self.bundle
        rect = _rect(region, b.width, b.height)
        s = region_stats(self.svf, rect)
        h = region_stats(b.dsm, rect)
        ratios = class_ratios(b.seg, rect)
        building_cov = ratios["buildings"]
        edges = crop(self.edges.values, rect) * INTENSITY_SCALE
        return RegionFeatures(
            mean_svf=s.mean,
            std_svf=s.std,
            mean_h=h.mean,
            std_h=h.std,
            bcr=building_cov,
            far=far(building_cov, avg_floors(b.dsm, b.seg, rect)),
            building_ratio=sum(ratios[k] for k in BUILT_LABELS),
            nature_ratio=sum(ratios[k] for k in NATURE_LABELS),
            edge_var=float(edges.var()),
            edge_density=edge_density(self.edges, rect, self.edge_threshold),
            brightness=float(crop(self.brightness.values, rect).mean()),
        )

    def urban_density(self, region, weights: MetricWeights = MetricWeights()) -> float:
        return urban_density_score(self.region_features(region), weights)

    def spatial_openness(self, region, weights: MetricWeights = MetricWeights()) -> float:
        return spatial_openness_score(self.region_features(region), weights)

    def svf_value(self, point: PointPct) -> float:
        x, y = point_to_pixel(point, self.width, self.height)
        return float(self.svf.values[y, x])

    def sky_visibility_terms(self, point: PointPct, window_norm: float = 1.0) -> tuple[float, float, float]:
        return (
            self.svf_value(point),
            building_penalty(self.bundle.seg, point, PENALTY_WINDOW, window_norm),
            edge_penalty(self.edges, point, EDGE_WINDOW, self.edge_scale),
        )

    def sky_visibility(self, point: PointPct,
                       weights: MetricWeights | SkyVisibilityWeights = MetricWeights()) -> float:
        w = weights.sky_visibility if isinstance(weights, MetricWeights) else weights
        svf, bpen, epen = self.sky_visibility_terms(point, w.window_norm)
        return sky_visibility_score(svf, bpen, epen, w)

    def visibility_range(self, point: PointPct, weights: MetricWeights = MetricWeights()) -> float:
        px = point_to_pixel(point, self.width, self.height)
        if px not in self._viewshed_cache:
            self._viewshed_cache[px] = viewshed_range(self.bundle.dsm, px, self.viewshed_params)
        rect = window_rect(px, PENALTY_WINDOW, self.width, self.height)
        svf_ctx = float(crop(self.svf.values, rect).mean())
        rough = terrain_roughness(float(crop(self.bundle.dsm.values, rect).std()))
        return visibility_range_score(self._viewshed_cache[px], svf_ctx, rough, weights)


# --------------------------------------------------------------------------
# scene statistics payload

STATISTICS_FIELDS = (
    "scene_id",
    "svf_statistics",
    "height_statistics",
    "land_cover_statistics",
    "spatial_statistics",
    "rgb_statistics",
    "derived_metrics",
)


@dataclass(frozen=True)
class SceneStatistics:
    scene_id: str
    svf_statistics: dict
    height_statistics: dict
    land_cover_statistics: dict
    spatial_statistics: dict
    rgb_statistics: dict
    derived_metrics: dict
    grid3x3: list

    def to_dict(self, include_grid: bool = False) -> dict:
        """The summary payload; the 3x3 grid is kept out of the top level
        unless asked for, so the payload keeps its fixed field set."""
        out = {name: getattr(self, name) for name in STATISTICS_FIELDS}
        if include_grid:
            out["grid3x3"] = self.grid3x3
        return out


def _patches(seg: SegRaster) -> tuple[int, float]:
    count = 0
    largest = 0
    four = ndimage.generate_binary_structure(2, 1)
    for cid in np.unique(seg.classes):
        labelled, n = ndimage.label(seg.classes == cid, structure=four)
        count += n
        if n:
            largest = max(largest, int(np.bincount(labelled.ravel())[1:].max()))
    return count, largest / seg.classes.size


def _dominant_colors(brightness: np.ndarray, k: int = 3) -> list[str]:
    levels = np.clip((brightness * 16).astype(int), 0, 15)
    counts = np.bincount(levels.ravel(), minlength=16)
    order = sorted(range(16), key=lambda i: (-counts[i], i))
    out = []
    for i in order[:k]:
        if counts[i] == 0:
            break
        g = int(round((i + 0.5) / 16 * 255))
        out.append(f"#{g:02X}{g:02X}{g:02X}")
    return out


def scene_statistics(bundle: SceneBundle, weights: MetricWeights = MetricWeights(),
                     svf_params: SvfParams = SvfParams(),
                     analysis: SceneAnalysis | None = None) -> SceneStatistics:
    a = analysis or SceneAnalysis(bundle, svf_params)
    seg = bundle.seg
    s = region_stats(a.svf, FULL_IMAGE)
    h = region_stats(bundle.dsm, FULL_IMAGE)
    ratios = class_ratios(seg)
    feats = a.region_features(FULL_IMAGE)
    patch_count, largest_patch = _patches(seg)
    bright = a.brightness.values

    grid = []
    for r in range(3):
        for c in range(3):
            cell = RegionPct(c * 100.0 / 3, r * 100.0 / 3, (c + 1) * 100.0 / 3, (r + 1) * 100.0 / 3)
            cell_ratios = class_ratios(seg, cell)
            grid.append({
                "row": r,
                "col": c,
                "region": [round(v, 2) for v in cell.as_list()],
                "mean_svf": region_stats(a.svf, cell).mean,
                "mean_height": region_stats(bundle.dsm, cell).mean,
                "dominant_class": max(seg.vocabulary, key=lambda k: (cell_ratios[k], -seg.vocabulary.index(k))),
            })

    return SceneStatistics(
        scene_id=bundle.scene_id,
        svf_statistics=s.to_dict(),
        height_statistics={
            "mean": h.mean,
            "std": h.std,
            "building_coverage_ratio": ratios["buildings"],
            "max_height": h.max,
        },
        land_cover_statistics={
            "building_ratio": sum(ratios[k] for k in BUILT_LABELS),
            "vegetation_ratio": sum(ratios[k] for k in VEGETATION_LABELS),
            "road_ratio": sum(ratios[k] for k in ROAD_LABELS),
            "water_ratio": ratios["water"],
            "other_ratio": sum(ratios[k] for k in OTHER_LABELS),
        },
        spatial_statistics={
            "edge_density": feats.edge_density,
            "patch_count": patch_count,
            "largest_patch_ratio": largest_patch,
        },
        rgb_statistics={
            "brightness_mean": float(bright.mean()) * INTENSITY_SCALE,
            "contrast_std": float(bright.std()) * INTENSITY_SCALE,
            "dominant_colors": _dominant_colors(bright),
        },
        derived_metrics={
            "urban_density_score": urban_density_score(feats, weights),
            "openness_index": openness_index(s.mean, s.std),
            # provisional: no agreed formula, mean SVF stands in
            "solar_potential": s.mean,
        },
        grid3x3=grid,
    )
