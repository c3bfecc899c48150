"""Synthetic elevation and land-cover scenes with known geometry.

These are the fixtures the test suite, the acceptance run and the demo
scripts share.  All builders are deterministic given their arguments.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .raster import VOCABULARY, Raster, SceneBundle, SegRaster

LABEL = {name: i for i, name in enumerate(VOCABULARY)}


def flat_dsm(size: int = 64, height: float = 0.0, resolution: float = 1.0) -> Raster:
    return Raster(np.full((size, size), float(height)), resolution=resolution)


def block_dsm(size: int = 128, x0: int = 50, y0: int = 50, w: int = 20, h: int = 20,
              height: float = 20.0) -> Raster:
    v = np.zeros((size, size))
    v[y0:y0 + h, x0:x0 + w] = height
    return Raster(v)


def canyon_dsm(size: int = 128, street_width: int = 12, height: float = 15.0) -> Raster:
    """Two building rows flanking a north-south street through the centre."""
    v = np.full((size, size), height)
    c = size // 2
    v[:, c - street_width // 2: c - street_width // 2 + street_width] = 0.0
    return Raster(v)


def ring_wall_dsm(size: int = 128, radius: int = 10, height: float = 50.0,
                  thickness: int = 2) -> Raster:
    """Square (Chebyshev) ring wall centred on the grid."""
    c = size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    cheb = np.maximum(np.abs(xx - c), np.abs(yy - c))
    v = np.where((cheb >= radius) & (cheb < radius + thickness), height, 0.0)
    return Raster(v)


def half_cone_dsm(beta: float, size: int = 256, centre: tuple[int, int] | None = None) -> Raster:
    """Terrain rising radially at slope ``tan(beta)`` east of the centre column
    and flat elsewhere: every eastward azimuth sees horizon ``beta``, every
    westward one sees a flat horizon."""
    cx, cy = centre if centre is not None else (size // 2, size // 2)
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(xx - cx, yy - cy)
    v = np.where(xx > cx, r * math.tan(beta), 0.0)
    return Raster(v)


def random_terrain(seed: int, size: int = 128, relief: float = 30.0, smooth: float = 6.0) -> Raster:
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.standard_normal((size, size)), smooth, mode="reflect")
    noise -= noise.min()
    peak = noise.max()
    return Raster(noise / peak * relief if peak > 0 else noise)


def city_scene(seed: int, size: int = 128, scene_id: str | None = None) -> SceneBundle:
    """A small town: gently rolling ground, a road grid, buildings of mixed
    height, and patches of vegetation and water."""
    rng = np.random.default_rng(seed)
    ground = random_terrain(seed + 10_000, size, relief=rng.uniform(2.0, 12.0), smooth=10.0).values
    dsm = ground.copy()
    seg = np.full((size, size), LABEL["grassland"], dtype=np.int64)
    bright = np.full((size, size), 0.55)

    # land-cover patches
    for _ in range(rng.integers(3, 7)):
        label = rng.choice(["forest", "agricultural", "water", "bare_soil", "residential", "other"],
                           p=[0.3, 0.25, 0.1, 0.1, 0.15, 0.1])
        pw, ph = rng.integers(size // 8, size // 3, size=2)
        px, py = rng.integers(0, size - pw), rng.integers(0, size - ph)
        seg[py:py + ph, px:px + pw] = LABEL[label]
        tone = {"forest": 0.3, "agricultural": 0.6, "water": 0.2, "bare_soil": 0.7,
                "residential": 0.5, "other": 0.45}[label]
        bright[py:py + ph, px:px + pw] = tone
        if label == "forest":
            dsm[py:py + ph, px:px + pw] += rng.uniform(8.0, 20.0)

    # road grid
    spacing = int(rng.integers(size // 5, size // 3))
    offset = int(rng.integers(0, spacing))
    road_w = 3
    for p in range(offset, size, spacing):
        seg[:, p:p + road_w] = LABEL["roads"]
        seg[p:p + road_w, :] = LABEL["roads"]
        bright[:, p:p + road_w] = 0.65
        bright[p:p + road_w, :] = 0.65
        dsm[:, p:p + road_w] = ground[:, p:p + road_w]
        dsm[p:p + road_w, :] = ground[p:p + road_w, :]
    if rng.random() < 0.3:
        rail = int(rng.integers(0, size - 2))
        seg[:, rail:rail + 2] = LABEL["railways"]
        dsm[:, rail:rail + 2] = ground[:, rail:rail + 2]

    # buildings, denser in one quadrant so density varies across the scene
    hot_x, hot_y = rng.uniform(0.2, 0.8, size=2) * size
    for _ in range(int(rng.integers(15, 45))):
        bw, bh = rng.integers(4, 14, size=2)
        bx = int(np.clip(rng.normal(hot_x, size / 4), 0, size - bw))
        by = int(np.clip(rng.normal(hot_y, size / 4), 0, size - bh))
        if np.any(seg[by:by + bh, bx:bx + bw] == LABEL["roads"]):
            continue
        storeys = rng.choice([1, 2, 3, 4, 6, 10, 15], p=[0.15, 0.25, 0.2, 0.15, 0.1, 0.1, 0.05])
        top = ground[by:by + bh, bx:bx + bw].max() + storeys * 3.5
        dsm[by:by + bh, bx:bx + bw] = top
        seg[by:by + bh, bx:bx + bw] = LABEL["buildings"]
        bright[by:by + bh, bx:bx + bw] = rng.uniform(0.25, 0.8)

    bright = np.clip(bright + rng.normal(0.0, 0.03, size=bright.shape), 0.0, 1.0)
    return SceneBundle(
        dsm=Raster(dsm),
        seg=SegRaster(seg),
        brightness=Raster(bright, kind="brightness"),
        scene_id=scene_id or f"synthetic_{seed:04d}",
    )


def uniform_scene(label: str = "water", size: int = 32, height: float = 0.0,
                  scene_id: str = "uniform") -> SceneBundle:
    return SceneBundle(
        dsm=flat_dsm(size, height),
        seg=SegRaster(np.full((size, size), LABEL[label], dtype=np.int64)),
        scene_id=scene_id,
    )
