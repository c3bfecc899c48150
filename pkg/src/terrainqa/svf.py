"""Sky view factor by azimuthal horizon scanning, and 8-direction sightlines.

A ray visits every cell its path crosses and uses the distance between cell
centres.  Origins are always cell centres, so the visited offsets depend only
on the azimuth and are shared by every pixel.  Horizon search is carried out on the tangent of the
elevation angle; SVF contributions are ``cos^2(beta) = 1 / (1 + tan^2 beta)``.
Only IEEE basic arithmetic is involved, so a pixel gets bit-identical results
whether it is computed alone or as part of a whole raster.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .raster import Raster

# compass order N, NE, E, SE, S, SW, W, NW as (dx, dy) with y pointing down
DIRECTIONS: tuple[tuple[int, int], ...] = (
    (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1),
)


@dataclass(frozen=True)
class SvfParams:
    n_azimuths: int = 64
    max_radius: float = 100.0
    step: float | None = None  # metres; None visits every crossed cell

    def __post_init__(self):
        if self.n_azimuths < 4:
            raise ValueError("n_azimuths must be >= 4")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if not self.max_radius >= (self.step or 0.0) or self.max_radius <= 0:
            raise ValueError("max_radius must be positive and >= step")

    def azimuths(self) -> np.ndarray:
        """Sector-centre azimuths, clockwise from north."""
        return (np.arange(self.n_azimuths) + 0.5) * (2.0 * math.pi / self.n_azimuths)


@dataclass(frozen=True)
class ViewshedParams:
    n_directions: int = 8
    observer_height: float = 1.5
    max_radius: float = 200.0

    def __post_init__(self):
        if self.n_directions != 8:
            raise ValueError("viewshed analysis uses exactly 8 directions")
        if self.observer_height < 0:
            raise ValueError("observer_height must be >= 0")
        if not self.max_radius > 0:
            raise ValueError("max_radius must be positive")


def _check_origin(dsm: Raster, origin) -> tuple[int, int]:
    x, y = int(origin[0]), int(origin[1])
    if not (0 <= x < dsm.width and 0 <= y < dsm.height):
        raise IndexError(f"origin {origin} outside {dsm.width}x{dsm.height} grid")
    return x, y


def ray_offsets(azimuth: float, max_radius: float, resolution: float,
                step: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells visited by a ray leaving a cell centre, as integer offsets.

    With ``step=None`` the ray visits every cell its path crosses, in order,
    up to ``max_radius``.  With a step (metres) it visits the nearest cell at
    each multiple of the step instead.  Returns ``(dx, dy, dist)`` with
    ``dist`` the centre-to-centre distance in metres; the origin cell and
    consecutive repeats are dropped.
    """
    ux, uy = math.sin(azimuth), -math.cos(azimuth)
    r = max_radius / resolution
    if step is None:
        ts = [0.0, r]
        for u in (ux, uy):
            if abs(u) > 1e-12:
                k = np.arange(0, math.floor(r * abs(u) + 0.5) + 1) + 0.5
                ts.extend((k / abs(u))[k / abs(u) < r])
        ts = np.unique(np.asarray(ts))
        t = np.concatenate(((ts[:-1] + ts[1:]) / 2.0, [r]))
    else:
        n = int(math.floor(max_radius / step + 1e-9))
        t = np.arange(1, n + 1) * (step / resolution)
    cx = np.floor(ux * t + 0.5).astype(np.int64)
    cy = np.floor(uy * t + 0.5).astype(np.int64)
    keep = np.ones(t.size, dtype=bool)
    keep[1:] = (cx[1:] != cx[:-1]) | (cy[1:] != cy[:-1])
    keep &= (cx != 0) | (cy != 0)
    cx, cy = cx[keep], cy[keep]
    dist = np.sqrt((cx * cx + cy * cy).astype(np.float64)) * resolution
    return cx, cy, dist


def _horizon_tangents_points(h: np.ndarray, xs: np.ndarray, ys: np.ndarray, offsets) -> np.ndarray:
    """Max tan(elevation angle) along one ray for the given origins, floored at 0."""
    nrows, ncols = h.shape
    ox, oy, dist = offsets
    h0 = h[ys, xs]
    best = np.zeros(xs.shape, dtype=np.float64)
    alive = np.arange(xs.size)
    for dx, dy, d in zip(ox.tolist(), oy.tolist(), dist.tolist()):
        cx = xs[alive] + dx
        cy = ys[alive] + dy
        inside = (cx >= 0) & (cx < ncols) & (cy >= 0) & (cy < nrows)
        if not inside.all():
            # straight rays never re-enter the grid
            alive, cx, cy = alive[inside], cx[inside], cy[inside]
            if alive.size == 0:
                break
        tan = (h[cy, cx] - h0[alive]) / d
        best[alive] = np.maximum(best[alive], tan)
    return best


def _horizon_tangents_grid(h: np.ndarray, offsets) -> np.ndarray:
    """Same as :func:`_horizon_tangents_points` for every pixel, via array shifts."""
    nrows, ncols = h.shape
    best = np.zeros(h.shape, dtype=np.float64)
    for dx, dy, d in zip(*(a.tolist() for a in offsets)):
        if abs(dx) >= ncols or abs(dy) >= nrows:
            break
        # origins whose shifted cell stays inside the grid
        oy0, oy1 = max(0, -dy), nrows - max(0, dy)
        ox0, ox1 = max(0, -dx), ncols - max(0, dx)
        src = h[oy0 + dy:oy1 + dy, ox0 + dx:ox1 + dx]
        org = h[oy0:oy1, ox0:ox1]
        view = best[oy0:oy1, ox0:ox1]
        np.maximum(view, (src - org) / d, out=view)
    return best


def horizon_angle(dsm: Raster, origin, azimuth: float, params: SvfParams = SvfParams()) -> float:
    """Horizon elevation angle (radians, >= 0) seen from ``origin`` along
    ``azimuth`` (radians clockwise from north)."""
    x, y = _check_origin(dsm, origin)
    offsets = ray_offsets(azimuth, params.max_radius, dsm.resolution, params.step)
    t = _horizon_tangents_points(dsm.values, np.array([x]), np.array([y]), offsets)
    return float(np.arctan(t[0]))


def _all_offsets(params: SvfParams, resolution: float):
    return [ray_offsets(float(az), params.max_radius, resolution, params.step)
            for az in params.azimuths()]


def _svf_points(dsm: Raster, xs: np.ndarray, ys: np.ndarray, params: SvfParams) -> np.ndarray:
    total = np.zeros(xs.shape, dtype=np.float64)
    for offsets in _all_offsets(params, dsm.resolution):
        t = _horizon_tangents_points(dsm.values, xs, ys, offsets)
        total += 1.0 / (1.0 + t * t)
    return total / params.n_azimuths


def svf_at(dsm: Raster, origin, params: SvfParams = SvfParams()) -> float:
    """Isotropic-sky SVF: mean of cos^2(horizon angle) over the azimuths."""
    x, y = _check_origin(dsm, origin)
    return float(_svf_points(dsm, np.array([x]), np.array([y]), params)[0])


def svf_raster(dsm: Raster, params: SvfParams = SvfParams(), workers: int = 1) -> Raster:
    """SVF for every pixel.  Azimuths may be spread over a thread pool; the
    per-azimuth terms are summed in a fixed order, so ``workers`` never
    changes the result."""
    offsets = _all_offsets(params, dsm.resolution)

    def term(off) -> np.ndarray:
        t = _horizon_tangents_grid(dsm.values, off)
        return 1.0 / (1.0 + t * t)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = list(pool.map(term, offsets))
    else:
        terms = map(term, offsets)
    total = np.zeros(dsm.shape, dtype=np.float64)
    for t in terms:
        total += t
    return Raster(np.clip(total / params.n_azimuths, 0.0, 1.0), kind="svf", resolution=dsm.resolution)


def sightline_distances(dsm: Raster, origin, params: ViewshedParams = ViewshedParams()):
    """Per-direction maximum line-of-sight distance and normalisation bound.

    Returns two arrays of length 8 (metres): the distance to the farthest
    visible cell, and ``min(max_radius, distance to the last in-grid cell)``.
    A cell is visible when its elevation angle from the eye point is at least
    the running maximum over the cells before it.
    """
    x, y = _check_origin(dsm, origin)
    h = dsm.values
    nrows, ncols = h.shape
    eye = h[y, x] + params.observer_height
    far = np.zeros(8)
    bound = np.zeros(8)
    for i, (dx, dy) in enumerate(DIRECTIONS):
        cell_len = dsm.resolution * math.hypot(dx, dy)
        n = int(math.floor(params.max_radius / cell_len + 1e-9))
        if dx > 0:
            n = min(n, ncols - 1 - x)
        elif dx < 0:
            n = min(n, x)
        if dy > 0:
            n = min(n, nrows - 1 - y)
        elif dy < 0:
            n = min(n, y)
        if n <= 0:
            continue
        k = np.arange(1, n + 1)
        dist = k * cell_len
        tan = (h[y + dy * k, x + dx * k] - eye) / dist
        prev = np.concatenate(([-np.inf], np.maximum.accumulate(tan)[:-1]))
        visible = tan >= prev
        far[i] = dist[visible].max()
        bound[i] = dist[-1]
    return far, bound


def viewshed_range(dsm: Raster, origin, params: ViewshedParams = ViewshedParams()) -> float:
    """Mean over directions of farthest-visible distance / bound, in [0, 1].

    Directions with no in-grid cell (origin on the image edge) are left out;
    a 1x1 grid is fully open.
    """
    far, bound = sightline_distances(dsm, origin, params)
    ok = bound > 0
    if not ok.any():
        return 1.0
    return float(np.clip(np.mean(far[ok] / bound[ok]), 0.0, 1.0))
