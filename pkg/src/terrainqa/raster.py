"""Grid data model, plain-text grid I/O, percent-coordinate selectors and
windowed statistics shared by the rest of the package.

Pixel coordinates are ``(x, y)`` tuples, ``x`` the column and ``y`` the row,
with ``(0, 0)`` at the top-left corner.  Arrays are indexed ``values[y, x]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

VOCABULARY: tuple[str, ...] = (
    "residential",
    "agricultural",
    "forest",
    "grassland",
    "railways",
    "roads",
    "bare_soil",
    "buildings",
    "water",
    "other",
)

RASTER_KINDS = ("elevation", "svf", "brightness")

# tolerance absorbing float noise in percent -> pixel products such as 75.3 * 1000 / 100
_SNAP = 1e-9


class GridFormatError(ValueError):
    """Raised when a grid file or an in-memory grid violates the format."""


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Raster:
    values: np.ndarray
    kind: str = "elevation"
    resolution: float = 1.0

    def __post_init__(self):
        arr = _frozen(self.values, np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise GridFormatError(f"raster must be a non-empty 2D grid, got shape {arr.shape}")
        if self.kind not in RASTER_KINDS:
            raise GridFormatError(f"unknown raster kind {self.kind!r}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise GridFormatError(f"resolution must be positive, got {self.resolution}")
        if self.kind == "elevation" and not np.all(np.isfinite(arr)):
            raise GridFormatError("elevation grid contains non-finite values")
        if self.kind == "svf" and not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise GridFormatError("svf grid values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SegRaster:
    classes: np.ndarray
    vocabulary: tuple[str, ...] = VOCABULARY

    def __post_init__(self):
        arr = np.array(self.classes, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise GridFormatError(f"segmentation must be a non-empty 2D grid, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise GridFormatError("class ids must be integers")
        arr = _frozen(arr, np.int64)
        vocab = tuple(self.vocabulary)
        if vocab != VOCABULARY:
            raise GridFormatError(f"vocabulary must be exactly {VOCABULARY}, got {vocab}")
        if arr.min() < 0 or arr.max() >= len(vocab):
            raise GridFormatError("class id outside vocabulary range")
        object.__setattr__(self, "classes", arr)
        object.__setattr__(self, "vocabulary", vocab)

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    def label_ids(self, labels: Iterable[str]) -> list[int]:
        ids = []
        for label in labels:
            if label not in self.vocabulary:
                raise ValueError(f"unknown land-cover label {label!r}")
            ids.append(self.vocabulary.index(label))
        return ids


@dataclass(frozen=True)
class RegionPct:
    """Rectangle ``[xmin%, ymin%, xmax%, ymax%]`` in percent of image size."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        for v in (self.xmin, self.ymin, self.xmax, self.ymax):
            if not (0.0 <= v <= 100.0):
                raise ValueError(f"region coordinates must lie in [0, 100], got {self}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate region {self}: need xmin < xmax and ymin < ymax")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


FULL_IMAGE = RegionPct(0.0, 0.0, 100.0, 100.0)


@dataclass(frozen=True)
class PointPct:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 100.0 and 0.0 <= self.y <= 100.0):
            raise ValueError(f"point coordinates must lie in [0, 100], got {self}")

    def as_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class RegionStats:
    mean: float
    std: float
    min: float
    max: float
    quartiles: tuple[float, float, float]
    pixel_count: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "quartiles": list(self.quartiles),
        }


@dataclass(frozen=True)
class SceneBundle:
    dsm: Raster
    seg: SegRaster
    svf: Raster | None = None
    brightness: Raster | None = None
    scene_id: str = "scene"

    def __post_init__(self):
        if self.dsm.kind != "elevation":
            raise GridFormatError("scene dsm must be an elevation raster")
        if self.svf is not None and self.svf.kind != "svf":
            raise GridFormatError("scene svf must be an svf raster")
        if self.brightness is not None and self.brightness.kind != "brightness":
            raise GridFormatError("scene brightness must be a brightness raster")
        for name in ("seg", "svf", "brightness"):
            other = getattr(self, name)
            if other is not None and other.shape != self.dsm.shape:
                raise GridFormatError(
                    f"{name} shape {other.shape} does not match dsm shape {self.dsm.shape}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.dsm.shape

    @property
    def width(self) -> int:
        return self.dsm.width

    @property
    def height(self) -> int:
        return self.dsm.height


# --------------------------------------------------------------------------
# file I/O


def _format_value(v: float) -> str:
    # repr gives the shortest string that round-trips exactly
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _read_header(lines: list[str], path) -> tuple[dict, int]:
    header: dict[str, str] = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split(None, 1)
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if key not in ("ncols", "nrows", "cellsize", "kind", "labels"):
            break
        if len(parts) != 2:
            raise GridFormatError(f"{path}: header line {i + 1} has no value")
        header[key] = parts[1].strip()
        i += 1
    for key in ("ncols", "nrows", "cellsize", "kind"):
        if key not in header:
            raise GridFormatError(f"{path}: missing header field {key!r}")
    return header, i


def _parse_body(lines: list[str], start: int, ncols: int, nrows: int, path, conv) -> list[list]:
    rows = [ln.split() for ln in lines[start:] if ln.strip()]
    if len(rows) != nrows:
        raise GridFormatError(f"{path}: header declares {nrows} rows, found {len(rows)}")
    out = []
    for r, row in enumerate(rows):
        if len(row) != ncols:
            raise GridFormatError(
                f"{path}: row {r + 1} has {len(row)} values, header declares {ncols} columns"
            )
        try:
            out.append([conv(tok) for tok in row])
        except ValueError as exc:
            raise GridFormatError(f"{path}: row {r + 1}: {exc}") from None
    return out


def _dims(header: dict, path) -> tuple[int, int, float]:
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cellsize = float(header["cellsize"])
    except ValueError as exc:
        raise GridFormatError(f"{path}: malformed header: {exc}") from None
    if ncols <= 0 or nrows <= 0 or not cellsize > 0:
        raise GridFormatError(f"{path}: dimensions and cellsize must be positive")
    return ncols, nrows, cellsize


def load_grid(path, kind: str) -> Raster:
    """Read a scalar grid file; ``kind`` must match the file's header."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header, start = _read_header(lines, path)
    if header["kind"] != kind:
        raise GridFormatError(f"{path}: expected kind {kind!r}, file declares {header['kind']!r}")
    ncols, nrows, cellsize = _dims(header, path)
    body = _parse_body(lines, start, ncols, nrows, path, float)
    return Raster(np.array(body, dtype=np.float64), kind=kind, resolution=cellsize)


def save_grid(raster: Raster, path) -> None:
    lines = [
        f"ncols {raster.width}",
        f"nrows {raster.height}",
        f"cellsize {_format_value(raster.resolution)}",
        f"kind {raster.kind}",
    ]
    lines += [" ".join(_format_value(v) for v in row) for row in raster.values]
    Path(path).write_text("\n".join(lines) + "\n")


def load_seg(path) -> SegRaster:
    path = Path(path)
    lines = path.read_text().splitlines()
    header, start = _read_header(lines, path)
    if header["kind"] != "seg":
        raise GridFormatError(f"{path}: expected kind 'seg', file declares {header['kind']!r}")
    if "labels" not in header:
        raise GridFormatError(f"{path}: segmentation file lacks a labels line")
    labels = tuple(s.strip() for s in header["labels"].split(","))
    ncols, nrows, _ = _dims(header, path)
    body = _parse_body(lines, start, ncols, nrows, path, int)
    return SegRaster(np.array(body, dtype=np.int64), vocabulary=labels)


def save_seg(seg: SegRaster, path, resolution: float = 1.0) -> None:
    lines = [
        f"ncols {seg.width}",
        f"nrows {seg.height}",
        f"cellsize {_format_value(resolution)}",
        "kind seg",
        "labels " + ",".join(seg.vocabulary),
    ]
    lines += [" ".join(str(int(v)) for v in row) for row in seg.classes]
    Path(path).write_text("\n".join(lines) + "\n")


SCENE_FILES = {"dsm": "dsm.grid", "seg": "seg.grid", "svf": "svf.grid", "brightness": "brightness.grid"}


def load_scene(directory, scene_id: str | None = None) -> SceneBundle:
    """Load a scene directory holding ``dsm.grid``, ``seg.grid`` and optionally
    ``svf.grid`` / ``brightness.grid``."""
    directory = Path(directory)
    dsm = load_grid(directory / SCENE_FILES["dsm"], "elevation")
    seg = load_seg(directory / SCENE_FILES["seg"])
    svf_path = directory / SCENE_FILES["svf"]
    bright_path = directory / SCENE_FILES["brightness"]
    svf = load_grid(svf_path, "svf") if svf_path.exists() else None
    brightness = load_grid(bright_path, "brightness") if bright_path.exists() else None
    return SceneBundle(dsm, seg, svf, brightness, scene_id or directory.name)


def save_scene(bundle: SceneBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_grid(bundle.dsm, directory / SCENE_FILES["dsm"])
    save_seg(bundle.seg, directory / SCENE_FILES["seg"], bundle.dsm.resolution)
    if bundle.svf is not None:
        save_grid(bundle.svf, directory / SCENE_FILES["svf"])
    if bundle.brightness is not None:
        save_grid(bundle.brightness, directory / SCENE_FILES["brightness"])
    return directory


# --------------------------------------------------------------------------
# coordinates


def region_to_pixels(region: RegionPct, width: int, height: int) -> tuple[int, int, int, int]:
    """Half-open pixel rectangle ``(x0, y0, x1, y1)`` covering ``region``."""
    if width < 1 or height < 1:
        raise ValueError("grid must be at least 1x1")

    def span(lo, hi, n):
        a = math.floor(lo * n / 100.0 + _SNAP)
        b = math.ceil(hi * n / 100.0 - _SNAP)
        a = min(max(a, 0), n - 1)
        b = min(max(b, a + 1), n)
        return a, b

    x0, x1 = span(region.xmin, region.xmax, width)
    y0, y1 = span(region.ymin, region.ymax, height)
    return x0, y0, x1, y1


def point_to_pixel(point: PointPct, width: int, height: int) -> tuple[int, int]:
    x = math.floor(point.x * width / 100.0 + _SNAP)
    y = math.floor(point.y * height / 100.0 + _SNAP)
    return min(max(x, 0), width - 1), min(max(y, 0), height - 1)


def window_rect(center: tuple[int, int], size: int, width: int, height: int) -> tuple[int, int, int, int]:
    """Square ``size`` x ``size`` window around a pixel, clipped to the grid."""
    half = size // 2
    x, y = center
    return max(x - half, 0), max(y - half, 0), min(x + half + 1, width), min(y + half + 1, height)


def _as_rect(selector, width, height) -> tuple[int, int, int, int]:
    if isinstance(selector, RegionPct):
        return region_to_pixels(selector, width, height)
    x0, y0, x1, y1 = selector
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise ValueError(f"empty or out-of-bounds pixel rect {selector}")
    return x0, y0, x1, y1


def crop(values: np.ndarray, rect: Sequence[int]) -> np.ndarray:
    x0, y0, x1, y1 = rect
    return values[y0:y1, x0:x1]


# --------------------------------------------------------------------------
# windowed statistics


def stats_of(values: np.ndarray) -> RegionStats:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("statistics of an empty window")
    q1, q2, q3 = np.percentile(v, [25.0, 50.0, 75.0])
    return RegionStats(
        mean=float(v.mean()),
        std=float(v.std()),
        min=float(v.min()),
        max=float(v.max()),
        quartiles=(float(q1), float(q2), float(q3)),
        pixel_count=int(v.size),
    )


def region_stats(raster: Raster, region) -> RegionStats:
    """Population statistics over the pixels of ``region`` (a RegionPct or a
    pixel rect)."""
    rect = _as_rect(region, raster.width, raster.height)
    return stats_of(crop(raster.values, rect))


def class_ratio(seg: SegRaster, region, labels: Iterable[str]) -> float:
    ids = seg.label_ids(labels)
    rect = _as_rect(region, seg.width, seg.height)
    window = crop(seg.classes, rect)
    return float(np.isin(window, ids).sum()) / window.size


def class_ratios(seg: SegRaster, region=None) -> dict[str, float]:
    """Share of every vocabulary label inside ``region`` (whole grid if None)."""
    window = seg.classes if region is None else crop(seg.classes, _as_rect(region, seg.width, seg.height))
    counts = np.bincount(window.ravel(), minlength=len(seg.vocabulary))
    return {label: float(c) / window.size for label, c in zip(seg.vocabulary, counts)}


# --------------------------------------------------------------------------
# brightness and edges


def edge_map(brightness: Raster) -> Raster:
    """Sobel gradient magnitude with replicated borders."""
    if brightness.width < 3 or brightness.height < 3:
        raise ValueError("edge_map needs a raster of at least 3x3")
    v = brightness.values
    gx = ndimage.sobel(v, axis=1, mode="nearest")
    gy = ndimage.sobel(v, axis=0, mode="nearest")
    return Raster(np.hypot(gx, gy), kind="brightness", resolution=brightness.resolution)


def brightness_default(seg: SegRaster, resolution: float = 1.0) -> Raster:
    return Raster(np.full(seg.shape, 0.5), kind="brightness", resolution=resolution)
