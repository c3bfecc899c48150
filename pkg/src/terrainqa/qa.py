"""Deterministic generation of short-answer benchmark items.

Each item is generated from a candidate pool: selectors (regions or points)
are sampled uniformly with a minimum centre separation, every candidate is
scored with the category metric, and the winner plus distractors that trail
it by at least ``min_score_margin`` become the options.  Option order is
assigned afterwards by :func:`balanced_shuffle`, which spreads the correct
position evenly over A/B/C/D.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

from .metrics import EDGE_WINDOW, PENALTY_WINDOW, MetricWeights, SceneAnalysis
from .raster import FULL_IMAGE, VOCABULARY, PointPct, RegionPct, SceneBundle, class_ratios, crop, region_to_pixels
from .svf import SvfParams

LETTERS = "ABCD"


@dataclass(frozen=True)
class Category:
    id: str
    tier: int
    answer_format: str
    n_options: int = 0
    selector: str = "region"  # region | point | image


CATEGORY_LIST = (
    Category("sun_exposure", 1, "point_choice", 4, "point"),
    Category("SVF_value", 1, "numeric_svf", 0, "region"),
    Category("region_ranking", 1, "ranking", 3, "region"),
    Category("regional_svf_variability", 1, "region_choice", 3, "region"),
    Category("height_average", 1, "numeric_height", 0, "region"),
    Category("highest_region", 1, "region_choice", 4, "region"),
    Category("top_land_uses", 1, "multilabel", 0, "region"),
    Category("landcover_type", 1, "multilabel", 0, "image"),
    Category("sky_visibility", 2, "point_choice", 4, "point"),
    Category("visibility_range", 2, "point_choice", 4, "point"),
    Category("spatial_openness", 2, "region_choice", 4, "region"),
    Category("building_density", 2, "region_choice", 4, "region"),
)
CATEGORIES = {c.id: c for c in CATEGORY_LIST}
CHOICE_FORMATS = ("region_choice", "point_choice")

# multilabel ground truth: labels whose pixel share reaches the threshold
LAND_USE_SHARE = 0.15
LAND_USE_MAX_LABELS = 3
LANDCOVER_SHARE = 0.02
# shares this close to a threshold make the label set ambiguous
SHARE_AMBIGUITY = 0.02
LANDCOVER_AMBIGUITY = 0.005


class UnsuitableScene(Exception):
    """The scene cannot yield a well-posed item for the category."""


class SelectorError(UnsuitableScene):
    """Separated selectors could not be placed within the retry budget."""


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    per_category_count: int = 1
    min_score_margin: float = 0.05
    min_spatial_separation: float = 10.0
    region_size_range: tuple[float, float] = (8.0, 40.0)
    pool_size: int = 16
    max_attempts: int = 400
    pool_retries: int = 4
    categories: tuple[str, ...] = tuple(CATEGORIES)
    workers: int = 1

    def __post_init__(self):
        if not (self.min_score_margin > 0 and self.min_spatial_separation > 0):
            raise ValueError("margins and separations must be positive")
        lo, hi = self.region_size_range
        if not (0 < lo <= hi <= 100):
            raise ValueError(f"bad region_size_range {self.region_size_range}")
        unknown = set(self.categories) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories: {sorted(unknown)}")
        if self.per_category_count < 0:
            raise ValueError("per_category_count must be >= 0")


@dataclass(frozen=True)
class QAItem:
    item_id: str
    scene_id: str
    category: str
    tier: int
    prompt: str
    options: tuple[str, ...]
    ground_truth: str
    regions: tuple[RegionPct, ...] = ()
    points: tuple[PointPct, ...] = ()
    gen_seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def option_scores(self) -> list[float]:
        return list(self.metadata.get("option_scores", []))

    @property
    def answer_format(self) -> str:
        return CATEGORIES[self.category].answer_format

    def correct_index(self) -> int | None:
        """Position of the correct option (top-ranked region for rankings)."""
        fmt = self.answer_format
        if fmt in CHOICE_FORMATS or fmt == "ranking":
            return int(np.argmax(self.option_scores))
        return None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "scene_id": self.scene_id,
            "category": self.category,
            "tier": self.tier,
            "prompt": self.prompt,
            "options": list(self.options),
            "ground_truth": self.ground_truth,
            "selectors": {
                "regions": [[_num(v) for v in r.as_list()] for r in self.regions],
                "points": [[_num(v) for v in p.as_list()] for p in self.points],
            },
            "gen_seed": self.gen_seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QAItem":
        sel = d.get("selectors", {})
        return cls(
            item_id=d["item_id"],
            scene_id=d["scene_id"],
            category=d["category"],
            tier=int(d["tier"]),
            prompt=d["prompt"],
            options=tuple(d.get("options", [])),
            ground_truth=d["ground_truth"],
            regions=tuple(RegionPct(*map(float, r)) for r in sel.get("regions", [])),
            points=tuple(PointPct(*map(float, p)) for p in sel.get("points", [])),
            gen_seed=int(d.get("gen_seed", 0)),
            metadata=d.get("metadata", {}),
        )


def _num(v: float):
    return int(v) if float(v).is_integer() else v


# --------------------------------------------------------------------------
# formatting helpers


def fmt_region(r: RegionPct) -> str:
    return "[" + ", ".join(f"{_num(v)}%" for v in r.as_list()) + "]"


def fmt_point(p: PointPct) -> str:
    return f"Point ({p.x:.1f}%, {p.y:.1f}%)"


def round_half_up(value: float, step: float) -> float:
    # snap first so that 0.25 stored as 0.2499999 still rounds up
    q = round(value / step, 9)
    return math.floor(q + 0.5) * step


def format_svf(value: float) -> str:
    return f"{min(max(round_half_up(value, 0.1), 0.0), 1.0):.1f}"


def format_height(value: float) -> str:
    return f"{int(round_half_up(value, 10.0))} m"


# --------------------------------------------------------------------------
# selector sampling


def _sample_point(rng) -> PointPct:
    x, y = rng.uniform(0.0, 100.0, size=2)
    return PointPct(round(float(x), 1), round(float(y), 1))


def _sample_region(rng, size_range) -> RegionPct:
    lo, hi = size_range
    for _ in range(100):
        w = float(rng.uniform(lo, hi))
        aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
        w_i = max(1, int(round(w)))
        h_i = max(1, int(round(w * aspect)))
        if not (0.5 <= h_i / w_i <= 2.0) or h_i > 100:
            continue
        x0 = int(rng.integers(0, 100 - w_i + 1))
        y0 = int(rng.integers(0, 100 - h_i + 1))
        return RegionPct(x0, y0, x0 + w_i, y0 + h_i)
    raise SelectorError("could not draw a region within the size and aspect limits")


def _centre(sel) -> tuple[float, float]:
    return sel.center if isinstance(sel, RegionPct) else (sel.x, sel.y)


def _separated(sel, chosen, min_sep: float) -> bool:
    cx, cy = _centre(sel)
    return all(math.hypot(cx - ox, cy - oy) >= min_sep for ox, oy in map(_centre, chosen))


def sample_selectors(width: int, height: int, category: Category | str, config: GenConfig,
                     rng: np.random.Generator, count: int | None = None) -> list:
    """Draw ``count`` mutually separated selectors uniformly over the image.

    Raises :class:`SelectorError` when the retry budget runs out."""
    category = CATEGORIES[category] if isinstance(category, str) else category
    count = config.pool_size if count is None else count
    lo = config.region_size_range[0]
    if category.selector == "region" and (lo * min(width, height) / 100.0 < 1.0):
        raise SelectorError(f"{width}x{height} grid too small for {lo}% regions")
    chosen: list = []
    for _ in range(config.max_attempts):
        sel = _sample_point(rng) if category.selector == "point" else _sample_region(rng, config.region_size_range)
        if _separated(sel, chosen, config.min_spatial_separation):
            chosen.append(sel)
            if len(chosen) == count:
                return chosen
    raise SelectorError(
        f"placed {len(chosen)} of {count} selectors {config.min_spatial_separation}% apart "
        f"after {config.max_attempts} draws"
    )


# --------------------------------------------------------------------------
# category metrics


def option_score(analysis: SceneAnalysis, category: str, sel, weights: MetricWeights = MetricWeights()) -> float:
    """The quantity ranked (or reported) for one selector of a category."""
    b = analysis.bundle
    if category == "sun_exposure":
        return analysis.svf_value(sel)
    if category == "sky_visibility":
        return analysis.sky_visibility(sel, weights)
    if category == "visibility_range":
        return analysis.visibility_range(sel, weights)
    rect = region_to_pixels(sel, b.width, b.height)
    if category in ("SVF_value", "region_ranking"):
        return float(crop(analysis.svf.values, rect).mean())
    if category == "regional_svf_variability":
        return float(crop(analysis.svf.values, rect).std())
    if category == "height_average":
        return float(crop(b.dsm.values, rect).mean())
    if category == "highest_region":
        return float(crop(b.dsm.values, rect).max())
    if category == "spatial_openness":
        return analysis.spatial_openness(rect, weights)
    if category == "building_density":
        return analysis.urban_density(rect, weights)
    raise ValueError(f"category {category!r} has no scalar metric")


def label_set(ratios: dict[str, float], threshold: float, max_labels: int | None = None) -> list[str]:
    ranked = sorted((lbl for lbl in VOCABULARY if ratios[lbl] >= threshold),
                    key=lambda lbl: (-ratios[lbl], VOCABULARY.index(lbl)))
    return ranked[:max_labels] if max_labels else ranked


def _ambiguous(ratios: dict[str, float], threshold: float, band: float = SHARE_AMBIGUITY) -> bool:
    return any(abs(v - threshold) < band for v in ratios.values())


def compute_ground_truth(analysis: SceneAnalysis, item: QAItem, weights: MetricWeights = MetricWeights()) -> str:
    """Recompute an item's answer from its stored selectors."""
    cat = CATEGORIES[item.category]
    if cat.answer_format in CHOICE_FORMATS:
        sels = item.points if cat.selector == "point" else item.regions
        scores = [option_score(analysis, cat.id, s, weights) for s in sels]
        return item.options[int(np.argmax(scores))]
    if cat.answer_format == "ranking":
        scores = [option_score(analysis, cat.id, s, weights) for s in item.regions]
        order = np.argsort(-np.asarray(scores), kind="stable")
        return ", ".join(f"Region {LETTERS[i]}" for i in order)
    if cat.id == "SVF_value":
        return format_svf(option_score(analysis, cat.id, item.regions[0], weights))
    if cat.id == "height_average":
        return format_height(option_score(analysis, cat.id, item.regions[0], weights))
    if cat.id == "top_land_uses":
        return ", ".join(label_set(class_ratios(analysis.bundle.seg, item.regions[0]),
                                   LAND_USE_SHARE, LAND_USE_MAX_LABELS))
    if cat.id == "landcover_type":
        return ", ".join(label_set(class_ratios(analysis.bundle.seg), LANDCOVER_SHARE))
    raise ValueError(item.category)


# --------------------------------------------------------------------------
# prompt rendering

SYSTEM_LINE = "System: You are a precise geospatial assistant. Answer concisely."
REGION_NOTE = "Note: Coordinates are the percentages of the image size [xmin%, ymin%, xmax%, ymax%]."
POINT_COORDS = (
    "Coordinate system: Each point is specified by (x, y) coordinates as percentages of the image "
    "dimensions, where (0, 0) represents the top-left corner. 'x' represents the horizontal position "
    "(from left to right), and 'y' represents the vertical position (from top to bottom)."
)
REGION_COORDS = (
    "Coordinate system: Each region is specified by [xmin, ymin, xmax, ymax] as percentages of the "
    "image dimensions, where (0, 0) represents the top-left corner. 'x' represents the horizontal "
    "position (from left to right), and 'y' represents the vertical position (from top to bottom)."
)
CHOICES_LINE = (
    "Choices: residential, agricultural, forest, grassland,\n"
    "         railways, roads, bare_soil, buildings, water, other"
)

QUESTIONS = {
    "sun_exposure": ("Which location receives the most sun exposure?",
                     "Locations with a higher sky view factor receive more direct sunlight."),
    "sky_visibility": ("Which location has the highest sky visibility?",
                       "Areas with fewer obstacles have a higher sky view factor."),
    "visibility_range": ("Which location has the most comprehensive sight lines?",
                         "Areas with good visibility typically have a high sky view factor and fewer "
                         "obstacles in the line of sight."),
    "highest_region": ("Which region has the highest elevation?", None),
    "regional_svf_variability": ("Which region shows the greatest variability in sky view factor?", None),
    "spatial_openness": ("Which area demonstrates maximum openness with minimal obstruction?", None),
    "building_density": ("Which area has the most crowded urban layouts?", None),
}


def _scoring_line(item: QAItem) -> str | None:
    c = item.category
    if c == "sky_visibility":
        we = item.metadata.get("edge_weight", 0.05)
        return (f"Scoring method: Locations were scored as 0.7 x SVF - 0.3 x building penalty "
                f"(building share within a {PENALTY_WINDOW}x{PENALTY_WINDOW} pixel window) - {we} x edge "
                f"penalty (mean edge strength within a {EDGE_WINDOW}x{EDGE_WINDOW} pixel window).")
    if c == "visibility_range":
        return ("Scoring method: Locations were scored solely based on viewshed distance analysis (60%), "
                "local sky view factor context (25%), and terrain roughness (15%).")
    if c == "spatial_openness":
        return ("Scoring method: Regions were scored as 0.5 x openness index + 0.25 x mean SVF + "
                "0.15 x (1 - building density) + 0.05 x terrain flatness + 0.05 x visual simplicity.")
    if c == "building_density":
        return ("Scoring method: Regions were scored as 0.5 x building coverage ratio + 0.25 x floor area "
                "ratio + 0.15 x (1 - mean SVF) + 0.05 x edge density + 0.05 x (1 - brightness).")
    return None


def render_prompt(item: QAItem) -> str:
    """System + user text for an item, following the fixed templates."""
    cat = CATEGORIES[item.category]
    lines = [SYSTEM_LINE]
    fmt = cat.answer_format
    if fmt in ("numeric_svf", "numeric_height"):
        what = "the mean Sky View Factor" if fmt == "numeric_svf" else "the mean elevation"
        lines += [
            "User: Consider an RGB image. Answer using the specified format only.",
            f"Question: Calculate {what} within the area",
            f"         {fmt_region(item.regions[0])}.",
            REGION_NOTE,
            "Answer format: X.X (a single number in [0.0, 1.0], rounded to 1 decimal)"
            if fmt == "numeric_svf" else
            'Answer format: "X m" with 10-meter increments',
        ]
    elif fmt == "ranking":
        lines += [
            "User: Compare the SVF values of the three regions. Reply with",
            "      the order from highest to lowest, labeled A/B/C.",
            "Regions (x1%, y1%, x2%, y2%):",
        ]
        lines += [f"  {LETTERS[i]}: ({', '.join(f'{_num(v)}%' for v in r.as_list())})"
                  for i, r in enumerate(item.regions)]
        lines += ["Answer format:", '"Region A, Region B, Region C"']
    elif fmt == "multilabel":
        if cat.id == "top_land_uses":
            r = item.regions[0]
            lines += ["User: Which land use types are most frequent in the region",
                      f"      ({', '.join(f'{_num(v)}%' for v in r.as_list())})?"]
        else:
            lines += ["User: Which land cover types are present in this image?"]
        lines += [CHOICES_LINE, "Answer format:", "Comma-separated labels in lowercase."]
    else:
        question, hint = QUESTIONS[cat.id]
        if fmt == "region_choice":
            lines.append(f"User: {question} Which region best matches this criterion? Choose one.")
        else:
            lines.append(f"User: {question}")
        if hint:
            lines.append(f"Hint: {hint}")
        if cat.tier == 2:
            lines.append(_scoring_line(item))
            lines.append(POINT_COORDS if fmt == "point_choice" else REGION_COORDS)
        if fmt == "region_choice":
            lines.append("")
            lines += [f"{LETTERS[i]}: {fmt_region(r)}" for i, r in enumerate(item.regions)]
            lines.append("")
        lines.append("Please choose from:")
        lines += list(item.options)
        if fmt == "point_choice":
            lines.append("Answer format: Point (x.x%, y.y%)")
        else:
            lines += ["Answer format:", "Region X"]
    return "\n".join(lines)


# --------------------------------------------------------------------------
# item assembly


def _assemble(base: QAItem, selectors: Sequence, scores: Sequence[float]) -> QAItem:
    """Rebuild options, ground truth and prompt for a given option order."""
    cat = CATEGORIES[base.category]
    md = dict(base.metadata)
    md["option_scores"] = [float(s) for s in scores]
    if cat.selector == "point":
        options = tuple(fmt_point(p) for p in selectors)
        item = replace(base, points=tuple(selectors), options=options, metadata=md)
    else:
        options = tuple(f"Region {LETTERS[i]}" for i in range(len(selectors)))
        item = replace(base, regions=tuple(selectors), options=options, metadata=md)
    if cat.answer_format == "ranking":
        order = np.argsort(-np.asarray(scores), kind="stable")
        gt = ", ".join(f"Region {LETTERS[i]}" for i in order)
    else:
        gt = options[int(np.argmax(scores))]
    item = replace(item, ground_truth=gt)
    return replace(item, prompt=render_prompt(item))


def _pick_choice(pool, scores, n_options, margin, rng):
    order = np.argsort(-np.asarray(scores), kind="stable")
    win = int(order[0])
    eligible = [i for i in range(len(pool)) if scores[i] <= scores[win] - margin]
    if len(eligible) < n_options - 1:
        return None
    picks = rng.choice(len(eligible), size=n_options - 1, replace=False)
    return [win] + [eligible[int(i)] for i in picks]


def _pick_ranking(pool, scores, n, margin, rng):
    chosen: list[int] = []
    for i in rng.permutation(len(pool)):
        if all(abs(scores[i] - scores[j]) >= margin for j in chosen):
            chosen.append(int(i))
            if len(chosen) == n:
                return chosen
    return None


def _generate_raw(analysis: SceneAnalysis, category: str, config: GenConfig, weights: MetricWeights,
                  gen_seed: int, item_id: str) -> QAItem:
    """Item with the winning option first; option order is fixed later."""
    cat = CATEGORIES[category]
    rng = np.random.default_rng(gen_seed)
    b = analysis.bundle
    base = QAItem(item_id=item_id, scene_id=b.scene_id, category=category, tier=cat.tier, prompt="",
                  options=(), ground_truth="", gen_seed=gen_seed, metadata={})
    if category == "sky_visibility":
        base = replace(base, metadata={"edge_weight": weights.sky_visibility.edge_penalty})

    if cat.answer_format in CHOICE_FORMATS or cat.answer_format == "ranking":
        for _ in range(config.pool_retries):
            pool = sample_selectors(b.width, b.height, cat, config, rng)
            scores = [option_score(analysis, category, s, weights) for s in pool]
            if cat.answer_format == "ranking":
                idx = _pick_ranking(pool, scores, cat.n_options, config.min_score_margin, rng)
                if idx is not None:
                    idx.sort(key=lambda i: -scores[i])
            else:
                idx = _pick_choice(pool, scores, cat.n_options, config.min_score_margin, rng)
            if idx is not None:
                return _assemble(base, [pool[i] for i in idx], [scores[i] for i in idx])
        raise UnsuitableScene(f"{b.scene_id}: no {category} candidates separated by "
                              f"{config.min_score_margin} in score")

    if cat.id == "landcover_type":
        ratios = class_ratios(b.seg)
        labels = label_set(ratios, LANDCOVER_SHARE)
        if len(labels) < 2 or _ambiguous(ratios, LANDCOVER_SHARE, LANDCOVER_AMBIGUITY):
            raise UnsuitableScene(f"{b.scene_id}: land-cover composition unsuitable")
        md = {"label_shares": {k: ratios[k] for k in labels}}
        item = replace(base, ground_truth=", ".join(labels), metadata=md)
        return replace(item, prompt=render_prompt(item))

    for _ in range(config.pool_retries):
        region = sample_selectors(b.width, b.height, cat, config, rng, count=1)[0]
        if cat.id == "top_land_uses":
            ratios = class_ratios(b.seg, region)
            if _ambiguous(ratios, LAND_USE_SHARE):
                continue
            labels = label_set(ratios, LAND_USE_SHARE, LAND_USE_MAX_LABELS)
            if len(labels) == LAND_USE_MAX_LABELS and any(
                    abs(ratios[labels[-1]] - v) < SHARE_AMBIGUITY
                    for k, v in ratios.items() if k not in labels):
                continue
            md = {"label_shares": {k: ratios[k] for k in labels}}
            gt = ", ".join(labels)
        else:
            value = option_score(analysis, category, region, weights)
            md = {"value": value}
            gt = format_svf(value) if cat.id == "SVF_value" else format_height(value)
        item = replace(base, regions=(region,), ground_truth=gt, metadata=md)
        return replace(item, prompt=render_prompt(item))
    raise UnsuitableScene(f"{b.scene_id}: no unambiguous region for {category}")


def _reorder(item: QAItem, target: int, rng: np.random.Generator) -> QAItem:
    cat = CATEGORIES[item.category]
    sels = list(item.points if cat.selector == "point" else item.regions)
    scores = item.option_scores
    win = item.correct_index()
    others = [i for i in range(len(sels)) if i != win]
    others = [others[int(j)] for j in rng.permutation(len(others))]
    perm = others[:target] + [win] + others[target:]
    return _assemble(item, [sels[i] for i in perm], [scores[i] for i in perm])


def balanced_shuffle(items: Sequence[QAItem], rng: np.random.Generator) -> list[QAItem]:
    """Permute options so that, per category, each position holds the correct
    answer (the top region, for rankings) equally often, within one item."""
    items = list(items)
    groups: dict[str, list[int]] = {}
    for i, it in enumerate(items):
        if it.answer_format in CHOICE_FORMATS or it.answer_format == "ranking":
            groups.setdefault(it.category, []).append(i)
    for cat_id, idx in groups.items():
        k = CATEGORIES[cat_id].n_options
        blocks = math.ceil(len(idx) / k)
        targets = np.concatenate([rng.permutation(k) for _ in range(blocks)])[:len(idx)]
        for i, t in zip(idx, targets):
            items[i] = _reorder(items[i], int(t), rng)
    return items


def gen_item(bundle: SceneBundle | SceneAnalysis, category: str, config: GenConfig = GenConfig(),
             rng: np.random.Generator | None = None, weights: MetricWeights = MetricWeights(),
             item_id: str | None = None) -> QAItem:
    analysis = bundle if isinstance(bundle, SceneAnalysis) else SceneAnalysis(bundle)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    gen_seed = int(rng.integers(0, 2**63))
    raw = _generate_raw(analysis, category, config, weights, gen_seed,
                        item_id or f"{analysis.bundle.scene_id}_{category}_000")
    return balanced_shuffle([raw], rng)[0]


@dataclass
class GenerationResult:
    items: list[QAItem]
    skipped: Counter = field(default_factory=Counter)

    def counts(self) -> Counter:
        return Counter(it.category for it in self.items)


def _scene_items(bundle, seq, config, weights, svf_params):
    analysis = bundle if isinstance(bundle, SceneAnalysis) else SceneAnalysis(bundle, svf_params)
    rng = np.random.default_rng(seq)
    items, skipped = [], Counter()
    for category in config.categories:
        # the whole-image land-cover question has only one distinct form
        n = min(1, config.per_category_count) if category == "landcover_type" else config.per_category_count
        for j in range(n):
            gen_seed = int(rng.integers(0, 2**63))
            item_id = f"{analysis.bundle.scene_id}_{category}_{j:03d}"
            try:
                items.append(_generate_raw(analysis, category, config, weights, gen_seed, item_id))
            except UnsuitableScene:
                skipped[category] += 1
    return items, skipped


def generate(scenes: Sequence[SceneBundle | SceneAnalysis], config: GenConfig = GenConfig(),
             weights: MetricWeights = MetricWeights(), svf_params: SvfParams = SvfParams(),
             workers: int | None = None) -> GenerationResult:
    """Generate ``per_category_count`` items per scene and category.

    Scenes get independent seed streams and may be processed on a thread
    pool; the balanced shuffle runs last over the whole batch, so the output
    depends only on (scenes, config, weights)."""
    workers = config.workers if workers is None else workers
    seqs = np.random.SeedSequence(config.seed).spawn(len(scenes) + 1)
    args = [(s, seqs[i], config, weights, svf_params) for i, s in enumerate(scenes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _scene_items(*a), args))
    else:
        parts = [_scene_items(*a) for a in args]
    items, skipped = [], Counter()
    for its, sk in parts:
        items.extend(its)
        skipped.update(sk)
    items = balanced_shuffle(items, np.random.default_rng(seqs[-1]))
    return GenerationResult(items, skipped)


# --------------------------------------------------------------------------
# persistence and audit


def emit_jsonl(items: Iterable[QAItem], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for it in items:
            fh.write(json.dumps(it.to_dict(), ensure_ascii=False) + "\n")


def load_jsonl(path) -> list[QAItem]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(QAItem.from_dict(json.loads(line)))
    return out


def audit_balance(items: Iterable[QAItem], alpha: float = 0.01) -> dict:
    """Correct-position histogram and chi-square test against uniform, per
    category and pooled by option count."""
    per_cat: dict[str, list[int]] = {}
    pooled: dict[int, list[int]] = {}
    for it in items:
        idx = it.correct_index()
        if idx is None:
            continue
        k = CATEGORIES[it.category].n_options
        per_cat.setdefault(it.category, [0] * k)[idx] += 1
        pooled.setdefault(k, [0] * k)[idx] += 1

    def summarise(hist):
        n = sum(hist)
        chi2, p = sps.chisquare(hist) if n else (0.0, 1.0)
        chi2 = float(chi2) if np.isfinite(chi2) else 0.0
        p = float(p) if np.isfinite(p) else 1.0
        return {
            "counts": {LETTERS[i]: c for i, c in enumerate(hist)},
            "shares": {LETTERS[i]: (c / n if n else 0.0) for i, c in enumerate(hist)},
            "n": n,
            "chi_square": chi2,
            "p_value": p,
            "flagged": p < alpha,
        }

    return {
        "categories": {c: summarise(h) for c, h in sorted(per_cat.items())},
        "by_option_count": {str(k): summarise(h) for k, h in sorted(pooled.items())},
    }
