import itertools
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrainqa.metrics import SceneAnalysis
from terrainqa.qa import (
    CATEGORIES,
    CHOICE_FORMATS,
    GenConfig,
    QAItem,
    SelectorError,
    UnsuitableScene,
    audit_balance,
    balanced_shuffle,
    compute_ground_truth,
    emit_jsonl,
    format_height,
    format_svf,
    gen_item,
    generate,
    load_jsonl,
    option_score,
    render_prompt,
    sample_selectors,
)
from terrainqa.raster import PointPct, Raster, RegionPct, SceneBundle, SegRaster, point_to_pixel
from terrainqa.synthetic import LABEL, city_scene, uniform_scene

GRAMMAR = {
    "numeric_svf": re.compile(r"^(0\.\d|1\.0)$"),
    "numeric_height": re.compile(r"^\d+0 m$|^0 m$"),
    "ranking": re.compile(r"^Region [A-C], Region [A-C], Region [A-C]$"),
    "region_choice": re.compile(r"^Region [A-D]$"),
    "point_choice": re.compile(r"^Point \(\d{1,3}\.\d%, \d{1,3}\.\d%\)$"),
    "multilabel": re.compile(r"^[a-z_]+(, [a-z_]+)*$"),
}


@pytest.fixture(scope="module")
def analyses():
    return [SceneAnalysis(city_scene(s, size=96)) for s in range(4)]


@pytest.fixture(scope="module")
def batch(analyses):
    return generate(analyses, GenConfig(seed=11, per_category_count=4))


def test_category_table():
    assert len(CATEGORIES) == 12
    assert {c.id for c in CATEGORIES.values() if c.tier == 2} == {
        "sky_visibility", "visibility_range", "spatial_openness", "building_density"}
    assert CATEGORIES["regional_svf_variability"].n_options == 3
    assert all(c.n_options == 4 for c in CATEGORIES.values()
               if c.answer_format in CHOICE_FORMATS and c.id != "regional_svf_variability")


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(min_score_margin=0)
    with pytest.raises(ValueError):
        GenConfig(min_spatial_separation=-1)
    with pytest.raises(ValueError):
        GenConfig(region_size_range=(40, 8))
    with pytest.raises(ValueError):
        GenConfig(categories=("nope",))


# -- selectors


def _px_dist(a, b, n):
    (ax, ay), (bx, by) = a, b
    return math.hypot((ax - bx) * n / 100, (ay - by) * n / 100)


def test_point_separation_on_large_grid():
    pts = sample_selectors(1000, 1000, "sun_exposure", GenConfig(), np.random.default_rng(0), count=4)
    assert len(pts) == 4
    for a, b in itertools.combinations(pts, 2):
        assert _px_dist((a.x, a.y), (b.x, b.y), 1000) >= 100


def test_infeasible_separation_rejected():
    cfg = GenConfig(min_spatial_separation=80.0, max_attempts=200)
    with pytest.raises(SelectorError):
        sample_selectors(1000, 1000, "sun_exposure", cfg, np.random.default_rng(0), count=4)
    # beyond the diagonal of the image no two points can ever be placed
    cfg = GenConfig(min_spatial_separation=150.0)
    with pytest.raises(SelectorError):
        sample_selectors(1000, 1000, "sun_exposure", cfg, np.random.default_rng(0), count=2)


def test_grid_too_small_for_regions():
    with pytest.raises(SelectorError):
        sample_selectors(10, 10, "highest_region", GenConfig(), np.random.default_rng(0), count=1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["highest_region", "sun_exposure"]))
def test_selector_constraints(seed, category):
    cfg = GenConfig()
    sels = sample_selectors(200, 150, category, cfg, np.random.default_rng(seed))
    assert len(sels) == cfg.pool_size
    centres = [s.center if isinstance(s, RegionPct) else (s.x, s.y) for s in sels]
    for a, b in itertools.combinations(centres, 2):
        assert math.dist(a, b) >= cfg.min_spatial_separation
    for s in sels:
        if isinstance(s, RegionPct):
            w, h = s.xmax - s.xmin, s.ymax - s.ymin
            assert all(float(v).is_integer() for v in s.as_list())
            assert 0.5 <= h / w <= 2.0
            assert 7.5 <= w <= 40.5
        else:
            assert round(s.x, 1) == s.x and round(s.y, 1) == s.y
    again = sample_selectors(200, 150, category, cfg, np.random.default_rng(seed))
    assert again == sels


# -- item generation


def test_flat_grass_sky_visibility_unsuitable():
    b = uniform_scene("grassland", size=64)
    with pytest.raises(UnsuitableScene):
        gen_item(b, "sky_visibility", GenConfig(), np.random.default_rng(0))


def test_height_average_quantised():
    b = uniform_scene("grassland", size=64, height=27.0)
    item = gen_item(b, "height_average", GenConfig(), np.random.default_rng(0))
    assert item.ground_truth == "30 m"
    assert item.options == ()


def test_rounding_rules():
    assert format_height(25.0) == "30 m" and format_height(24.99) == "20 m" and format_height(4.9) == "0 m"
    assert format_svf(0.25) == "0.3" and format_svf(0.2499) == "0.2" and format_svf(0.96) == "1.0"
    assert format_svf(0.35) == "0.4"  # stored as 0.34999..., still a tie


def _field_and_courtyards():
    """An open field (west) and three walled courtyards (east)."""
    n = 120
    dsm = np.zeros((n, n))
    seg = np.full((n, n), LABEL["grassland"])
    yards = [(90, 20), (90, 60), (90, 100)]
    for cx, cy in yards:
        dsm[cy - 9:cy + 10, cx - 9:cx + 10] = 18.0
        seg[cy - 9:cy + 10, cx - 9:cx + 10] = LABEL["buildings"]
        dsm[cy - 3:cy + 4, cx - 3:cx + 4] = 0.0
        seg[cy - 3:cy + 4, cx - 3:cx + 4] = LABEL["grassland"]
    bundle = SceneBundle(Raster(dsm), SegRaster(seg), scene_id="yards")
    pct = lambda px: round(px / n * 100 + 0.4, 1)
    field = PointPct(pct(20), pct(60))
    courts = [PointPct(pct(cx), pct(cy)) for cx, cy in yards]
    return bundle, field, courts


def test_open_field_beats_courtyards():
    bundle, field, courts = _field_and_courtyards()
    a = SceneAnalysis(bundle)
    for cx in courts:
        assert point_to_pixel(cx, 120, 120) in [(90, 20), (90, 60), (90, 100)]
    scores = [option_score(a, "sky_visibility", p) for p in [field] + courts]
    assert all(scores[0] - s >= GenConfig().min_score_margin for s in scores[1:])
    item = QAItem("x", "yards", "sky_visibility", 2, "", tuple(f"Point ({p.x:.1f}%, {p.y:.1f}%)" for p in courts + [field]),
                  "", points=tuple(courts + [field]))
    assert compute_ground_truth(a, item) == f"Point ({field.x:.1f}%, {field.y:.1f}%)"


def test_generated_items_are_consistent(analyses, batch):
    by_scene = {a.bundle.scene_id: a for a in analyses}
    cfg = GenConfig()
    assert batch.counts()["sun_exposure"] == 16
    for it in batch.items:
        cat = CATEGORIES[it.category]
        assert GRAMMAR[cat.answer_format].match(it.ground_truth), (it.category, it.ground_truth)
        assert compute_ground_truth(by_scene[it.scene_id], it) == it.ground_truth
        assert it.prompt == render_prompt(it)
        if cat.answer_format in CHOICE_FORMATS or cat.answer_format == "ranking":
            scores = it.option_scores
            assert len(scores) == cat.n_options == len(it.options)
            best = max(scores)
            assert sum(s == best for s in scores) == 1
            if cat.answer_format == "ranking":
                for a, b in itertools.combinations(scores, 2):
                    assert abs(a - b) >= cfg.min_score_margin
            else:
                assert it.ground_truth == it.options[int(np.argmax(scores))]
                for s in scores:
                    assert s == best or best - s >= cfg.min_score_margin
            sels = it.points or it.regions
            centres = [s.center if isinstance(s, RegionPct) else (s.x, s.y) for s in sels]
            for a, b in itertools.combinations(centres, 2):
                assert math.dist(a, b) >= cfg.min_spatial_separation


def test_multilabel_ground_truth(analyses, batch):
    for it in batch.items:
        if it.category == "top_land_uses":
            labels = it.ground_truth.split(", ")
            assert 1 <= len(labels) <= 3
            assert all(it.metadata["label_shares"][lbl] >= 0.15 for lbl in labels)
        if it.category == "landcover_type":
            assert len(it.ground_truth.split(", ")) >= 2


def test_generation_is_deterministic(analyses, batch):
    again = generate(analyses, GenConfig(seed=11, per_category_count=4), workers=3)
    assert [i.to_dict() for i in again.items] == [i.to_dict() for i in batch.items]
    other = generate(analyses, GenConfig(seed=12, per_category_count=4))
    assert [i.to_dict() for i in other.items] != [i.to_dict() for i in batch.items]


# -- balancing


def _fake_items(n, k=4, category="sun_exposure"):
    items = []
    for i in range(n):
        pts = tuple(PointPct(10.0 + 20 * j, 50.0) for j in range(k))
        scores = [0.9 - 0.1 * j for j in range(k)]
        it = QAItem(f"i{i:04d}", "s", category, CATEGORIES[category].tier, "", (), "", points=pts,
                    metadata={"option_scores": scores})
        items.append(it)
    return items


def test_balanced_shuffle_exact_counts():
    out = balanced_shuffle(_fake_items(400), np.random.default_rng(0))
    counts = np.bincount([it.correct_index() for it in out], minlength=4)
    assert counts.tolist() == [100, 100, 100, 100]
    for it in out:
        assert it.ground_truth == it.options[it.correct_index()]
        assert sorted(it.option_scores) == sorted(_fake_items(1)[0].option_scores)
    rep = audit_balance(out)
    assert rep["categories"]["sun_exposure"]["chi_square"] == 0.0
    again = balanced_shuffle(_fake_items(400), np.random.default_rng(0))
    assert [i.options for i in again] == [i.options for i in out]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(0, 1000))
def test_balanced_shuffle_deviation_at_most_one(n, seed):
    out = balanced_shuffle(_fake_items(n), np.random.default_rng(seed))
    counts = np.bincount([it.correct_index() for it in out], minlength=4)
    assert counts.max() - counts.min() <= 1


def test_single_item_any_position():
    positions = {balanced_shuffle(_fake_items(1), np.random.default_rng(s))[0].correct_index() for s in range(40)}
    assert positions == {0, 1, 2, 3}


def test_audit_flags_all_a():
    items = _fake_items(100)  # every winner listed first
    rep = audit_balance(items)["categories"]["sun_exposure"]
    assert rep["counts"] == {"A": 100, "B": 0, "C": 0, "D": 0}
    assert rep["flagged"] and rep["p_value"] < 1e-10


# -- rendering


def test_prompt_templates(batch):
    by_cat = {}
    for it in batch.items:
        by_cat.setdefault(it.category, it)
    assert '"Region A, Region B, Region C"' in by_cat["region_ranking"].prompt.splitlines()
    assert "Answer format: X.X (a single number in [0.0, 1.0], rounded to 1 decimal)" in by_cat["SVF_value"].prompt
    assert 'Answer format: "X m" with 10-meter increments' in by_cat["height_average"].prompt
    assert "Comma-separated labels in lowercase." in by_cat["top_land_uses"].prompt
    vis = by_cat["visibility_range"].prompt
    assert "Scoring method: Locations were scored solely based on viewshed distance analysis (60" in vis
    assert "(0, 0) represents the top-left corner" in vis
    assert "Which location has the highest sky visibility?" in by_cat["sky_visibility"].prompt
    assert "Scoring method" not in by_cat["sun_exposure"].prompt
    for opt in by_cat["sun_exposure"].options:
        assert GRAMMAR["point_choice"].match(opt)
        assert opt in by_cat["sun_exposure"].prompt
    region_lines = [ln for ln in by_cat["highest_region"].prompt.splitlines() if re.match(r"^[A-D]: \[", ln)]
    assert len(region_lines) == 4 and all(re.fullmatch(r"[A-D]: \[\d+%, \d+%, \d+%, \d+%\]", ln) for ln in region_lines)


# -- persistence


def test_jsonl_roundtrip_and_bytes(tmp_path, batch):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    emit_jsonl(batch.items, p1)
    emit_jsonl(load_jsonl(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert load_jsonl(p1) == batch.items
    first = p1.read_text().splitlines()[0]
    keys = re.findall(r'"(\w+)": ', first)
    top = [k for k in keys if k in ("item_id", "scene_id", "category", "tier", "prompt", "options",
                                    "ground_truth", "selectors", "gen_seed", "metadata")]
    assert top == ["item_id", "scene_id", "category", "tier", "prompt", "options",
                   "ground_truth", "selectors", "gen_seed", "metadata"]


def test_empty_batch(tmp_path):
    emit_jsonl([], tmp_path / "e.jsonl")
    assert (tmp_path / "e.jsonl").read_bytes() == b""
    assert load_jsonl(tmp_path / "e.jsonl") == []
