"""Tolerant answer parsing and category-specific scoring.

Responses are normalised, then scanned from the last line upward for the
first line that matches the category's answer grammar.  A response with no
recoverable answer is a ``format_error`` verdict; parsing never raises.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .qa import CATEGORIES, CATEGORY_LIST, QAItem
from .raster import VOCABULARY

SVF_TOLERANCE = 0.05
HEIGHT_ABS_TOLERANCE = 10.0
HEIGHT_ABS_LIMIT = 30.0
HEIGHT_REL_TOLERANCE = 0.3
JACCARD_THRESHOLD = 0.8

GROUND_SURFACE = "ground_surface"
EXCLUDED_LABEL = "commercial"
MERGED_LABELS = {"roads": GROUND_SURFACE, "bare_soil": GROUND_SURFACE}
EXTENDED_VOCABULARY = VOCABULARY + (GROUND_SURFACE, EXCLUDED_LABEL)
# spelling variants accepted in responses
LABEL_SYNONYMS = {
    "road": "roads",
    "railway": "railways",
    "building": "buildings",
    "bare soil": "bare_soil",
    "bare-soil": "bare_soil",
    "ground surface": GROUND_SURFACE,
}

VERDICTS = ("correct", "incorrect", "format_error", "excluded")

ROLLUPS = {
    "svf": ("SVF_value", "region_ranking", "regional_svf_variability", "sun_exposure"),
    "height": ("height_average", "highest_region"),
    "lulc": ("top_land_uses", "landcover_type"),
    "multi": ("spatial_openness", "sky_visibility", "building_density", "visibility_range"),
}


@dataclass(frozen=True)
class ParsedAnswer:
    category: str
    kind: str  # number | label_set | ordered_labels | option_ref | point_ref
    payload: object
    raw: str


@dataclass(frozen=True)
class FormatError:
    category: str
    raw: str


@dataclass(frozen=True)
class ScoreRecord:
    item_id: str
    category: str
    verdict: str
    detail: float | None = None
    parsed: str | None = None


# --------------------------------------------------------------------------
# normalisation and grammars

_EDGE_PUNCT = " \t\"'`*_.;:!?"
_THINK = re.compile(r"<think>.*?</think>", re.S | re.I)
_PREFIX = re.compile(r"^(?:final answer|answer|prediction|output)\s*[:\-=]\s*")
_NUMBER = re.compile(r"(?<![\w.])-?(?:\d+(?:\.\d+)?|\.\d+)(?![\d.])(?!\s*%)")
_REGION = re.compile(r"\bregion\s*\(?([a-z])\)?(?![a-z])")
_POINT = re.compile(r"(?:point\s*)?\(\s*(-?\d+(?:\.\d+)?)\s*%?\s*,\s*(-?\d+(?:\.\d+)?)\s*%?\s*\)")
_BARE_LETTERS = re.compile(r"^[a-d](?:\s*(?:,|>|-+>?|then)\s*[a-d])*$")
_LABELS = re.compile(
    r"(?<![a-z_])("
    + "|".join(sorted((re.escape(w) for w in (*EXTENDED_VOCABULARY, *LABEL_SYNONYMS)), key=len, reverse=True))
    + r")(?![a-z_])"
)


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace, tidy commas, strip edge punctuation."""
    t = " ".join(str(text).lower().split())
    t = re.sub(r"\s*,\s*", ", ", t)
    return t.strip(_EDGE_PUNCT + ",")


def _candidate_lines(text: str) -> list[str]:
    body = _THINK.sub(" ", str(text))
    lines = [normalize(ln) for ln in body.splitlines()]
    out = []
    for ln in reversed(lines):
        ln = normalize(_PREFIX.sub("", ln))
        if ln:
            out.append(ln)
    return out


def _parse_number(line: str):
    m = _NUMBER.search(line)
    return float(m.group(0)) if m else None


def _parse_option(line: str):
    m = _REGION.search(line)
    if m:
        return m.group(1)
    if len(line) == 1 and line in "abcd":
        return line
    return None


def _parse_point(line: str):
    m = _POINT.search(line)
    return (float(m.group(1)), float(m.group(2))) if m else None


def _parse_labels(line: str):
    found = [LABEL_SYNONYMS.get(w, w) for w in _LABELS.findall(line)]
    return frozenset(found) if found else None


def _parse_order(line: str):
    letters = _REGION.findall(line)
    if not letters and _BARE_LETTERS.match(line):
        letters = re.findall(r"[a-d]", line)
    if len(letters) >= 2 and len(set(letters)) == len(letters):
        return tuple(letters)
    return None


_GRAMMARS = {
    "numeric_svf": ("number", _parse_number),
    "numeric_height": ("number", _parse_number),
    "region_choice": ("option_ref", _parse_option),
    "point_choice": ("point_ref", _parse_point),
    "multilabel": ("label_set", _parse_labels),
    "ranking": ("ordered_labels", _parse_order),
}


def parse_answer(category: str, text: str) -> ParsedAnswer | FormatError:
    """First grammar match scanning from the last line upward."""
    kind, parser = _GRAMMARS[CATEGORIES[category].answer_format]
    for line in _candidate_lines(text or ""):
        value = parser(line)
        if value is not None:
            return ParsedAnswer(category, kind, value, text)
    return FormatError(category, text)


# --------------------------------------------------------------------------
# rules


def canonicalize_landcover(labels: Iterable[str]) -> frozenset | None:
    """Merge roads and bare soil into ground_surface; None marks an excluded
    (commercial) sample."""
    labels = frozenset(labels)
    if EXCLUDED_LABEL in labels:
        return None
    return frozenset(MERGED_LABELS.get(lbl, lbl) for lbl in labels)


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def score_height(pred: float, gt: float) -> bool:
    if gt == 0:
        return pred == 0
    if gt <= HEIGHT_ABS_LIMIT:
        return abs(pred - gt) <= HEIGHT_ABS_TOLERANCE
    return abs(pred - gt) <= HEIGHT_REL_TOLERANCE * gt + 1e-9


def score_svf_value(pred: float, gt: float) -> bool:
    if not 0.0 <= pred <= 1.0:
        return False
    # the slack absorbs decimal representation error, e.g. |0.55 - 0.5|
    return abs(pred - gt) <= SVF_TOLERANCE + 1e-9


def _gt_labels(item: QAItem) -> frozenset:
    return frozenset(s.strip() for s in normalize(item.ground_truth).split(",") if s.strip())


def _record(item, verdict, detail=None, parsed=None) -> ScoreRecord:
    return ScoreRecord(item.item_id, item.category, verdict, detail, parsed)


def score_item(item: QAItem, response: str) -> ScoreRecord:
    fmt = item.answer_format
    parsed = parse_answer(item.category, response)
    if isinstance(parsed, FormatError):
        # a commercial ground truth drops the sample whatever the response
        if item.category == "landcover_type" and canonicalize_landcover(_gt_labels(item)) is None:
            return _record(item, "excluded")
        return _record(item, "format_error")
    p = parsed.payload

    if fmt == "numeric_svf":
        gt = float(item.ground_truth)
        return _record(item, "correct" if score_svf_value(p, gt) else "incorrect", abs(p - gt), repr(p))
    if fmt == "numeric_height":
        gt = float(normalize(item.ground_truth).split()[0])
        return _record(item, "correct" if score_height(p, gt) else "incorrect", abs(p - gt), repr(p))
    if fmt == "multilabel":
        gt = _gt_labels(item)
        shown = ", ".join(sorted(p))
        if item.category == "landcover_type":
            pc, gc = canonicalize_landcover(p), canonicalize_landcover(gt)
            if pc is None or gc is None:
                return _record(item, "excluded", None, shown)
            j = jaccard(pc, gc)
            return _record(item, "correct" if j >= JACCARD_THRESHOLD else "incorrect", j, shown)
        return _record(item, "correct" if p == gt else "incorrect", jaccard(p, gt), shown)
    if fmt == "ranking":
        gt = tuple(_REGION.findall(normalize(item.ground_truth)))
        return _record(item, "correct" if p == gt else "incorrect", None, ", ".join(p))
    if fmt == "region_choice":
        ok = f"region {p}" == normalize(item.ground_truth)
        return _record(item, "correct" if ok else "incorrect", None, f"region {p}")
    # point choice: the parsed point must name the correct listed option
    gt = _parse_point(normalize(item.ground_truth))
    ok = gt is not None and math.isclose(p[0], gt[0], abs_tol=0.05) and math.isclose(p[1], gt[1], abs_tol=0.05)
    return _record(item, "correct" if ok else "incorrect", None, f"point ({p[0]}%, {p[1]}%)")


# --------------------------------------------------------------------------
# aggregation


@dataclass
class CategoryReport:
    per_category: dict = field(default_factory=dict)
    rollups: dict = field(default_factory=dict)
    overall: float = 0.0
    format_error_rate: float = 0.0
    n_items: int = 0
    n_excluded: int = 0
    unmatched_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def aggregate(records: Sequence[ScoreRecord], items: Sequence[QAItem]) -> CategoryReport:
    """Accuracy per category, per rollup (pooled over its categories) and
    overall.  Excluded items leave both numerator and denominator; format
    errors count as incorrect and are also reported separately."""
    known = {it.item_id for it in items}
    stray = sorted(r.item_id for r in records if r.item_id not in known)
    if stray:
        raise ValueError(f"records for unknown item ids: {stray[:5]}")
    counts = {c.id: dict.fromkeys(VERDICTS, 0) for c in CATEGORY_LIST}
    for r in records:
        counts[r.category][r.verdict] += 1

    def summary(cats):
        tot = {v: sum(counts[c][v] for c in cats) for v in VERDICTS}
        n = tot["correct"] + tot["incorrect"] + tot["format_error"]
        return n, tot

    per_cat = {}
    for c in CATEGORY_LIST:
        n, tot = summary([c.id])
        if n == 0 and tot["excluded"] == 0:
            continue
        per_cat[c.id] = {
            "n": n,
            "correct": tot["correct"],
            "accuracy": _pct(tot["correct"], n),
            "format_errors": tot["format_error"],
            "format_error_rate": _pct(tot["format_error"], n),
            "excluded": tot["excluded"],
        }
    rollups = {}
    for name, cats in ROLLUPS.items():
        n, tot = summary(cats)
        rollups[name] = {"n": n, "accuracy": _pct(tot["correct"], n)}
    n, tot = summary(list(CATEGORIES))
    return CategoryReport(
        per_category=per_cat,
        rollups=rollups,
        overall=_pct(tot["correct"], n),
        format_error_rate=_pct(tot["format_error"], n),
        n_items=n,
        n_excluded=tot["excluded"],
        unmatched_ids=[],
    )


def render_report(report: CategoryReport) -> str:
    rows = [f"{'category':<26}{'n':>6}{'acc %':>9}{'fmt err %':>11}"]
    for cat, s in report.per_category.items():
        rows.append(f"{cat:<26}{s['n']:>6}{s['accuracy']:>9.1f}{s['format_error_rate']:>11.1f}")
    rows.append("-" * 52)
    for name, s in report.rollups.items():
        rows.append(f"{name.upper():<26}{s['n']:>6}{s['accuracy']:>9.1f}")
    rows.append(f"{'OVERALL':<26}{report.n_items:>6}{report.overall:>9.1f}{report.format_error_rate:>11.1f}")
    if report.n_excluded:
        rows.append(f"excluded (commercial): {report.n_excluded}")
    if report.unmatched_ids:
        rows.append(f"unmatched response ids: {len(report.unmatched_ids)}")
    return "\n".join(rows)
