"""One-at-a-time weight perturbation for the sky-visibility ranking.

For a sample of generated sky_visibility items, every coefficient is shifted
by ``+delta`` and ``-delta`` in turn (clamped at zero) and the winning
option is recomputed.  The change rate is the share of items whose winner
moves.  A zero shift is reported as the control.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .metrics import MetricWeights, SceneAnalysis, SkyVisibilityWeights
from .qa import GenConfig, QAItem, generate

COEFFICIENTS = ("svf", "building_penalty", "edge_penalty", "window_norm")
CATEGORY = "sky_visibility"


@dataclass(frozen=True)
class SensitivityRun:
    coefficient: str
    delta: float
    value: float
    changed: int
    n: int

    @property
    def change_rate(self) -> float:
        return 100.0 * self.changed / self.n if self.n else 0.0

    def to_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "delta": self.delta,
            "value": self.value,
            "changed": self.changed,
            "n": self.n,
            "change_rate": self.change_rate,
        }


def _winner(analysis: SceneAnalysis, item: QAItem, weights: SkyVisibilityWeights) -> int:
    scores = [analysis.sky_visibility(p, weights) for p in item.points]
    return int(np.argmax(scores))


def perturb(weights: SkyVisibilityWeights, coefficient: str, delta: float) -> SkyVisibilityWeights:
    return replace(weights, **{coefficient: max(0.0, getattr(weights, coefficient) + delta)})


def sample_items(analyses: Sequence[SceneAnalysis], n_questions: int, seed: int,
                 weights: MetricWeights = MetricWeights(), config: GenConfig | None = None) -> list[QAItem]:
    """Generate sky_visibility items over the scenes and draw ``n_questions``
    of them without replacement (fewer when fewer are feasible)."""
    per_scene = max(1, -(-n_questions // max(1, len(analyses))))
    base = config or GenConfig()
    cfg = replace(base, seed=seed, per_category_count=per_scene, categories=(CATEGORY,))
    items = generate(analyses, cfg, weights).items
    rng = np.random.default_rng([seed, 7])
    if len(items) > n_questions:
        keep = np.sort(rng.choice(len(items), size=n_questions, replace=False))
        items = [items[i] for i in keep]
    return items


def run_sensitivity(analyses: Sequence[SceneAnalysis], items: Sequence[QAItem],
                    weights: MetricWeights = MetricWeights(), delta: float = 0.1) -> list[SensitivityRun]:
    """Control run followed by a +/-delta run for every coefficient."""
    by_scene = {a.bundle.scene_id: a for a in analyses}
    base = weights.sky_visibility
    ref = [_winner(by_scene[it.scene_id], it, base) for it in items]
    runs = []
    plan = [("control", 0.0)] + [(c, s * delta) for c in COEFFICIENTS for s in (1.0, -1.0)]
    for coef, d in plan:
        w = base if coef == "control" else perturb(base, coef, d)
        changed = sum(_winner(by_scene[it.scene_id], it, w) != r for it, r in zip(items, ref))
        value = 0.0 if coef == "control" else getattr(w, coef)
        runs.append(SensitivityRun(coef, d, value, changed, len(items)))
    return runs
