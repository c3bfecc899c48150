"""
From scenes to a scored benchmark
=================================

Generate questions over a few synthetic towns, answer them with two toy
"models" and score both.
"""

import numpy as np

from terrainqa.metrics import SceneAnalysis, scene_statistics
from terrainqa.qa import LETTERS, GenConfig, audit_balance, generate
from terrainqa.scorer import aggregate, render_report, score_item
from terrainqa.synthetic import city_scene

# Scenes bundle a DSM, a land-cover map and a brightness raster.
scenes = [city_scene(seed, size=96) for seed in range(4)]
print("land cover of the first town:", scene_statistics(scenes[0]).land_cover_statistics)

# Analyses cache the SVF raster and the derived layers the metrics need.
analyses = [SceneAnalysis(b) for b in scenes]
batch = generate(analyses, GenConfig(seed=7, per_category_count=3))
print(len(batch.items), "items;", "skipped:", dict(batch.skipped))

item = next(it for it in batch.items if it.category == "sky_visibility")
print()
print(item.prompt)
print("ground truth:", item.ground_truth)

# Correct answers are spread evenly over the letters.
for cat, rep in audit_balance(batch.items)["categories"].items():
    print(f"{cat:<26} {rep['counts']}")

# An oracle model echoes the ground truth; a guesser picks options at random
# and writes a number or label list where no options exist.
rng = np.random.default_rng(0)


def guess(it):
    if it.options:
        k = int(rng.integers(len(it.options)))
        return f"Region {LETTERS[k]}" if it.answer_format == "region_choice" else it.options[k]
    if it.answer_format == "numeric_svf":
        return f"Final answer: {rng.uniform(0, 1):.1f}"
    if it.answer_format == "numeric_height":
        return f"{10 * rng.integers(0, 5)} m"
    if it.answer_format == "ranking":
        return ", ".join(f"Region {c}" for c in rng.permutation(list("ABC")))
    return "grassland, buildings"


for name, answer in [("oracle", lambda it: it.ground_truth), ("guesser", guess)]:
    records = [score_item(it, answer(it)) for it in batch.items]
    print(f"\n== {name}")
    print(render_report(aggregate(records, batch.items)))
