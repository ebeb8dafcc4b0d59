"""
The three-stage dataset pipeline, offline
=========================================

Stage 1 authors a workflow DAG over a sampled candidate toolset, stage 2
reverse-engineers the user query, stage 3 re-plans from the query and keeps
the instance only if the replan agrees.  Offline mode (no model endpoint)
uses a seeded layered DAG generator and a templated query, so the whole
pipeline is reproducible on a laptop — harder difficulties offer more tools
and require more of them.
"""

import json

from dagplan import (
    DifficultyConfig,
    build_dataset,
    generate_workflow,
    score_plan,
    serialize_plan,
    synth_library,
)

library = synth_library(80, seed=42)
print(f"library: {len(library)} synthetic tools, e.g. {library.ids()[:3]}")

config = DifficultyConfig()
for difficulty in ("Easy", "Medium", "Hard"):
    band = config.band(difficulty)
    candidates, plan = generate_workflow(library, difficulty, seed=7)
    print(
        f"{difficulty:<7} band candidates={band.candidates} required={band.required}"
        f" -> offered {len(candidates)}, plan uses {len(plan)} tools,"
        f" {len(plan.edges)} edges"
    )

# Build a small dataset and verify the pipeline's own promise: every emitted
# gold plan self-scores the maximum reward.
records, stats = build_dataset(library, {"Easy": 4, "Medium": 3, "Hard": 2}, seed=11)
print("\nbuild stats:", json.dumps(stats.to_dict(), sort_keys=True))
for record in records[:3]:
    self_score = score_plan(serialize_plan(record.gold_plan), record.gold_plan).value
    print(f"{record.record_id}: {len(record.gold_plan)} tools, self-score {self_score}")
print("...")

sample = records[0]
print("\nsample query:", sample.query[:100] + "...")
print("sample record JSON keys:", sorted(sample.to_dict().keys()))
