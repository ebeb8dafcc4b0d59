"""
Rollout-variance curation
=========================

Profile each task with n planner rollouts; a rollout counts as a solve only
at the exact-match reward of 10.0.  Tasks solved always or never carry no
learning signal and are dropped; the frontier — sometimes solved — is kept,
then split 8:2 into train/test.
"""

from dagplan import (
    FixtureClient,
    build_dataset,
    curate,
    fixture_key,
    serialize_plan,
    split_train_test,
    synth_library,
)
from dagplan.prompts import replan_prompt

library = synth_library(40, seed=5)
records, _ = build_dataset(library, {"Easy": 6}, seed=3)

# Script per-task solve patterns into a replay cassette: the planner answers
# each (prompt, rollout-seed) pair deterministically.
patterns = {
    records[0].record_id: [0, 0, 0, 0, 0],  # never solves: intractable
    records[1].record_id: [1, 0, 1, 0, 0],  # frontier
    records[2].record_id: [1, 1, 1, 1, 1],  # always solves: nothing to learn
    records[3].record_id: [0, 1, 0, 0, 0],  # frontier
    records[4].record_id: [1, 1, 1, 0, 1],  # frontier
    records[5].record_id: [1, 1, 1, 1, 1],
}
entries = {}
for record in records:
    prompt = replan_prompt(record.query, record.candidate_tools)
    for i, bit in enumerate(patterns[record.record_id]):
        entries[fixture_key(prompt, i)] = (
            serialize_plan(record.gold_plan) if bit else "planner had a bad day"
        )

kept, stats = curate(records, FixtureClient(entries), 5)
print("kept:", [r.record_id for r in kept])
print("stats:", stats.to_dict())

train, test = split_train_test(kept, seed=1)
print(f"split: {len(train)} train / {len(test)} test (floor rule)")

# At benchmark scale: 787 kept tasks split 630/157 under the floor rule.
big, _ = build_dataset(library, {"Easy": 787}, seed=99)
train, test = split_train_test(big, seed=1)
print(f"787 tasks -> {len(train)} train / {len(test)} test")
