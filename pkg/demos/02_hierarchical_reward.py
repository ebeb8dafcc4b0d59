"""
The fail-fast hierarchical reward
=================================

Candidates are judged in strict order — syntax, cycle, connectivity, then
fidelity — and evaluation stops at the first failing level.  The scalar lives
in [-10, +10]; only an exact match (node set and edge set both equal to the
gold's) earns the +5 bonus on top of 5 x edge F1.
"""

import json

from dagplan import group_advantages, parse_plan, score_plan, serialize_plan

gold = parse_plan(
    '{"nodes": [{"id": "g1", "tool": "geo.lookup"},'
    '           {"id": "g2", "tool": "weather.get"},'
    '           {"id": "g3", "tool": "mail.send"}],'
    ' "edges": [{"from": "g1", "to": "g2"}, {"from": "g2", "to": "g3"}]}'
)

# Same tools, same wiring, different node labels: still an exact match,
# because plans compare by the tools they wire, not by planner-local ids.
relabeled = json.loads(serialize_plan(gold))
for node in relabeled["nodes"]:
    node["id"] = node["id"].replace("g", "x")
for edge in relabeled["edges"]:
    edge["from"] = edge["from"].replace("g", "x")
    edge["to"] = edge["to"].replace("g", "x")

candidates = {
    "malformed": "I'd use the weather tool first, probably",
    "cyclic": '{"nodes": [{"id": "a", "tool": "geo.lookup"}, {"id": "b", "tool": "weather.get"}],'
              ' "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}]}',
    "isolated node": '{"nodes": [{"id": "a", "tool": "geo.lookup"}, {"id": "b", "tool": "weather.get"},'
                     ' {"id": "c", "tool": "mail.send"}], "edges": [{"from": "a", "to": "b"}]}',
    "half right": '{"nodes": [{"id": "a", "tool": "geo.lookup"}, {"id": "b", "tool": "weather.get"}],'
                  ' "edges": [{"from": "a", "to": "b"}]}',
    "exact (relabeled)": json.dumps(relabeled),
}

print(f"{'candidate':<20}{'branch':<14}{'value':>7}  detail")
for label, text in candidates.items():
    b = score_plan(text, gold)
    extra = b.detail or (f"edge_f1={b.edge_f1:.3f} perfect={b.perfect_match}")
    print(f"{label:<20}{b.branch.value:<14}{b.value:>7.3f}  {extra}")

# A rollout group's rewards become group-relative advantages: per-group
# z-scores.  Constant groups carry no signal and map to zeros.
rewards = [score_plan(text, gold).value for text in candidates.values()]
result = group_advantages(rewards)
print("\nrewards:   ", [f"{r:+.2f}" for r in result.rewards])
print("advantages:", [f"{a:+.2f}" for a in result.advantages])
print("flat group:", group_advantages([10.0, 10.0, 10.0]).advantages)
