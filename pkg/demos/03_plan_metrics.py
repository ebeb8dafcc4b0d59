"""
Planning-quality metrics
========================

Node-level and edge-level precision/recall/F1 plus the strict DAG exact
match, macro-averaged over an evaluation set.  Nodes compare as tool-id sets
(node labels are planner-local); edges compare as (source tool, target tool)
pairs.  Unparseable candidates score zero everywhere and are tallied as
failures instead of aborting the run.
"""

from dagplan import evaluate_set, parse_plan, score_pair, serialize_plan

gold = parse_plan(
    '{"nodes": [{"id": "a", "tool": "search.web"},'
    '           {"id": "b", "tool": "rank.results"},'
    '           {"id": "c", "tool": "mail.send"}],'
    ' "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "c"}]}'
)

# One pair in detail: right tools, one wrong wire.
candidate = parse_plan(
    '{"nodes": [{"id": "x", "tool": "search.web"},'
    '           {"id": "y", "tool": "rank.results"},'
    '           {"id": "z", "tool": "mail.send"}],'
    ' "edges": [{"from": "x", "to": "y"}, {"from": "x", "to": "z"}]}'
)
m = score_pair(candidate, gold)
print("single pair:", m.to_dict())

# A small evaluation set: perfect, partial, and broken predictions.
pairs = [
    (serialize_plan(gold), gold),
    (serialize_plan(candidate), gold),
    ("[planner crashed here]", gold),
    ('{"nodes": [{"id": "only", "tool": "search.web"}], "edges": []}', gold),
]
summary = evaluate_set(pairs)
print(f"\ncount={summary.count} failures={summary.failures}")
header = ["node_p", "node_r", "node_f1", "edge_p", "edge_r", "edge_f1", "exact_match"]
print("  ".join(f"{h:>8}" for h in header))
print("  ".join(f"{getattr(summary, h):>8.3f}" for h in header))
