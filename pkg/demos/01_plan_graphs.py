"""
Plan graphs: parsing, structural checks, canonical form
=======================================================

A plan is a JSON document with "nodes" (tool invocations) and "edges"
(dependencies).  Planner output is untrusted text: it may be garbage, it may
contain cycles, it may leave nodes dangling.  This script walks the parsing
and checking surface.
"""

from dagplan import (
    PlanSyntaxError,
    check_connectivity,
    detect_cycle,
    parse_plan,
    serialize_plan,
    to_dot,
    topo_order,
    validate_text,
)

# A well-formed three-tool plan: fetch feeds two downstream steps.
text = """
{"nodes": [{"id": "fetch", "tool": "web.fetch", "args": {"url": "https://example.com"}},
           {"id": "summarize", "tool": "nlp.summarize", "args": {"doc": "$fetch.digest"}},
           {"id": "translate", "tool": "nlp.translate", "args": {"doc": "$fetch.digest"}}],
 "edges": [{"from": "fetch", "to": "summarize"},
           {"from": "fetch", "to": "translate"}]}
"""
plan = parse_plan(text)
print("parsed nodes:", [n.id for n in plan.nodes])
print("topological order:", topo_order(plan))
print("acyclic:", detect_cycle(plan) is None)
print("connected:", check_connectivity(plan))

# Canonical serialization sorts nodes and edges, so set-equal plans are
# byte-identical regardless of how the planner ordered them.
print("\ncanonical form:")
print(serialize_plan(plan))

# Malformed text never raises past the boundary you choose: parse_plan raises
# PlanSyntaxError with a reason, validate_text folds it into a report.
for bad in ["the plan is to wing it", '{"nodes": [{"id": "a"}]}']:
    try:
        parse_plan(bad)
    except PlanSyntaxError as exc:
        print("\nrejected:", repr(bad[:30]), "->", exc.reason)

# Cycles are representable on purpose — the reward needs to see them.
cyclic = parse_plan(
    '{"nodes": [{"id": "a", "tool": "t1"}, {"id": "b", "tool": "t2"}],'
    ' "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}]}'
)
print("\ncycle witness:", detect_cycle(cyclic))

report = validate_text(serialize_plan(cyclic))
print("report:", report.to_dict())

# DOT export for eyeballing.
print("\n" + to_dot(plan))
