"""
End to end: query -> plan -> validate -> execute -> answer
==========================================================

The planner gets exactly one shot at a global plan; its output is validated
through the same hierarchy the reward uses (syntax, cycle, connectivity) and
rejected plans never reach the tools.  Inference steps count model calls
only: one planner call plus one optional synthesizer call — two total, no
matter how many tools the plan wires.
"""

import json

from dagplan import (
    MockRegistry,
    PlanRejectedError,
    ScriptedClient,
    parse_plan,
    run_end_to_end,
    serialize_plan,
    synth_library,
)

library = synth_library(20, seed=8)
tools = library.ids()[:5]

plan = parse_plan(json.dumps({
    "nodes": [
        {"id": "root", "tool": tools[0], "args": {}},
        {"id": "left", "tool": tools[1], "args": {"src": "$root.digest"}},
        {"id": "right", "tool": tools[2], "args": {"src": "$root.digest"}},
        {"id": "extra", "tool": tools[3], "args": {}},
        {"id": "join", "tool": tools[4],
         "args": {"a": "$left.digest", "b": "$right.digest", "c": "$extra.digest"}},
    ],
    "edges": [
        {"from": "root", "to": "left"}, {"from": "root", "to": "right"},
        {"from": "root", "to": "extra"},
        {"from": "left", "to": "join"}, {"from": "right", "to": "join"},
        {"from": "extra", "to": "join"},
    ],
}))

# A scripted planner stands in for the trained model; in production this is
# an HttpCompletionClient (or a FixtureClient replaying a recorded cassette).
planner = ScriptedClient([serialize_plan(plan)])
synthesizer = ScriptedClient(["All five tools ran; here is the combined result."])

answer, trace = run_end_to_end(
    "compile the weekly digest", library.subset(tools), planner,
    MockRegistry(latency=0.01), synthesizer,
)
print("answer:", answer)
print(f"inference_steps={trace.inference_steps} (5 tools, 3 waves={trace.waves})")
print("statuses:", trace.statuses())

# Without a synthesizer, the answer is the serialized sink outputs and only
# the planner call counts.
answer, trace = run_end_to_end(
    "compile the weekly digest", library.subset(tools),
    ScriptedClient([serialize_plan(plan)]), MockRegistry(),
)
print(f"\nwithout synthesizer: inference_steps={trace.inference_steps}")
print("leaf payload keys:", sorted(json.loads(answer)))

# A bad plan never reaches the tools: the rejection carries the reward branch.
for label, bad in [
    ("rambling", "first I would fetch, then maybe rank"),
    ("cyclic", '{"nodes": [{"id": "a", "tool": "x.t1"}, {"id": "b", "tool": "x.t2"}],'
               ' "edges": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}]}'),
]:
    try:
        run_end_to_end("q", library.subset(tools), ScriptedClient([bad]), MockRegistry())
    except PlanRejectedError as exc:
        print(f"\n{label} plan rejected: branch={exc.branch.value}, reason={exc.reason}")
