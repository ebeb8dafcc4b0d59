"""Prompt templates for the model-backed stages.

Templates are versioned: fixture cassettes key on the exact rendered prompt,
so any wording change here invalidates recorded fixtures and must bump
PROMPT_VERSION.
"""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping

from .catalog import ToolSpec

PROMPT_VERSION = "v1"

PLAN_FORMAT_HINT = (
    "Respond with a single JSON object, and nothing else, of the form "
    '{"nodes":[{"id":"n1","tool":"<tool id>","args":{}}],'
    '"edges":[{"from":"n1","to":"n2"}]}. '
    "Node ids are plan-local labels. Use each tool at most once. "
    "The graph must be acyclic and weakly connected."
)


def _tool_lines(tools: Iterable[ToolSpec | str]) -> str:
    lines = []
    for tool in tools:
        if isinstance(tool, ToolSpec):
            lines.append(f"- {tool.id}: {tool.description}")
        else:
            lines.append(f"- {tool}")
    return "\n".join(lines)


def workflow_prompt(tools: Iterable[ToolSpec | str], required_count: int, difficulty: str) -> str:
    return (
        f"[workflow/{PROMPT_VERSION}] You design tool workflows.\n"
        f"Difficulty: {difficulty}. Available tools:\n{_tool_lines(tools)}\n\n"
        f"Compose a workflow that uses exactly {required_count} of these tools, "
        "wired as a dependency graph with meaningful data flow. "
        + PLAN_FORMAT_HINT
    )


def query_prompt(tools: Iterable[ToolSpec | str], plan_text: str) -> str:
    return (
        f"[query/{PROMPT_VERSION}] Below is a tool workflow and the tools it uses.\n"
        f"Tools:\n{_tool_lines(tools)}\n\nWorkflow:\n{plan_text}\n\n"
        "Write the natural-language request a user would have asked to need exactly "
        "this workflow. Reply with the request text only."
    )


def replan_prompt(query: str, tools: Iterable[ToolSpec | str]) -> str:
    return (
        f"[replan/{PROMPT_VERSION}] You plan tool workflows.\n"
        f"Available tools:\n{_tool_lines(tools)}\n\n"
        f"User request: {query}\n\n"
        "Produce the dependency graph of tool calls that satisfies the request. "
        + PLAN_FORMAT_HINT
    )


def synthesis_prompt(query: str, outputs: Mapping[str, Any]) -> str:
    rendered = json.dumps(outputs, sort_keys=True, ensure_ascii=False)
    return (
        f"[synthesis/{PROMPT_VERSION}] User request: {query}\n"
        f"Tool outputs (by plan node): {rendered}\n\n"
        "Compose the final answer to the request from these outputs."
    )
