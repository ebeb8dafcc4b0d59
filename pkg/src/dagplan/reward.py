"""Fail-fast hierarchical plan reward and group-relative advantages.

A candidate plan is judged in strict precedence order and evaluation stops at
the first failing level:

1. syntax   — the text cannot be parsed as a plan graph     -> -10.0
2. cycle    — the parsed graph contains a directed cycle    -> -10.0
3. connectivity — the graph is not weakly connected         ->  -2.0
4. fidelity — 5 x edge-level F1 against the gold plan, plus a +5.0 bonus
   when the candidate's node set AND edge set both equal the gold's.

The resulting scalar always lies in [-10.0, +10.0], and +10.0 is attainable
only by an exact match.  ``group_advantages`` provides the per-group z-score
normalization that turns a batch of these rewards into advantages for
group-relative policy optimization; the policy update itself is out of scope.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .metrics import set_prf
from .plan import (
    PlanGraph,
    PlanSyntaxError,
    check_connectivity,
    detect_cycle,
    parse_plan,
)

SYNTAX_PENALTY = -10.0
CYCLE_PENALTY = -10.0
CONNECTIVITY_PENALTY = -2.0
EDGE_F1_SCALE = 5.0
PERFECT_MATCH_BONUS = 5.0
REWARD_MIN = -10.0
REWARD_MAX = 10.0


class RewardBranch(str, enum.Enum):
    """Which level of the hierarchy produced the reward."""

    SYNTAX = "syntax"
    CYCLE = "cycle"
    CONNECTIVITY = "connectivity"
    FIDELITY = "fidelity"


class InvalidGoldError(ValueError):
    """The gold plan is unusable (cyclic) — a configuration error, not a score."""


@dataclass(frozen=True)
class RewardBreakdown:
    """The fired branch, the scalar, and (for fidelity) its components.

    ``detail`` carries the human-readable witness: the parser's reason, the
    cycle path, or the isolated-node list.
    """

    branch: RewardBranch
    value: float
    edge_f1: float | None = None
    perfect_match: bool | None = None
    detail: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "branch": self.branch.value,
            "value": self.value,
            "edge_f1": self.edge_f1,
            "perfect_match": self.perfect_match,
            "detail": self.detail,
        }


def edge_f1(predicted: Iterable, gold: Iterable) -> float:
    """Set-based F1 over dependency pairs; both empty -> 1.0, one empty -> 0.0.

    The empty-vs-empty convention is what lets a correct single-tool plan earn
    the full +10.0 instead of being capped at the bonus alone.
    """
    return set_prf(predicted, gold)[2]


def score_plan(
    candidate_text: str, gold: PlanGraph, *, self_loops: str = "reject"
) -> RewardBreakdown:
    """Score raw candidate text against a gold plan, fail-fast.

    Checks run in strict precedence — syntax, then cycle, then connectivity —
    and the first failing level's penalty is returned.  Candidates passing all
    three score ``5*edge_f1 + 5*perfect_match`` where edges compare as
    (source tool, target tool) pairs and perfect match means node-set and
    edge-set equality with the gold.

    Raises InvalidGoldError when the gold plan itself is cyclic; gold
    connectivity is a dataset-build-time obligation and is not checked here.
    """
    gold_cycle = detect_cycle(gold)
    if gold_cycle is not None:
        raise InvalidGoldError(
            "gold plan is cyclic: " + " -> ".join(gold_cycle)
        )
    try:
        candidate = parse_plan(candidate_text, self_loops=self_loops)
    except PlanSyntaxError as exc:
        return RewardBreakdown(RewardBranch.SYNTAX, SYNTAX_PENALTY, detail=exc.reason)
    cycle = detect_cycle(candidate)
    if cycle is not None:
        return RewardBreakdown(
            RewardBranch.CYCLE, CYCLE_PENALTY, detail=" -> ".join(cycle)
        )
    connected, isolated = check_connectivity(candidate)
    if not connected:
        detail = "isolated nodes: " + ", ".join(isolated) if isolated else "multiple components"
        return RewardBreakdown(RewardBranch.CONNECTIVITY, CONNECTIVITY_PENALTY, detail=detail)
    f1 = edge_f1(candidate.edge_tool_pairs, gold.edge_tool_pairs)
    perfect = (
        candidate.tool_set == gold.tool_set
        and candidate.edge_tool_pairs == gold.edge_tool_pairs
    )
    value = EDGE_F1_SCALE * f1 + (PERFECT_MATCH_BONUS if perfect else 0.0)
    return RewardBreakdown(
        RewardBranch.FIDELITY, value, edge_f1=f1, perfect_match=perfect
    )


@dataclass(frozen=True)
class GroupAdvantages:
    """Rewards of one rollout group and their normalized advantages."""

    rewards: tuple[float, ...]
    advantages: tuple[float, ...]


def group_advantages(rewards: Sequence[float], epsilon: float = 1e-8) -> GroupAdvantages:
    """Per-group z-score: ``(r - mean) / (std + epsilon)``, order-preserving.

    ``std`` is the population standard deviation.  A constant group maps to
    all-zero advantages regardless of epsilon.
    """
    arr = np.asarray(list(rewards), dtype=float)
    if arr.size == 0:
        raise ValueError("rewards must be non-empty")
    std = float(arr.std())
    if std == 0.0:
        adv = np.zeros_like(arr)
    else:
        adv = (arr - arr.mean()) / (std + epsilon)
    return GroupAdvantages(
        rewards=tuple(float(r) for r in arr),
        advantages=tuple(float(a) for a in adv),
    )
