"""Matching-policy decision logic.

A policy answers one question: given the current queue vector and an
arriving class, which neighboring class (if any) supplies the match.
Three kinds are supported:

  priority - each node carries a fixed total order over its neighbors and
             arrivals match the first neighbor with a positive queue;
  ml       - match the longest neighbor queue, ties broken uniformly;
  uniform  - match a uniformly random neighbor among those with items.

All policies are admissible: a match happens whenever some neighbor queue
is positive, and decisions depend only on the current queue vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    InvalidStateError,
    NotPriorityPolicyError,
    PolicyGraphMismatchError,
    ValidationError,
)
from .graphs import Graph

PRIORITY = "priority"
MATCH_LONGEST = "ml"
UNIFORM = "uniform"
_KINDS = (PRIORITY, MATCH_LONGEST, UNIFORM)


@dataclass(frozen=True)
class Policy:
    kind: str
    order: Optional[Mapping[int, tuple[int, ...]]] = field(default=None)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        if self.kind == PRIORITY and self.order is None:
            raise ValidationError("priority policy needs an order map")
        if self.kind != PRIORITY and self.order is not None:
            raise ValidationError(f"{self.kind} policy takes no order map")

    def to_json(self) -> str:
        from .serialize import policy_to_obj

        return json.dumps(policy_to_obj(self))

    @classmethod
    def from_json(cls, text: str) -> "Policy":
        from .serialize import policy_from_obj

        return policy_from_obj(json.loads(text))


def priority_policy(order: Mapping[int, Sequence[int]]) -> Policy:
    return Policy(PRIORITY, {int(k): tuple(int(x) for x in v) for k, v in order.items()})


def ml_policy() -> Policy:
    return Policy(MATCH_LONGEST)


def uniform_policy() -> Policy:
    return Policy(UNIFORM)


def pendant_priority_policy() -> Policy:
    """The destabilizing priority rule on the canonical pendant graph.

    The hub (node 3) serves the triangle nodes 1 and 2 before the tail
    node 4; the remaining orders are fixed ascending for determinism.
    """
    return priority_policy({1: (2, 3), 2: (1, 3), 3: (1, 2, 4), 4: (3,)})


def five_cycle_priority_policy() -> Policy:
    """The destabilizing priority rule on the canonical 5-cycle.

    Nodes 1 and 2 prefer each other, node 3 prefers 1 over 5, node 4
    prefers 2 over 5, and node 5 prefers 4 over 3.
    """
    return priority_policy({1: (2, 3), 2: (1, 4), 3: (1, 5), 4: (2, 5), 5: (4, 3)})


def validate_policy(policy: Policy, graph: Graph) -> None:
    """Check that a priority order map matches the graph's neighbor sets."""
    if policy.kind != PRIORITY:
        return
    assert policy.order is not None
    for node in graph.nodes:
        declared = policy.order.get(node)
        if declared is None:
            raise PolicyGraphMismatchError(f"no priority order for node {node}")
        if sorted(declared) != sorted(graph.neighbors(node)):
            raise PolicyGraphMismatchError(
                f"order for node {node} is {declared}, not a permutation of "
                f"neighbors {graph.neighbors(node)}"
            )
    extra = set(policy.order) - set(graph.nodes)
    if extra:
        raise PolicyGraphMismatchError(f"orders declared for unknown nodes {sorted(extra)}")


def in_state_space(graph: Graph, state: Sequence[int]) -> bool:
    """Membership in the state space: adjacent queues never both positive."""
    if len(state) != graph.node_count:
        return False
    if any(q < 0 for q in state):
        return False
    return all(state[i - 1] == 0 or state[j - 1] == 0 for i, j in graph.edges)


def check_state(graph: Graph, state: Sequence[int]) -> tuple[int, ...]:
    state = tuple(int(q) for q in state)
    if not in_state_space(graph, state):
        raise InvalidStateError(f"queue vector {state} leaves the state space")
    return state


def match_decision(
    policy: Policy,
    graph: Graph,
    state: Sequence[int],
    arriving: int,
    rng: Optional[np.random.Generator] = None,
) -> Optional[int]:
    """The class matched by an arriving item, or None when it must queue.

    `rng` is required for the randomized kinds (ml ties and uniform draws);
    priority decisions never touch it.
    """
    state = check_state(graph, state)
    if not 1 <= arriving <= graph.node_count:
        raise ValidationError(f"arriving class {arriving} out of range")
    validate_policy(policy, graph)
    if policy.kind == PRIORITY:
        for j in policy.order[arriving]:
            if state[j - 1] > 0:
                return j
        return None
    available = [j for j in graph.neighbors(arriving) if state[j - 1] > 0]
    if not available:
        return None
    if policy.kind == UNIFORM:
        if len(available) == 1:
            return available[0]
        if rng is None:
            raise ValidationError("uniform policy needs an rng")
        return available[int(rng.random() * len(available))]
    # match the longest
    longest = max(state[j - 1] for j in available)
    ties = [j for j in available if state[j - 1] == longest]
    if len(ties) == 1:
        return ties[0]
    if rng is None:
        raise ValidationError("ml tie-break needs an rng")
    return ties[int(rng.random() * len(ties))]


def apply_transition(
    state: Sequence[int], arriving: int, decision: Optional[int]
) -> tuple[int, ...]:
    """Next queue vector: enqueue the arrival or remove the matched item."""
    out = list(int(q) for q in state)
    if decision is None:
        out[arriving - 1] += 1
    else:
        if out[decision - 1] <= 0:
            raise InvalidStateError(
                f"cannot match against empty queue of class {decision}"
            )
        out[decision - 1] -= 1
    return tuple(out)


def priority_set(policy: Policy, graph: Graph, j: int, i: int) -> frozenset[int]:
    """Neighbors of j that j serves strictly before i."""
    if policy.kind != PRIORITY:
        raise NotPriorityPolicyError("priority sets exist only for priority policies")
    validate_policy(policy, graph)
    if i not in graph.neighbors(j):
        raise ValidationError(f"{i} is not a neighbor of {j}")
    order = policy.order[j]
    return frozenset(order[: order.index(i)])
