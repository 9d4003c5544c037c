"""Stability regions, certified unstable instances, and an empirical classifier.

The pendant graph and the 5-cycle admit exact stability regions under
their canonical destabilizing priority rules: the independent-set rate
condition plus one (pendant) or three (5-cycle) closed-form drift
inequalities. Four parametric families produce instances that satisfy
the rate condition yet have a positive fluid drift at one node, and
`construct_nonmaximal` transplants such a family onto any connected
non-bipartite non-separable graph that embeds a pendant or a 5-cycle,
budgeting the leftover nodes' arrival rates so the rate condition still
holds while the designated node keeps a positive residual drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BoundaryDegenerateError,
    BudgetExceededError,
    EpsilonOutOfRangeError,
    MatchQError,
    NotApplicableError,
    ValidationError,
)
from .graphs import (
    Graph,
    check_rates,
    classify,
    five_cycle_graph,
    independent_sets,
    ncond_check,
    neighbors_of_set,
    pendant_graph,
    rate_of_set,
)
from .marginal import (
    fivecycle_a,
    fivecycle_alpha,
    fivecycle_node_reports,
    fivecycle_priority_drift,
    fivecycle_uniform_drift,
    pendant_alpha,
    pendant_priority_drift,
    pendant_uniform_drift,
)
from .policies import (
    Policy,
    five_cycle_priority_policy,
    pendant_priority_policy,
    priority_policy,
    uniform_policy,
)
from .simulate import SimConfig, drift_estimate, hitting_time, simulate

STABLE_EXACT = "stable-exact"
UNSTABLE_EXACT = "unstable-exact"
STABLE_EMPIRICAL = "stable-empirical"
UNSTABLE_EMPIRICAL = "unstable-empirical"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Inequality:
    """One strict inequality lhs < rhs with its margin rhs - lhs."""

    name: str
    lhs: float
    rhs: float

    @property
    def satisfied(self) -> bool:
        return self.lhs < self.rhs

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: str
    inequalities: tuple[Inequality, ...] = ()
    evidence: Optional[dict] = None

    def failing(self) -> tuple[Inequality, ...]:
        return tuple(iq for iq in self.inequalities if not iq.satisfied)


def _ncond_inequalities(graph: Graph, rates) -> list[Inequality]:
    out = []
    for ind in independent_sets(graph):
        name = "ncond:{" + ",".join(str(v) for v in sorted(ind)) + "}"
        out.append(
            Inequality(
                name=name,
                lhs=rate_of_set(rates, ind),
                rhs=rate_of_set(rates, neighbors_of_set(graph, ind)),
            )
        )
    return out


def pendant_region(rates: Sequence[float]) -> StabilityVerdict:
    """Exact verdict for the pendant graph under its canonical priority rule.

    Stable iff the rate condition holds and the tail rate stays below the
    hub rate times the marginal empty probability.
    """
    graph = pendant_graph()
    rates = check_rates(graph, rates)
    ineqs = _ncond_inequalities(graph, rates)
    if all(iq.satisfied for iq in ineqs):
        alpha = pendant_alpha(rates)
        ineqs.append(
            Inequality("pendant:tail<alpha*hub", rates[3], alpha * rates[2])
        )
    verdict = STABLE_EXACT if all(iq.satisfied for iq in ineqs) else UNSTABLE_EXACT
    return StabilityVerdict(verdict=verdict, inequalities=tuple(ineqs))


def fivecycle_region(rates: Sequence[float]) -> StabilityVerdict:
    """Region verdict for the 5-cycle under its canonical priority rule.

    Stable iff the rate condition holds together with the three per-node
    drift inequalities (apex, node 3, node 4). The apex and node-3
    inequalities use exact marginal constants; the node-4 inequality uses
    a lower bound on node 1's idle fraction, so close to that face it can
    flag instances whose exact node-4 drift is still negative (compare
    with fluid_report on node 4 when the margin is small).
    """
    graph = five_cycle_graph()
    rates = check_rates(graph, rates)
    ineqs = _ncond_inequalities(graph, rates)
    if all(iq.satisfied for iq in ineqs):
        a = fivecycle_a(rates)
        alpha = fivecycle_alpha(rates)
        reports = fivecycle_node_reports(rates)
        ineqs.append(Inequality("five_cycle:apex<a*alpha", rates[4], a * alpha))
        ineqs.append(
            Inequality(
                "five_cycle:node3<c*alpha24", rates[2], reports.c * reports.alpha24
            )
        )
        ineqs.append(
            Inequality(
                "five_cycle:node4<l2*alpha13+l5",
                rates[3],
                rates[1] * reports.alpha13 + rates[4],
            )
        )
    verdict = STABLE_EXACT if all(iq.satisfied for iq in ineqs) else UNSTABLE_EXACT
    return StabilityVerdict(verdict=verdict, inequalities=tuple(ineqs))


# -- counterexample families ---------------------------------------------------


@dataclass(frozen=True)
class UnstableInstance:
    """A certified instance: rate condition holds, yet one node drifts up."""

    graph: Graph
    rates: tuple[float, ...]
    policy: Policy
    node: int
    drift: float
    family: Optional[str] = None
    eps: Optional[float] = None
    notes: dict = field(default_factory=dict)


PENDANT_PRIORITY = "pendant-priority"
FIVE_CYCLE_PRIORITY = "five-cycle-priority"
PENDANT_UNIFORM = "pendant-uniform"
FIVE_CYCLE_UNIFORM = "five-cycle-uniform"

FAMILY_EPS_BOUND = {
    PENDANT_PRIORITY: 2.0 / 5.0,
    FIVE_CYCLE_PRIORITY: 2.0 / 9.0,
    PENDANT_UNIFORM: 7.0 / 15.0,
    FIVE_CYCLE_UNIFORM: 7.0 / 23.0,
}


def _family_parts(family: str, eps: float):
    if family == PENDANT_PRIORITY:
        rates = (eps / 2, eps / 2, 0.5 - eps / 4, 0.5 - 0.75 * eps)
        return pendant_graph(), rates, pendant_priority_policy(), 4, pendant_priority_drift
    if family == FIVE_CYCLE_PRIORITY:
        rates = (eps / 2, eps / 2, 0.25 - eps / 8, 0.25 - eps / 8, 0.5 - 0.75 * eps)
        return (
            five_cycle_graph(),
            rates,
            five_cycle_priority_policy(),
            5,
            fivecycle_priority_drift,
        )
    if family == PENDANT_UNIFORM:
        rates = (eps, eps, 0.5 - eps / 2, 0.5 - 0.75 * eps)
        return pendant_graph(), rates, uniform_policy(), 4, pendant_uniform_drift
    if family == FIVE_CYCLE_UNIFORM:
        rates = (eps, eps, 0.25 - eps / 4, 0.25 - eps / 4, 0.5 - 0.75 * eps)
        return five_cycle_graph(), rates, uniform_policy(), 5, fivecycle_uniform_drift
    raise ValidationError(
        f"unknown family {family!r}; choose from {sorted(FAMILY_EPS_BOUND)}"
    )


def counterexample(family: str, eps: float) -> UnstableInstance:
    """Emit the parametric unstable instance of the given family.

    eps must lie in (0, bound] where the bound depends on the family; at
    the bound itself the drift degenerates to zero and the instance is
    refused. The emitted instance is certified: the rate condition is
    checked and the predicted drift is strictly positive.
    """
    bound = FAMILY_EPS_BOUND.get(family)
    if bound is None:
        raise ValidationError(
            f"unknown family {family!r}; choose from {sorted(FAMILY_EPS_BOUND)}"
        )
    if not 0.0 < eps <= bound:
        raise EpsilonOutOfRangeError(
            f"{family} needs eps in (0, {bound:.6g}], got {eps}"
        )
    graph, rates, policy, node, drift_fn = _family_parts(family, eps)
    drift = drift_fn(rates)
    if drift <= 1e-12:
        raise BoundaryDegenerateError(
            f"drift {drift:.3e} vanishes at eps={eps}; pick eps strictly inside"
        )
    result = ncond_check(graph, rates)
    if not result.satisfied:
        raise MatchQError("family instance unexpectedly violates the rate condition")
    return UnstableInstance(
        graph=graph,
        rates=tuple(rates),
        policy=policy,
        node=node,
        drift=drift,
        family=family,
        eps=eps,
    )


# -- transplanting a family onto a general graph --------------------------------


def _bfs_levels(graph: Graph, sources: set[int]) -> dict[int, int]:
    dist = {v: 0 for v in sources}
    frontier = list(sources)
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for w in graph.neighbors(v):
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def _hat_rates(graph: Graph, kept: set[int], budget: float) -> dict[int, float]:
    """Split a rate budget over the nodes outside `kept`.

    Level totals decay geometrically in the hop distance from the kept
    set, fast enough that any independent set buried inside the remainder
    is strictly out-rated by a single node one level closer. Within a
    level the total is split evenly.
    """
    dist = _bfs_levels(graph, kept)
    hat = [v for v in graph.nodes if v not in kept]
    levels: dict[int, list[int]] = {}
    for v in hat:
        levels.setdefault(dist[v], []).append(v)
    max_size = max(len(m) for m in levels.values())
    r = 1.0 / (2.0 * (1.0 + max_size))
    weights = {d: r**d for d in levels}
    total_w = sum(weights[d] for d in levels)
    out = {}
    for d, members in levels.items():
        level_total = budget * weights[d] / total_w
        for v in members:
            out[v] = level_total / len(members)
    return out


def construct_nonmaximal(
    graph: Graph, eps: Optional[float] = None
) -> UnstableInstance:
    """Build a priority policy and rates destabilizing one node of `graph`.

    Applies to connected non-bipartite non-separable graphs that embed a
    pendant graph or a 5-cycle. The embedded subgraph receives a family
    instance; the remaining nodes share a rate budget small enough to
    keep the global rate condition intact and leave the designated node a
    positive residual drift. Orders outside the embedding are ascending.
    """
    cls = classify(graph)
    if cls.kind != "non_separable_g7c":
        raise NotApplicableError(
            f"graph class {cls.kind!r}: construction needs an induced pendant "
            "graph or 5-cycle in a non-bipartite non-separable graph"
        )
    if cls.witness_kind == "pendant":
        family = PENDANT_PRIORITY
        label_positions = (1, 2, 3, 4)
    else:
        family = FIVE_CYCLE_PRIORITY
        # the witness lists the cycle in path order; the canonical labels
        # along that path are 1, 2, 4, 5, 3
        label_positions = (1, 2, 4, 5, 3)
    if eps is None:
        eps = FAMILY_EPS_BOUND[family] / 2.0
    base = counterexample(family, eps)

    node_of_label = {}
    for pos, node in enumerate(cls.witness):
        node_of_label[label_positions[pos]] = node
    kept = set(cls.witness)

    rates = [0.0] * graph.node_count
    for label, node in node_of_label.items():
        rates[node - 1] = base.rates[label - 1]

    tau = ncond_check(base.graph, base.rates).min_margin
    beta = base.drift
    gamma = 0.5 * min(tau, beta, min(base.rates))
    hat_nodes = [v for v in graph.nodes if v not in kept]
    hat_total = 0.0
    if hat_nodes:
        hat_total = gamma * (1.0 - 1e-6)
        for v, r in _hat_rates(graph, kept, hat_total).items():
            rates[v - 1] = r

    label_of_node = {n: l for l, n in node_of_label.items()}
    orders = {}
    for v in graph.nodes:
        if v in kept:
            fam_order = base.policy.order[label_of_node[v]]
            mapped = [node_of_label[w] for w in fam_order]
            rest = sorted(w for w in graph.neighbors(v) if w not in kept)
            orders[v] = tuple(mapped + rest)
        else:
            orders[v] = tuple(sorted(graph.neighbors(v)))
    policy = priority_policy(orders)

    result = ncond_check(graph, rates)
    if not result.satisfied:
        raise MatchQError(
            "internal error: transplanted instance violates the rate condition "
            f"at {sorted(result.witness)}"
        )
    i0 = node_of_label[4 if family == PENDANT_PRIORITY else 5]
    return UnstableInstance(
        graph=graph,
        rates=tuple(rates),
        policy=policy,
        node=i0,
        drift=beta,
        family=family,
        eps=eps,
        notes={
            "tau": tau,
            "gamma": gamma,
            "hat_rate_total": hat_total,
            "residual_drift_lower_bound": beta - hat_total,
            "witness": tuple(cls.witness),
            "witness_kind": cls.witness_kind,
        },
    )


# -- empirical classification ----------------------------------------------------


@dataclass(frozen=True)
class ClassifyBudget:
    """Simulation budget for the empirical classifier."""

    seeds: int = 10
    scales: tuple[int, ...] = (1000, 10000)
    horizon: float = 8.0
    max_events: int = 50_000_000
    master_seed: int = 20240

    def __post_init__(self):
        if self.seeds < 2:
            raise ValidationError("need at least 2 seeds for stderr estimates")
        if len(self.scales) < 2:
            raise ValidationError("need at least 2 scales for consistency checks")


def _node_seeds(budget: ClassifyBudget, node: int, scale: int, count: int) -> list[int]:
    ss = np.random.SeedSequence([budget.master_seed, node, scale])
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(count)]


def empirical_classify(
    graph: Graph,
    rates,
    policy: Policy,
    budget: ClassifyBudget = ClassifyBudget(),
    nodes: Optional[Sequence[int]] = None,
) -> StabilityVerdict:
    """Classify stability by simulation from single-node initial masses.

    For each probed node the scaled queue starts at one unit on that node;
    a node is flagged unstable when the pooled fitted slope is positive by
    more than three standard errors at every scale, and stable when every
    replication drains to the empty state with hitting times concentrated
    around a common value that agrees across scales. The overall verdict
    is unstable if any node is unstable, stable if all nodes are stable,
    and inconclusive otherwise. Thresholds are heuristics; the exact
    evaluators stay authoritative where they exist.
    """
    rates = check_rates(graph, rates)
    lambar = sum(rates)
    probe = list(graph.nodes) if nodes is None else [int(v) for v in nodes]
    events_used = 0
    node_evidence: dict[int, dict] = {}
    node_flags: dict[int, str] = {}
    for i0 in probe:
        per_scale = []
        for scale in budget.scales:
            estimate = int(budget.horizon * scale * lambar * 1.2 * budget.seeds) + 1
            if events_used + estimate > budget.max_events:
                raise BudgetExceededError(
                    f"classifier would exceed {budget.max_events} events"
                )
            slopes, hits, empties = [], [], []
            for seed in _node_seeds(budget, i0, scale, budget.seeds):
                initial = tuple(
                    scale if v == i0 else 0 for v in graph.nodes
                )
                expected_events = budget.horizon * scale * lambar
                stride = max(1, int(expected_events // 4000))
                trace = simulate(
                    graph,
                    rates,
                    policy,
                    SimConfig(
                        horizon=budget.horizon,
                        seed=seed,
                        initial_state=initial,
                        scale=scale,
                        trace_stride=stride,
                        stop_when_empty=True,
                    ),
                )
                events_used += trace.n_events
                try:
                    est = drift_estimate(trace, i0)
                    slopes.append((est.slope, est.stderr))
                except MatchQError:
                    slopes.append(None)
                hits.append(hitting_time(trace, i0))
                empties.append(
                    trace.empty_time / scale
                    if not math.isnan(trace.empty_time)
                    else math.inf
                )
            ok_slopes = [s for s in slopes if s is not None]
            mean_slope = float(np.mean([s[0] for s in ok_slopes])) if ok_slopes else math.nan
            sem = (
                float(np.std([s[0] for s in ok_slopes], ddof=1) / math.sqrt(len(ok_slopes)))
                if len(ok_slopes) >= 2
                else math.nan
            )
            finite_hits = [h for h in hits if math.isfinite(h)]
            hit_mean = float(np.mean(finite_hits)) if finite_hits else math.inf
            hit_rel_spread = (
                float(np.std(finite_hits, ddof=1)) / hit_mean
                if len(finite_hits) >= 2 and hit_mean > 0
                else math.inf
            )
            per_scale.append(
                {
                    "scale": scale,
                    "mean_slope": mean_slope,
                    "slope_sem": sem,
                    "unstable": bool(
                        ok_slopes
                        and not math.isnan(sem)
                        and sem >= 0.0
                        and mean_slope > 3.0 * max(sem, 1e-15)
                    ),
                    "all_drained": all(math.isfinite(e) for e in empties),
                    "hit_mean": hit_mean,
                    "hit_rel_spread": hit_rel_spread,
                    "hits": hits,
                }
            )
        unstable = all(s["unstable"] for s in per_scale)
        drained = all(s["all_drained"] for s in per_scale)
        concentrated = all(s["hit_rel_spread"] <= 0.25 for s in per_scale)
        means = [s["hit_mean"] for s in per_scale]
        cross_ok = (
            all(math.isfinite(m) for m in means)
            and max(means) <= 1.4 * min(means) + 1e-12
        )
        if unstable:
            node_flags[i0] = UNSTABLE_EMPIRICAL
        elif drained and concentrated and cross_ok:
            node_flags[i0] = STABLE_EMPIRICAL
        else:
            node_flags[i0] = INCONCLUSIVE
        node_evidence[i0] = {"scales": per_scale, "flag": node_flags[i0]}

    if any(f == UNSTABLE_EMPIRICAL for f in node_flags.values()):
        verdict = UNSTABLE_EMPIRICAL
    elif all(f == STABLE_EMPIRICAL for f in node_flags.values()):
        verdict = STABLE_EMPIRICAL
    else:
        verdict = INCONCLUSIVE
    return StabilityVerdict(
        verdict=verdict,
        evidence={
            "nodes": node_evidence,
            "events_used": events_used,
            "budget": {
                "seeds": budget.seeds,
                "scales": list(budget.scales),
                "horizon": budget.horizon,
                "master_seed": budget.master_seed,
            },
        },
    )
