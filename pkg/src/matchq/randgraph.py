"""Online construction of a random typed graph together with a matching.

Nodes arrive one by one; each gets an i.i.d. type drawn from a fixed
distribution over the template graph's nodes, and connects to every
earlier node whose type is a template neighbor of its own. On arrival the
matching policy picks at most one unmatched neighbor to pair with, chosen
exactly as the matching queue picks a class: the per-type counts of
unmatched nodes ARE the queue vector of the corresponding matching queue
driven by the same randomness, which this module exploits by consuming
its random streams in the same order as the simulator. Within the chosen
type the oldest unmatched node is paired (first in, first out).

Edges of the growing graph are implicit (full type adjacency); only the
matching itself is materialized.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NotConnectedError, TooLargeError, ValidationError
from .graphs import Graph, independent_sets, is_connected, neighbors_of_set
from .policies import PRIORITY, UNIFORM, Policy, validate_policy
from .simulate import _CHUNK, _cum_probs, _spawn_rngs


def type_distribution(rates: Sequence[float]) -> tuple[float, ...]:
    """Normalize an arrival-rate vector into a type distribution."""
    rates = [float(r) for r in rates]
    if any(r <= 0 for r in rates):
        raise ValidationError("rates must be strictly positive")
    total = sum(rates)
    return tuple(r / total for r in rates)


@dataclass
class GrowthResult:
    """Final state of one growth run plus the matched-count trajectory."""

    template: Graph
    mu: tuple[float, ...]
    seed: int
    node_types: np.ndarray        # type of node id k (1-based types)
    partner: np.ndarray           # partner id or -1 when unmatched
    matched_count: int            # number of matched NODES (2 per pair)
    queue: tuple[int, ...]        # unmatched counts per type at the end
    checkpoints: list[tuple[int, int, tuple[int, ...]]]
    # checkpoints entries: (n, matched_count, unmatched per type)
    total_time: float             # arrival clock at the last node

    @property
    def n_nodes(self) -> int:
        return len(self.node_types)

    def matched_fraction(self) -> float:
        if self.n_nodes == 0:
            raise ValidationError("empty growth has no matched fraction")
        return self.matched_count / self.n_nodes

    def matching_edges(self) -> list[tuple[int, int]]:
        """Matched pairs as (smaller id, larger id), 0-based ids."""
        out = []
        for u in range(self.n_nodes):
            v = int(self.partner[u])
            if v > u:
                out.append((u, v))
        return out


def grow_and_match(
    template: Graph,
    mu: Sequence[float],
    policy: Policy,
    n_nodes: int,
    seed: int,
    checkpoints: Optional[Sequence[int]] = None,
) -> GrowthResult:
    """Grow a typed random graph of n_nodes nodes and match it online.

    mu must be a strictly positive probability vector over the template's
    nodes (use type_distribution to build one from rates). checkpoints
    lists node counts at which to record (n, matched, unmatched-by-type);
    None records 100 evenly spaced points.
    """
    mu = tuple(float(m) for m in mu)
    if len(mu) != template.node_count or any(m <= 0 for m in mu):
        raise ValidationError("mu must be strictly positive over the template nodes")
    if abs(sum(mu) - 1.0) > 1e-9:
        raise ValidationError("mu must sum to one; see type_distribution")
    validate_policy(policy, template)
    if template.node_count < 2 or not is_connected(template):
        raise NotConnectedError("template must be connected with >= 2 nodes")
    if n_nodes < 0:
        raise ValidationError("n_nodes must be nonnegative")

    p = template.node_count
    if checkpoints is None:
        step = max(1, n_nodes // 100)
        checkpoints = list(range(step, n_nodes + 1, step))
        if n_nodes and (not checkpoints or checkpoints[-1] != n_nodes):
            checkpoints.append(n_nodes)
    cps = sorted(set(int(c) for c in checkpoints if 0 < int(c) <= n_nodes))
    cp_iter = iter(cps + [-1])
    next_cp = next(cp_iter)

    arrival_rng, (decision_rng,) = _spawn_rngs(seed, 1)
    cum = _cum_probs(mu)
    kind = policy.kind
    needs_u = kind != PRIORITY
    nbrs = [()] + [template.neighbors(i) for i in template.nodes]
    orders = [()] + [policy.order[i] for i in template.nodes] if kind == PRIORITY else None

    types = np.zeros(n_nodes, dtype=np.int16)
    partner = np.full(n_nodes, -1, dtype=np.int64)
    unmatched: list[deque] = [deque() for _ in range(p + 1)]
    q = [0] * (p + 1)
    matched = 0
    records: list[tuple[int, int, tuple[int, ...]]] = []

    t = 0.0
    n = 0
    while n < n_nodes:
        dts = arrival_rng.standard_exponential(_CHUNK).tolist()
        cls = (np.searchsorted(cum, arrival_rng.random(_CHUNK), side="right") + 1).tolist()
        us = decision_rng.random(_CHUNK).tolist() if needs_u else None
        for k in range(_CHUNK):
            if n >= n_nodes:
                break
            t += dts[k]
            c = cls[k]
            types[n] = c
            j = 0
            if orders is not None:
                for w in orders[c]:
                    if q[w] > 0:
                        j = w
                        break
            elif kind == UNIFORM:
                av = [w for w in nbrs[c] if q[w] > 0]
                if av:
                    m = len(av)
                    j = av[0] if m == 1 else av[int(us[k] * m)]
            else:
                best = 0
                for w in nbrs[c]:
                    v = q[w]
                    if v > best:
                        best = v
                if best:
                    ties = [w for w in nbrs[c] if q[w] == best]
                    j = ties[0] if len(ties) == 1 else ties[int(us[k] * len(ties))]
            if j:
                v = unmatched[j].popleft()
                q[j] -= 1
                partner[v] = n
                partner[n] = v
                matched += 2
            else:
                unmatched[c].append(n)
                q[c] += 1
            n += 1
            if n == next_cp:
                records.append((n, matched, tuple(q[1:])))
                next_cp = next(cp_iter)

    return GrowthResult(
        template=template,
        mu=mu,
        seed=seed,
        node_types=types,
        partner=partner,
        matched_count=matched,
        queue=tuple(q[1:]),
        checkpoints=records,
        total_time=t,
    )


def matching_is_valid(result: GrowthResult) -> bool:
    """Check the pairing is an involution on matched nodes along template edges."""
    partner = result.partner
    types = result.node_types
    n = result.n_nodes
    matched_ids = np.nonzero(partner >= 0)[0]
    if len(matched_ids) != result.matched_count:
        return False
    if np.any(partner[matched_ids] == matched_ids):
        return False
    if not np.all(partner[partner[matched_ids]] == matched_ids):
        return False
    p = result.template.node_count
    adj = np.zeros((p + 1, p + 1), dtype=bool)
    for i, j in result.template.edges:
        adj[i, j] = adj[j, i] = True
    if len(matched_ids) and not np.all(
        adj[types[matched_ids], types[partner[matched_ids]]]
    ):
        return False
    counts = np.bincount(types[partner < 0], minlength=p + 1)[1:]
    if tuple(int(c) for c in counts) != result.queue:
        return False
    return result.matched_count == n - int(sum(result.queue))


def tutte_condition_estimate(
    template: Graph, mu: Sequence[float], cap: int = 20
) -> dict[frozenset, float]:
    """Per-independent-set margins mu(I) - mu(E(I)).

    Nonpositive margins everywhere is the limiting necessary condition for
    the online matching to be asymptotically perfect; a positive margin
    names a set of types that must accumulate unmatched nodes.
    """
    mu = tuple(float(m) for m in mu)
    if len(mu) != template.node_count:
        raise ValidationError("mu length must match the template")
    if template.node_count > cap:
        raise TooLargeError(f"enumeration capped at {cap} nodes")
    out = {}
    for ind in independent_sets(template, cap=cap):
        m_i = sum(mu[v - 1] for v in ind)
        m_e = sum(mu[v - 1] for v in neighbors_of_set(template, ind))
        out[ind] = m_i - m_e
    return out
