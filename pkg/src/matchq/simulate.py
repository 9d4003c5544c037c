"""Event-driven simulation of matching queues.

The engine superposes the per-class Poisson streams into a single
exponential clock with rate equal to the total arrival rate and draws the
arriving class categorically; this is exact in law and keeps one arrival
stream that coupled replicas can share. Queues change only at arrival
epochs, so hitting times are detected exactly at event granularity.

Randomness is split into an arrival stream and a decision stream derived
from one seed, so priority runs and randomized-policy runs with the same
seed see identical arrivals. Replications across seeds are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    InsufficientSamplesError,
    InvalidStateError,
    NotConnectedError,
    UnsupportedPolicyError,
    ValidationError,
)
from .graphs import Graph, check_rates, is_connected
from .policies import (
    MATCH_LONGEST,
    PRIORITY,
    UNIFORM,
    Policy,
    check_state,
    validate_policy,
)

_CHUNK = 8192


def _spawn_rngs(seed: int, decision_streams: int = 1):
    ss = np.random.SeedSequence(int(seed))
    children = ss.spawn(1 + decision_streams)
    arrival = np.random.Generator(np.random.Philox(children[0]))
    decisions = [np.random.Generator(np.random.Philox(c)) for c in children[1:]]
    return arrival, decisions


def _cum_probs(rates) -> np.ndarray:
    """Cumulative class probabilities with the top pinned to exactly 1.0.

    Rounding can leave the final cumsum a few ulps below one, and a
    uniform draw above it would index past the last class.
    """
    cum = np.cumsum(np.asarray(rates, dtype=float))
    cum /= cum[-1]
    cum[-1] = 1.0
    return cum


def replication_seeds(master_seed: int, count: int) -> list[int]:
    """Independent per-replication seeds derived from one master seed."""
    children = np.random.SeedSequence(int(master_seed)).spawn(count)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    horizon is measured in scaled time units: the raw clock runs to
    horizon * scale. initial_state None means the all-zero vector.
    trace_stride k records every k-th event (0 disables snapshots;
    hitting times are still tracked exactly). stop_node ends the run once
    that node's queue empties; stop_when_empty ends it once the whole
    vector is zero. max_events is a hard event cap.
    """

    horizon: float
    seed: int
    initial_state: Optional[tuple[int, ...]] = None
    scale: int = 1
    trace_stride: int = 1
    stop_node: Optional[int] = None
    stop_when_empty: bool = False
    max_events: Optional[int] = None
    check_states: bool = False


@dataclass
class SimTrace:
    """Recorded sample path. Snapshot arrays are aligned by index."""

    node_count: int
    scale: int
    seed: int
    horizon: float
    times: np.ndarray          # raw event times at stride points
    classes: np.ndarray        # arriving class per snapshot
    matched: np.ndarray        # matched class per snapshot, 0 = queued
    states: np.ndarray         # (snapshots, p) queue vectors
    final_state: tuple[int, ...]
    end_time: float            # raw time the run stopped
    n_events: int
    arrivals: np.ndarray       # per-class arrival counts, index 0 unused
    first_zero: np.ndarray     # raw first time each queue is 0, nan if never
    empty_time: float          # raw first time all queues are 0, nan if never

    def scaled_times(self) -> np.ndarray:
        return self.times / self.scale

    def scaled_states(self) -> np.ndarray:
        return self.states / self.scale


@dataclass(frozen=True)
class DriftEstimate:
    node: int
    slope: float
    stderr: float
    window: tuple[float, float]
    samples: int


@dataclass(frozen=True)
class NonexpansiveReport:
    policy_kind: str
    events: int
    initial_gap: int
    max_gap: int
    violations: int


@dataclass(frozen=True)
class NonchaoticReport:
    policy_kind: str
    events: int
    removed_arrivals: int      # arrivals routed to the removed node set
    max_excess: int            # max over events of (restricted gap - arrivals)
    violations: int


def _prepare(graph: Graph, rates, policy: Policy, config: SimConfig):
    rates = check_rates(graph, rates)
    validate_policy(policy, graph)
    if graph.node_count < 2 or not is_connected(graph):
        raise NotConnectedError("simulation needs a connected graph with >= 2 nodes")
    if config.initial_state is None:
        state = (0,) * graph.node_count
    else:
        state = check_state(graph, config.initial_state)
    if not (config.horizon > 0):
        raise ValidationError("horizon must be positive")
    if math.isinf(config.horizon) and config.max_events is None and (
        config.stop_node is None and not config.stop_when_empty
    ):
        raise ValidationError("infinite horizon needs max_events or a stop condition")
    if config.scale < 1:
        raise ValidationError("scale must be >= 1")
    return rates, state


def simulate(graph: Graph, rates, policy: Policy, config: SimConfig) -> SimTrace:
    """Run one matching-queue sample path; reproducible from (inputs, seed)."""
    rates, state = _prepare(graph, rates, policy, config)
    p = graph.node_count
    lambar = float(sum(rates))
    inv_lambar = 1.0 / lambar
    cum = _cum_probs(rates)
    t_end = config.horizon * config.scale

    arrival_rng, (decision_rng,) = _spawn_rngs(config.seed, 1)
    kind = policy.kind
    needs_u = kind != PRIORITY
    nbrs = [()] + [graph.neighbors(i) for i in graph.nodes]
    orders = None
    if kind == PRIORITY:
        orders = [()] + [policy.order[i] for i in graph.nodes]

    q = [0] + list(state)
    nnz = sum(1 for v in state if v > 0)
    first_zero: list = [None] * (p + 1)
    for i in range(1, p + 1):
        if q[i] == 0:
            first_zero[i] = 0.0
    empty_time = 0.0 if nnz == 0 else None
    arrivals = [0] * (p + 1)

    stride = config.trace_stride
    stop_node = config.stop_node
    stop_empty = config.stop_when_empty
    max_events = config.max_events
    check = config.check_states
    edges = graph.edges

    rec_t: list[float] = []
    rec_c: list[int] = []
    rec_m: list[int] = []
    rec_s: list[list[int]] = []

    t = 0.0
    events = 0
    done = (stop_node is not None and q[stop_node] == 0) or (stop_empty and nnz == 0)
    while not done:
        dts = arrival_rng.standard_exponential(_CHUNK)
        dts *= inv_lambar
        dts = dts.tolist()
        cls = (np.searchsorted(cum, arrival_rng.random(_CHUNK), side="right") + 1).tolist()
        us = decision_rng.random(_CHUNK).tolist() if needs_u else None
        for k in range(_CHUNK):
            if max_events is not None and events >= max_events:
                done = True
                break
            nt = t + dts[k]
            if nt > t_end:
                done = True
                t = t_end
                break
            t = nt
            c = cls[k]
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
                v = q[j] - 1
                q[j] = v
                if v == 0:
                    nnz -= 1
                    if first_zero[j] is None:
                        first_zero[j] = t
                    if nnz == 0 and empty_time is None:
                        empty_time = t
            else:
                if q[c] == 0:
                    nnz += 1
                q[c] += 1
            arrivals[c] += 1
            events += 1
            if check and j == 0:
                for a, b in edges:
                    if q[a] and q[b]:
                        raise InvalidStateError(f"state left the state space at t={t}")
            if stride and events % stride == 0:
                rec_t.append(t)
                rec_c.append(c)
                rec_m.append(j)
                rec_s.append(q[1:])
            if j and stop_node == j and q[j] == 0:
                done = True
                break
            if stop_empty and nnz == 0:
                done = True
                break

    fz = np.array(
        [math.nan if v is None else v for v in first_zero[1:]], dtype=float
    )
    return SimTrace(
        node_count=p,
        scale=config.scale,
        seed=config.seed,
        horizon=config.horizon,
        times=np.asarray(rec_t, dtype=float),
        classes=np.asarray(rec_c, dtype=np.int64),
        matched=np.asarray(rec_m, dtype=np.int64),
        states=np.asarray(rec_s, dtype=np.int64).reshape(len(rec_s), p),
        final_state=tuple(q[1:]),
        end_time=t,
        n_events=events,
        arrivals=np.asarray(arrivals, dtype=np.int64),
        first_zero=fz,
        empty_time=math.nan if empty_time is None else empty_time,
    )


def hitting_time(trace: SimTrace, node: int) -> float:
    """First scaled time the node's queue reaches zero; inf if never observed."""
    if not 1 <= node <= trace.node_count:
        raise ValidationError(f"node {node} out of range")
    raw = trace.first_zero[node - 1]
    if math.isnan(raw):
        return math.inf
    return raw / trace.scale


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = len(x)
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise InsufficientSamplesError("degenerate fit window")
    slope = float(dx @ (y - ym)) / sxx
    resid = y - ym - slope * dx
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return slope, stderr


def drift_estimate(
    trace: SimTrace,
    node: int,
    window: Optional[tuple[float, float]] = None,
    min_samples: int = 100,
) -> DriftEstimate:
    """Least-squares slope of the node's scaled queue over a scaled window.

    The default window is [0.1 T, min(T, 0.9 rho)] where T is the observed
    scaled length of the run and rho the node's observed hitting time, to
    avoid the initial transient and the boundary behavior after emptying.
    Slopes are invariant under fluid scaling, so the fit runs on raw data.
    """
    if not 1 <= node <= trace.node_count:
        raise ValidationError(f"node {node} out of range")
    t_scaled = trace.times / trace.scale
    if window is None:
        total = trace.end_time / trace.scale
        rho = hitting_time(trace, node)
        hi = total if math.isinf(rho) else min(total, 0.9 * rho)
        window = (0.1 * total, hi)
    w0, w1 = window
    mask = (t_scaled >= w0) & (t_scaled <= w1)
    n = int(mask.sum())
    if n < min_samples:
        raise InsufficientSamplesError(
            f"{n} samples in window {window}, need {min_samples}"
        )
    x = trace.times[mask]
    y = trace.states[mask, node - 1].astype(float)
    slope, stderr = _ols(x, y)
    return DriftEstimate(node=node, slope=slope, stderr=stderr, window=(w0, w1), samples=n)


# -- coupled experiments -----------------------------------------------------


def _coupled_decisions_kind(policy: Policy) -> str:
    if policy.kind not in (PRIORITY, UNIFORM, MATCH_LONGEST):
        raise UnsupportedPolicyError(policy.kind)
    return policy.kind


def coupled_nonexpansive(
    graph: Graph,
    rates,
    policy: Policy,
    x: Sequence[int],
    y: Sequence[int],
    config: SimConfig,
) -> NonexpansiveReport:
    """Drive two replicas from states x and y on one arrival stream.

    The replicas' randomized decisions are drawn from independent streams
    and then glued: whenever both draws land in the intersection of the two
    available sets, the second replica copies the first replica's draw.
    This preserves each replica's decision law while keeping the 1-norm
    gap from ever exceeding the initial gap. The report counts violations
    of that bound (expected: zero).
    """
    rates, _ = _prepare(graph, rates, policy, config)
    kind = _coupled_decisions_kind(policy)
    qx = [0] + list(check_state(graph, x))
    qy = [0] + list(check_state(graph, y))
    p = graph.node_count
    lambar = float(sum(rates))
    cum = _cum_probs(rates)
    t_end = config.horizon * config.scale
    arrival_rng, (dx_rng, dy_rng) = _spawn_rngs(config.seed, 2)
    nbrs = [()] + [graph.neighbors(i) for i in graph.nodes]
    orders = [()] + [policy.order[i] for i in graph.nodes] if kind == PRIORITY else None

    bound = sum(abs(a - b) for a, b in zip(qx[1:], qy[1:]))
    gap = bound
    max_gap = gap
    violations = 0
    max_events = config.max_events
    t = 0.0
    events = 0
    done = False
    while not done:
        dts = arrival_rng.standard_exponential(_CHUNK)
        dts *= 1.0 / lambar
        dts = dts.tolist()
        cls = (np.searchsorted(cum, arrival_rng.random(_CHUNK), side="right") + 1).tolist()
        if kind != PRIORITY:
            uxs = dx_rng.random(_CHUNK).tolist()
            uys = dy_rng.random(_CHUNK).tolist()
        for k in range(_CHUNK):
            if max_events is not None and events >= max_events:
                done = True
                break
            nt = t + dts[k]
            if nt > t_end:
                done = True
                break
            t = nt
            c = cls[k]
            jx = jy = 0
            if orders is not None:
                for w in orders[c]:
                    if qx[w] > 0:
                        jx = w
                        break
                for w in orders[c]:
                    if qy[w] > 0:
                        jy = w
                        break
            elif kind == UNIFORM:
                avx = [w for w in nbrs[c] if qx[w] > 0]
                avy = [w for w in nbrs[c] if qy[w] > 0]
                if avx:
                    jx = avx[int(uxs[k] * len(avx))]
                if avy:
                    jy = avy[int(uys[k] * len(avy))]
                if jx and jy and qy[jx] > 0 and qx[jy] > 0:
                    jy = jx
            else:  # match the longest, draws over the tie sets
                bx = 0
                for w in nbrs[c]:
                    v = qx[w]
                    if v > bx:
                        bx = v
                by = 0
                for w in nbrs[c]:
                    v = qy[w]
                    if v > by:
                        by = v
                if bx:
                    tiesx = [w for w in nbrs[c] if qx[w] == bx]
                    jx = tiesx[0] if len(tiesx) == 1 else tiesx[int(uxs[k] * len(tiesx))]
                if by:
                    tiesy = [w for w in nbrs[c] if qy[w] == by]
                    jy = tiesy[0] if len(tiesy) == 1 else tiesy[int(uys[k] * len(tiesy))]
                if jx and jy and qy[jx] == by and qx[jy] == bx:
                    jy = jx
            # apply to x
            if jx:
                old = qx[jx]
                gap += abs(old - 1 - qy[jx]) - abs(old - qy[jx])
                qx[jx] = old - 1
            else:
                old = qx[c]
                gap += abs(old + 1 - qy[c]) - abs(old - qy[c])
                qx[c] = old + 1
            # apply to y
            if jy:
                old = qy[jy]
                gap += abs(qx[jy] - (old - 1)) - abs(qx[jy] - old)
                qy[jy] = old - 1
            else:
                old = qy[c]
                gap += abs(qx[c] - (old + 1)) - abs(qx[c] - old)
                qy[c] = old + 1
            events += 1
            if gap > max_gap:
                max_gap = gap
            if gap > bound:
                violations += 1
    return NonexpansiveReport(
        policy_kind=kind,
        events=events,
        initial_gap=bound,
        max_gap=max_gap,
        violations=violations,
    )


def restricted_policy(policy: Policy, graph: Graph, kept: frozenset[int]) -> Policy:
    """The policy induced on the graph with all kept/removed cross edges erased."""
    if policy.kind != PRIORITY:
        return policy
    new_order = {}
    for node, order in policy.order.items():
        if node in kept:
            new_order[node] = tuple(w for w in order if w in kept)
        else:
            new_order[node] = tuple(w for w in order if w not in kept)
    return Policy(PRIORITY, new_order)


def disconnected_graph(graph: Graph, kept: frozenset[int]) -> Graph:
    """Erase every edge joining the kept set and its complement."""
    edges = [
        e
        for e in graph.edges
        if (e[0] in kept) == (e[1] in kept)
    ]
    return Graph(graph.node_count, tuple(edges))


def coupled_nonchaotic(
    graph: Graph,
    kept_nodes: Sequence[int],
    rates,
    policy: Policy,
    config: SimConfig,
) -> NonchaoticReport:
    """Compare the full system against the cross-edge-erased system.

    Both replicas share the arrival stream and start from the same state
    with zero queues outside the kept set. The 1-norm gap restricted to the
    kept coordinates must never exceed the number of arrivals routed to
    the removed nodes. Supports priority and uniform policies; there is no
    coupling recipe for match-the-longest here.
    """
    kept = frozenset(int(v) for v in kept_nodes)
    if not kept or not kept <= set(graph.nodes):
        raise ValidationError("kept node set must be a nonempty subset of the nodes")
    if policy.kind == MATCH_LONGEST:
        raise UnsupportedPolicyError(
            "no product coupling for match-the-longest in the cross-edge experiment"
        )
    rates, state = _prepare(graph, rates, policy, config)
    for i in graph.nodes:
        if i not in kept and state[i - 1] != 0:
            raise InvalidStateError("removed nodes must start with empty queues")
    tilde = disconnected_graph(graph, kept)
    policy_b = restricted_policy(policy, graph, kept)
    validate_policy(policy_b, tilde)

    p = graph.node_count
    lambar = float(sum(rates))
    cum = _cum_probs(rates)
    t_end = config.horizon * config.scale
    arrival_rng, (da_rng, db_rng) = _spawn_rngs(config.seed, 2)
    nbrs_a = [()] + [graph.neighbors(i) for i in graph.nodes]
    nbrs_b = [()] + [tilde.neighbors(i) for i in tilde.nodes]
    kind = policy.kind
    if kind == PRIORITY:
        orders_a = [()] + [policy.order[i] for i in graph.nodes]
        orders_b = [()] + [policy_b.order[i] for i in tilde.nodes]
    in_kept = [False] + [i in kept for i in graph.nodes]

    qa = [0] + list(state)
    qb = [0] + list(state)
    diff = 0
    nhat = 0
    max_excess = -10**18
    violations = 0
    max_events = config.max_events
    t = 0.0
    events = 0
    done = False
    while not done:
        dts = arrival_rng.standard_exponential(_CHUNK)
        dts *= 1.0 / lambar
        dts = dts.tolist()
        cls = (np.searchsorted(cum, arrival_rng.random(_CHUNK), side="right") + 1).tolist()
        if kind == UNIFORM:
            uas = da_rng.random(_CHUNK).tolist()
            ubs = db_rng.random(_CHUNK).tolist()
        for k in range(_CHUNK):
            if max_events is not None and events >= max_events:
                done = True
                break
            nt = t + dts[k]
            if nt > t_end:
                done = True
                break
            t = nt
            c = cls[k]
            ja = jb = 0
            if kind == PRIORITY:
                for w in orders_a[c]:
                    if qa[w] > 0:
                        ja = w
                        break
                for w in orders_b[c]:
                    if qb[w] > 0:
                        jb = w
                        break
            else:
                ava = [w for w in nbrs_a[c] if qa[w] > 0]
                avb = [w for w in nbrs_b[c] if qb[w] > 0]
                if ava:
                    ja = ava[int(uas[k] * len(ava))]
                if avb:
                    jb = avb[int(ubs[k] * len(avb))]
                if (
                    ja
                    and jb
                    and qb[ja] > 0
                    and ja in nbrs_b[c]
                    and qa[jb] > 0
                ):
                    jb = ja
            # full system update
            if ja:
                old = qa[ja]
                if in_kept[ja]:
                    diff += abs(old - 1 - qb[ja]) - abs(old - qb[ja])
                qa[ja] = old - 1
            else:
                old = qa[c]
                if in_kept[c]:
                    diff += abs(old + 1 - qb[c]) - abs(old - qb[c])
                qa[c] = old + 1
            # disconnected system update
            if jb:
                old = qb[jb]
                if in_kept[jb]:
                    diff += abs(qa[jb] - (old - 1)) - abs(qa[jb] - old)
                qb[jb] = old - 1
            else:
                old = qb[c]
                if in_kept[c]:
                    diff += abs(qa[c] - (old + 1)) - abs(qa[c] - old)
                qb[c] = old + 1
            if not in_kept[c]:
                nhat += 1
            events += 1
            excess = diff - nhat
            if excess > max_excess:
                max_excess = excess
            if excess > 0:
                violations += 1
    return NonchaoticReport(
        policy_kind=kind,
        events=events,
        removed_arrivals=nhat,
        max_excess=max_excess if events else 0,
        violations=violations,
    )
