"""Event engine: reproducibility, law checks, hitting times, couplings."""

import math

import numpy as np
import pytest

from matchq.errors import (
    InsufficientSamplesError,
    NotConnectedError,
    UnsupportedPolicyError,
    ValidationError,
)
from matchq.graphs import Graph, complete_graph, five_cycle_graph, pendant_graph
from matchq.marginal import pendant_alpha
from matchq.policies import (
    ml_policy,
    pendant_priority_policy,
    priority_policy,
    uniform_policy,
)
from matchq.simulate import (
    SimConfig,
    SimTrace,
    coupled_nonchaotic,
    coupled_nonexpansive,
    drift_estimate,
    hitting_time,
    replication_seeds,
    simulate,
)

PENDANT = pendant_graph()
FIG_POLICY = pendant_priority_policy()
LAM = (0.1, 0.1, 0.45, 0.35)

PENDANT_PLUS = Graph.from_edges(5, [(1, 2), (1, 3), (2, 3), (3, 4), (4, 5)])
PENDANT_PLUS_POLICY = priority_policy(
    {1: (2, 3), 2: (1, 3), 3: (1, 2, 4), 4: (3, 5), 5: (4,)}
)


def _cfg(**kw):
    base = dict(horizon=1.0, seed=1, initial_state=(0, 0, 0, 0), scale=1)
    base.update(kw)
    return SimConfig(**base)


def test_reproducible_bit_for_bit():
    for policy in (FIG_POLICY, ml_policy(), uniform_policy()):
        runs = [
            simulate(PENDANT, LAM, policy, _cfg(horizon=2000.0, seed=99))
            for _ in range(2)
        ]
        a, b = runs
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.classes, b.classes)
        assert np.array_equal(a.matched, b.matched)
        assert np.array_equal(a.states, b.states)
        assert a.final_state == b.final_state
        assert a.n_events == b.n_events


def test_visited_states_stay_in_state_space():
    for policy in (FIG_POLICY, ml_policy(), uniform_policy()):
        for seed in (0, 1):
            simulate(
                PENDANT,
                LAM,
                policy,
                _cfg(horizon=3000.0, seed=seed, check_states=True, trace_stride=0),
            )


def test_triangle_at_most_one_positive_queue():
    tri = complete_graph(3)
    for policy in (
        priority_policy({1: (2, 3), 2: (1, 3), 3: (1, 2)}),
        ml_policy(),
        uniform_policy(),
    ):
        trace = simulate(tri, (1, 1, 1), policy, _cfg(horizon=2000.0, seed=5,
                                                      initial_state=(0, 0, 0)))
        assert int((trace.states > 0).sum(axis=1).max()) <= 1


def test_single_node_graph_rejected():
    with pytest.raises(NotConnectedError):
        simulate(Graph(1, ()), (1.0,), ml_policy(), SimConfig(1.0, 0, (0,)))
    with pytest.raises(NotConnectedError):
        simulate(
            Graph.from_edges(4, [(1, 2), (3, 4)]),
            (1, 1, 1, 1),
            ml_policy(),
            SimConfig(1.0, 0, (0, 0, 0, 0)),
        )


def test_trace_internal_consistency():
    trace = simulate(PENDANT, LAM, FIG_POLICY, _cfg(horizon=3000.0, seed=6))
    assert np.all(np.diff(trace.times) > 0)
    # with stride 1 the snapshot classes account for every arrival
    counted = np.bincount(trace.classes, minlength=5)
    assert np.array_equal(counted, trace.arrivals)
    assert trace.n_events == len(trace.times)
    assert trace.final_state == tuple(trace.states[-1])


def test_arrival_counts_concentrate():
    horizon = 20000.0
    trace = simulate(PENDANT, LAM, FIG_POLICY, _cfg(horizon=horizon, seed=3,
                                                    trace_stride=0))
    for i, lam_i in enumerate(LAM, start=1):
        mean = lam_i * horizon
        sd = math.sqrt(mean)
        assert abs(trace.arrivals[i] - mean) < 4 * sd


def test_hitting_time_zero_start():
    trace = simulate(PENDANT, LAM, FIG_POLICY, _cfg(seed=2))
    assert hitting_time(trace, 4) == 0.0


def test_hitting_time_unstable_instance_never_within_horizon():
    trace = simulate(
        PENDANT,
        LAM,
        FIG_POLICY,
        _cfg(horizon=1.0, seed=4, initial_state=(0, 0, 0, 2000), scale=2000),
    )
    assert hitting_time(trace, 4) == math.inf
    assert trace.end_time == pytest.approx(2000.0)


def test_hitting_time_stable_instance_near_fluid_prediction():
    lam = (0.25, 0.25, 0.3, 0.1)
    rho = 1.0 / (pendant_alpha(lam) * lam[2] - lam[3])  # = 80
    hits = []
    for seed in range(5):
        trace = simulate(
            PENDANT,
            lam,
            FIG_POLICY,
            _cfg(
                horizon=160.0,
                seed=seed,
                initial_state=(0, 0, 0, 2000),
                scale=2000,
                trace_stride=0,
                stop_node=4,
            ),
        )
        hits.append(hitting_time(trace, 4))
    assert np.mean(hits) == pytest.approx(rho, rel=0.15)


def _synthetic_linear_trace(slope, n=200):
    times = np.arange(1, n + 1, dtype=float)
    states = np.zeros((n, 4), dtype=np.int64)
    states[:, 3] = 1000 + slope * times
    return SimTrace(
        node_count=4,
        scale=1,
        seed=0,
        horizon=float(n),
        times=times,
        classes=np.ones(n, dtype=np.int64),
        matched=np.zeros(n, dtype=np.int64),
        states=states,
        final_state=tuple(states[-1]),
        end_time=float(n),
        n_events=n,
        arrivals=np.zeros(5, dtype=np.int64),
        first_zero=np.array([0.0, 0.0, 0.0, np.nan]),
        empty_time=math.nan,
    )


def test_drift_estimate_exact_on_synthetic_line():
    est = drift_estimate(_synthetic_linear_trace(3), 4, window=(0.0, 200.0))
    assert est.slope == pytest.approx(3.0, abs=1e-12)
    assert est.stderr == pytest.approx(0.0, abs=1e-9)


def test_drift_estimate_requires_samples():
    with pytest.raises(InsufficientSamplesError):
        drift_estimate(_synthetic_linear_trace(3, n=50), 4, window=(0.0, 200.0))


def test_unstable_pendant_drift_positive():
    trace = simulate(
        PENDANT,
        LAM,
        FIG_POLICY,
        _cfg(horizon=1.0, seed=11, initial_state=(0, 0, 0, 20000), scale=20000),
    )
    est = drift_estimate(trace, 4)
    assert est.slope == pytest.approx(0.0384615, rel=0.5)
    assert est.slope > 0


def test_concurrent_runs_match_serial_results():
    # the engine keeps no shared mutable state, so threaded replications
    # must reproduce serial ones exactly
    from concurrent.futures import ThreadPoolExecutor

    configs = [
        _cfg(horizon=2000.0, seed=s, initial_state=(0, 0, 0, 50)) for s in range(4)
    ]
    serial = [simulate(PENDANT, LAM, FIG_POLICY, c) for c in configs]
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = list(
            pool.map(lambda c: simulate(PENDANT, LAM, FIG_POLICY, c), configs)
        )
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.states, b.states)
        assert a.final_state == b.final_state


def test_replication_seeds_deterministic_and_distinct():
    seeds = replication_seeds(42, 10)
    assert seeds == replication_seeds(42, 10)
    assert len(set(seeds)) == 10


def test_config_validation():
    with pytest.raises(ValidationError):
        simulate(PENDANT, LAM, FIG_POLICY, SimConfig(horizon=-1, seed=0))
    with pytest.raises(ValidationError):
        simulate(PENDANT, LAM, FIG_POLICY, SimConfig(horizon=math.inf, seed=0))


# -- coupled runs -------------------------------------------------------------


def test_nonexpansive_equal_starts_stay_identical():
    # with equal states the glued decisions must coincide forever, for
    # every policy kind, so the gap stays exactly zero
    for policy in (FIG_POLICY, ml_policy(), uniform_policy()):
        rep = coupled_nonexpansive(
            PENDANT, LAM, policy, (0, 0, 0, 3), (0, 0, 0, 3),
            _cfg(horizon=math.inf, max_events=20000),
        )
        assert rep.initial_gap == 0
        assert rep.max_gap == 0
        assert rep.violations == 0


@pytest.mark.parametrize(
    "graph,policy,lam,x,y",
    [
        (PENDANT, FIG_POLICY, LAM, (0, 0, 0, 5), (0, 0, 0, 0)),
        (PENDANT, ml_policy(), LAM, (7, 0, 0, 3), (0, 4, 0, 0)),
        (
            five_cycle_graph(),
            uniform_policy(),
            (0.1, 0.1, 0.225, 0.225, 0.35),
            (3, 0, 0, 0, 2),
            (0, 4, 0, 0, 0),
        ),
    ],
)
def test_nonexpansive_bound_holds(graph, policy, lam, x, y):
    rep = coupled_nonexpansive(
        graph, lam, policy, x, y, _cfg(horizon=math.inf, max_events=100_000,
                                       initial_state=None),
    )
    assert rep.violations == 0
    assert rep.max_gap <= rep.initial_gap


def test_nonchaotic_bound_holds_on_pendant_extension():
    rep = coupled_nonchaotic(
        PENDANT_PLUS,
        [1, 2, 3, 4],
        (0.1, 0.1, 0.45, 0.35, 0.02),
        PENDANT_PLUS_POLICY,
        SimConfig(horizon=math.inf, seed=8, max_events=100_000),
    )
    assert rep.violations == 0
    assert rep.max_excess <= 0


def test_nonchaotic_uniform_policy():
    rep = coupled_nonchaotic(
        PENDANT_PLUS,
        [1, 2, 3, 4],
        (0.2, 0.2, 0.4, 0.35, 0.05),
        uniform_policy(),
        SimConfig(horizon=math.inf, seed=9, max_events=100_000),
    )
    assert rep.violations == 0


def test_nonchaotic_without_removed_arrivals_keeps_systems_identical():
    rep = coupled_nonchaotic(
        PENDANT_PLUS,
        [1, 2, 3, 4],
        (0.1, 0.1, 0.45, 0.35, 1e-15),
        PENDANT_PLUS_POLICY,
        SimConfig(horizon=math.inf, seed=10, max_events=20_000),
    )
    assert rep.removed_arrivals == 0
    assert rep.max_excess == 0  # gap stayed identically zero


def test_nonchaotic_rejects_match_longest():
    with pytest.raises(UnsupportedPolicyError):
        coupled_nonchaotic(
            PENDANT_PLUS,
            [1, 2, 3, 4],
            (0.1, 0.1, 0.45, 0.35, 0.02),
            ml_policy(),
            SimConfig(horizon=1.0, seed=0),
        )


def test_nonexpansive_on_randomized_graphs_and_states():
    rng = np.random.default_rng(23)
    policies = [ml_policy(), uniform_policy()]
    for _ in range(10):
        p = int(rng.integers(3, 7))
        # random connected graph: spanning tree plus extras
        edges = set()
        order = rng.permutation(np.arange(1, p + 1))
        for i in range(1, p):
            j = int(rng.integers(0, i))
            a, b = int(order[i]), int(order[j])
            edges.add((min(a, b), max(a, b)))
        for _ in range(p):
            a, b = sorted(rng.choice(np.arange(1, p + 1), 2, replace=False))
            edges.add((int(a), int(b)))
        graph = Graph.from_edges(p, sorted(edges))
        prio = priority_policy({v: tuple(sorted(graph.neighbors(v))) for v in graph.nodes})

        def random_state():
            state = [0] * p
            for v in rng.permutation(np.arange(1, p + 1)):
                if all(state[w - 1] == 0 for w in graph.neighbors(int(v))):
                    state[int(v) - 1] = int(rng.integers(0, 6))
            return tuple(state)

        lam = tuple(rng.uniform(0.2, 1.0, p))
        for policy in policies + [prio]:
            rep = coupled_nonexpansive(
                graph, lam, policy, random_state(), random_state(),
                SimConfig(horizon=math.inf, seed=int(rng.integers(2**31)),
                          max_events=2000),
            )
            assert rep.violations == 0


def test_triangle_empty_state_recurs():
    tri = complete_graph(3)
    medians = []
    for seed in (21, 22):
        trace = simulate(tri, (1, 1, 1), ml_policy(),
                         _cfg(horizon=4000.0, seed=seed, initial_state=(0, 0, 0)))
        empty = np.where((trace.states == 0).all(axis=1))[0]
        assert len(empty) > 100
        gaps = np.diff(trace.times[empty])
        medians.append(float(np.median(gaps)))
    assert 0.3 < medians[0] / medians[1] < 3.0
