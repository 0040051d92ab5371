import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scenario
from dmimo.estimation import estimate_batch
from dmimo.channel import sample_channel_batch
from dmimo.rate import RateContext, equal_weights, sum_rate
from dmimo.rate import AllocationState
from dmimo.scheduler import (
    ConflictGraph,
    DegenerateInputError,
    Schedule,
    correlation_factor,
    correlation_matrix_rho,
    dsatur_color,
    enumerate_partitions,
    exhaustive_schedule,
    schedule_users,
    validate_schedule,
)


def fake_estimates(sc, rng):
    h, _ = sample_channel_batch(sc, rng, 1)
    hhat, _ = estimate_batch(sc, h, rng)
    return hhat[0]


def test_correlation_identical_users(default_scenario):
    sc = default_scenario
    est = fake_estimates(sc, np.random.default_rng(0))
    est[:, 1, :] = est[:, 0, :]
    # identical serving sets required for the rho=2 hand case
    if sc.serving_sets[0] == sc.serving_sets[1]:
        assert correlation_factor(sc, est, 0, 1) == pytest.approx(2.0)
    clone = est.copy()
    clone[:, 1, :] = clone[:, 0, :]
    rho = correlation_factor(sc, clone, 0, 1)
    assert rho > 0


def test_correlation_clone_scenario():
    sc = make_scenario(seed=2, num_users=4, pilot_length=2,
                       subband_capacity=4)
    est = fake_estimates(sc, np.random.default_rng(1))
    est[:, 1, :] = est[:, 0, :]
    # force identical serving sets via direct scenario surgery
    from dmimo.scenario import Scenario
    sets = list(sc.serving_sets)
    sets[1] = sets[0]
    sc = Scenario(config=sc.config, links=sc.links, pilots=sc.pilots,
                  serving_sets=tuple(sets))
    assert correlation_factor(sc, est, 0, 1) == pytest.approx(2.0)


def test_correlation_orthogonal_users(default_scenario):
    sc = default_scenario
    N = sc.num_antennas
    est = np.zeros((sc.num_satellites, sc.num_users, N), dtype=complex)
    est[:, 0, 0] = 1.0
    est[:, 1, 1] = 1.0
    assert correlation_factor(sc, est, 0, 1) == pytest.approx(0.0)


def test_correlation_symmetry(default_scenario):
    sc = default_scenario
    est = fake_estimates(sc, np.random.default_rng(3))
    rho = correlation_matrix_rho(sc, est)
    np.testing.assert_allclose(rho, rho.T, atol=1e-12)
    assert np.all(np.diag(rho) == 0)


def test_correlation_zero_norm_rejected(default_scenario):
    sc = default_scenario
    est = np.zeros(
        (sc.num_satellites, sc.num_users, sc.num_antennas), dtype=complex
    )
    with pytest.raises(DegenerateInputError):
        correlation_factor(sc, est, 0, 1)


def _proper(adj, groups):
    color = {}
    for c, g in enumerate(groups):
        for v in g:
            color[v] = c
    n = adj.shape[0]
    return all(
        not (adj[u, v] and color[u] == color[v])
        for u in range(n) for v in range(u + 1, n)
    )


def test_dsatur_path_graph():
    adj = np.zeros((3, 3), dtype=int)
    adj[0, 1] = adj[1, 0] = adj[1, 2] = adj[2, 1] = 1
    groups, n_c = dsatur_color(adj, capacity=3)
    assert n_c == 2
    assert _proper(adj, groups)


def test_dsatur_complete_graph():
    adj = 1 - np.eye(4, dtype=int)
    groups, n_c = dsatur_color(adj, capacity=4)
    assert n_c == 4


def test_dsatur_random_graphs_proper_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        adj = (rng.random((n, n)) < 0.4).astype(int)
        adj = np.triu(adj, 1)
        adj = adj + adj.T
        groups, n_c = dsatur_color(adj, capacity=n)
        assert _proper(adj, groups)
        assert n_c <= adj.sum(axis=1).max() + 1
        cap = int(rng.integers(1, n + 1))
        groups_c, _ = dsatur_color(adj, capacity=cap)
        assert _proper(adj, groups_c)
        assert max(len(g) for g in groups_c) <= cap


def test_conflict_graph_threshold():
    rho = np.array([[0.0, 0.5], [0.5, 0.0]])
    g = ConflictGraph.from_threshold(rho, 0.4)
    assert g.adjacency[0, 1] == 1
    g2 = ConflictGraph.from_threshold(rho, 0.6)
    assert g2.adjacency[0, 1] == 0
    # exactly-zero correlations never conflict even at threshold zero
    g3 = ConflictGraph.from_threshold(np.zeros((3, 3)), 0.0)
    assert g3.adjacency.sum() == 0


def test_validate_schedule():
    ok = Schedule(groups=[[0, 1], [2]], colors_used=2)
    assert validate_schedule(ok, num_users=3, num_bands=2, capacity=2)
    bad = Schedule(groups=[[0, 1], [1, 2]], colors_used=2)
    assert not validate_schedule(bad, num_users=3, num_bands=2, capacity=2)
    missing = Schedule(groups=[[0, 1]], colors_used=1)
    assert not validate_schedule(missing, num_users=3, num_bands=2,
                                 capacity=2)
    over = Schedule(groups=[[0, 1, 2]], colors_used=1)
    assert not validate_schedule(over, num_users=3, num_bands=2, capacity=2)


def test_partition_enumeration_count():
    # K=4 users into <=2 blocks of <=2: only the 3 perfect pairings
    parts = enumerate_partitions(4, 2, 2)
    assert len(parts) == 3
    assert all(len(p) == 2 for p in parts)
    # unique
    seen = {tuple(tuple(b) for b in p) for p in parts}
    assert len(seen) == 3


def test_schedule_users_zero_conflicts():
    sc = make_scenario(seed=5, num_users=4, num_subbands=2, pilot_length=2,
                       subband_capacity=4)
    # orthogonal estimates -> empty conflict graph -> one band possible
    est = np.zeros(
        (sc.num_satellites, sc.num_users, sc.num_antennas), dtype=complex
    )
    for k in range(sc.num_users):
        est[:, k, k] = 1.0
    powers = np.full(sc.num_users, sc.config.max_power)
    sched = schedule_users(sc, est, powers, equal_weights(sc))
    assert sched.feasible
    assert validate_schedule(sched, sc.num_users, sc.config.num_subbands,
                             sc.config.subband_capacity)


def test_schedule_vs_exhaustive():
    sc = make_scenario(seed=8, num_users=6, num_satellites=3, cluster_size=2,
                       num_subbands=3, pilot_length=5, subband_capacity=2)
    ctx = RateContext(sc)
    powers = np.full(sc.num_users, sc.config.max_power)
    weights = equal_weights(sc)
    est = fake_estimates(sc, np.random.default_rng(4))
    sched = schedule_users(sc, est, powers, weights, context=ctx)
    assert validate_schedule(sched, 6, 3, 2)
    bw_a = sc.config.total_bandwidth / len(sched.groups)
    alg = sum_rate(sc, AllocationState(
        groups=sched.groups, bandwidths=[bw_a] * len(sched.groups),
        powers=powers, weights=weights), ctx)
    opt = exhaustive_schedule(sc, powers, weights, context=ctx)
    bw_o = sc.config.total_bandwidth / len(opt.groups)
    best = sum_rate(sc, AllocationState(
        groups=opt.groups, bandwidths=[bw_o] * len(opt.groups),
        powers=powers, weights=weights), ctx)
    assert alg <= best + 1e-6
    assert alg >= 0.5 * best


def test_exhaustive_guard():
    sc = make_scenario(seed=1, num_users=11, pilot_length=4, num_subbands=4,
                       subband_capacity=4)
    with pytest.raises(ValueError):
        exhaustive_schedule(sc, np.full(11, 0.2), equal_weights(sc))


def test_exhaustive_separates_clones():
    # two clone users: splitting beats co-scheduling under strong
    # interference
    sc = make_scenario(seed=3, num_users=3, num_subbands=2, pilot_length=2,
                       subband_capacity=3)
    ctx = RateContext(sc)
    powers = np.full(3, sc.config.max_power)
    weights = equal_weights(sc)
    opt = exhaustive_schedule(sc, powers, weights, context=ctx)
    assert validate_schedule(opt, 3, 2, 3)
    assert opt.feasible


@given(st.integers(min_value=2, max_value=8),
       st.integers(min_value=1, max_value=4))
@settings(max_examples=30, deadline=None)
def test_partitions_all_valid(k, cap):
    max_blocks = max(2, math.ceil(k / cap))
    for p in enumerate_partitions(k, max_blocks, cap):
        assert len(p) <= max_blocks
        users = [u for b in p for u in b]
        assert sorted(users) == list(range(k))
        assert all(0 < len(b) <= cap for b in p)
