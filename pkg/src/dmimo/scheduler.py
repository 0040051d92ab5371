"""User scheduling: interference-correlation conflict graph, capacity-aware
DSatur coloring, the iterative threshold/requirement heuristic, and an
exhaustive-search oracle for small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rate import AllocationState, RateContext, sinr_lower_bound, sum_rate

L_MAX = 100
EXHAUSTIVE_GUARD = 10


class DegenerateInputError(ValueError):
    pass


def correlation_factor(scenario, estimates, k, kp):
    """Symmetric alignment factor between two users' estimated channels.

    estimates: (M, K, N) array of hhat vectors. Each quotient's numerator
    is taken in modulus so the factor is a real scalar.
    """
    rho = 0.0
    for a, b in ((k, kp), (kp, k)):
        sset = sorted(scenario.serving_sets[a])
        num = sum(estimates[m, a].conj() @ estimates[m, b] for m in sset)
        den = sum(
            float((estimates[m, a].conj() @ estimates[m, a]).real)
            for m in sset
        )
        if den <= 0:
            raise DegenerateInputError("zero-norm channel estimate")
        rho += abs(num) / den
    return float(rho)


def correlation_matrix_rho(scenario, estimates):
    """K x K symmetric matrix of correlation factors, zero diagonal."""
    K = scenario.num_users
    rho = np.zeros((K, K))
    for k in range(K):
        for kp in range(k + 1, K):
            rho[k, kp] = rho[kp, k] = correlation_factor(
                scenario, estimates, k, kp
            )
    return rho


@dataclass
class ConflictGraph:
    rho: np.ndarray
    adjacency: np.ndarray  # binary, symmetric, zero diagonal

    @staticmethod
    def from_threshold(rho, threshold):
        # exactly-zero correlation never conflicts, even at threshold zero
        adj = ((rho >= threshold) & (rho > 0)).astype(int)
        np.fill_diagonal(adj, 0)
        return ConflictGraph(rho=rho, adjacency=adj)


@dataclass
class Schedule:
    groups: list  # disjoint user lists covering all users
    colors_used: int
    feasible: bool = True


def dsatur_color(adjacency, capacity):
    """Greedy coloring by maximum saturation; colors capped at `capacity`
    members each. Ties break by degree then lowest vertex index; a vertex
    takes the lowest admissible color. Always succeeds (colors unbounded).
    """
    adj = np.asarray(adjacency)
    n = adj.shape[0]
    degree = adj.sum(axis=1)
    color = [-1] * n
    neighbor_colors = [set() for _ in range(n)]
    class_size = []
    for _ in range(n):
        best = None
        for v in range(n):
            if color[v] >= 0:
                continue
            key = (len(neighbor_colors[v]), degree[v], -v)
            if best is None or key > best[0]:
                best = (key, v)
        v = best[1]
        c = 0
        while True:
            if c >= len(class_size):
                class_size.append(0)
            if c not in neighbor_colors[v] and class_size[c] < capacity:
                break
            c += 1
        color[v] = c
        class_size[c] += 1
        for u in range(n):
            if adj[v, u] and color[u] < 0:
                neighbor_colors[u].add(c)
    n_colors = max(color) + 1
    groups = [[v for v in range(n) if color[v] == c] for c in range(n_colors)]
    return groups, n_colors


def validate_schedule(schedule, num_users, num_bands, capacity):
    """Structural check of the partition/capacity/disjointness constraints."""
    seen = set()
    for g in schedule.groups:
        if not g:
            return False
        if len(g) > capacity:
            return False
        if seen & set(g):
            return False
        seen |= set(g)
    if seen != set(range(num_users)):
        return False
    return len(schedule.groups) <= num_bands


def _allocation_for_groups(scenario, groups, num_bands, powers, weights):
    """Equal-split bandwidth over the occupied bands (nothing wasted when a
    partition uses fewer than the configured band count)."""
    bw = scenario.config.total_bandwidth / max(len(groups), 1)
    return AllocationState(
        groups=[list(g) for g in groups],
        bandwidths=[bw] * len(groups),
        powers=powers, weights=weights,
    )


def _meets_requirements(scenario, alloc, context):
    req = scenario.config.rate_requirement
    if req <= 0:
        return True
    for g in alloc.groups:
        for k in g:
            if sinr_lower_bound(scenario, alloc, k, context).rate_lb < req:
                return False
    return True


def schedule_users(scenario, estimates, powers, weights, num_bands=None,
                   capacity=None, context=None):
    """Iterative conflict-graph scheduling.

    Starts from the mean off-diagonal correlation as threshold; escalates the
    threshold while the coloring needs more than I colors, otherwise adds a
    conflict edge between the worst-SINR user and its strongest co-band
    interferer. Keeps the best feasible grouping by sum rate.
    """
    cfg = scenario.config
    K = scenario.num_users
    if num_bands is None:
        num_bands = cfg.num_subbands
    if capacity is None:
        capacity = cfg.subband_capacity
    if num_bands * capacity < K:
        raise ValueError("no feasible partition: I * N_max < K")
    if context is None:
        context = RateContext(scenario)

    rho = correlation_matrix_rho(scenario, estimates)
    off = rho[~np.eye(K, dtype=bool)]
    threshold = float(off.mean()) if off.size else 0.0
    rho_max = float(rho.max()) if off.size else 0.0

    graph = ConflictGraph.from_threshold(rho, threshold)
    groups, n_c = dsatur_color(graph.adjacency, capacity)

    best = None
    best_rate = -np.inf
    for _ in range(L_MAX):
        if n_c > num_bands:
            threshold = (threshold + rho_max) / 2.0
            graph = ConflictGraph.from_threshold(rho, threshold)
            groups, n_c = dsatur_color(graph.adjacency, capacity)
            continue
        alloc = _allocation_for_groups(scenario, groups, num_bands, powers,
                                       weights)
        if _meets_requirements(scenario, alloc, context):
            rate = sum_rate(scenario, alloc, context)
            if rate > best_rate:
                best_rate = rate
                best = Schedule(groups=[list(g) for g in groups],
                                colors_used=n_c, feasible=True)
        # worst user and its strongest co-band interferer
        worst_k, worst_sinr = None, np.inf
        terms = {}
        for g in alloc.groups:
            for k in g:
                t = sinr_lower_bound(scenario, alloc, k, context)
                terms[k] = t
                if t.sinr_lb < worst_sinr:
                    worst_sinr, worst_k = t.sinr_lb, k
        t = terms[worst_k]
        cand = [kp for kp in t.i2]  # co-band users other than worst_k
        if not cand:
            break  # worst user already alone in its band
        contrib = {
            kp: alloc.powers[kp] * (t.i1[kp] + t.i2.get(kp, 0.0)
                                    + t.i3.get(kp, 0.0))
            for kp in cand
        }
        kp = max(sorted(cand), key=lambda x: contrib[x])
        if graph.adjacency[worst_k, kp]:
            break  # no monotone edit left at this threshold
        graph.adjacency[worst_k, kp] = graph.adjacency[kp, worst_k] = 1
        groups, n_c = dsatur_color(graph.adjacency, capacity)

    if best is not None:
        return best
    return Schedule(groups=[list(g) for g in groups], colors_used=n_c,
                    feasible=False)


def _partitions(items, max_blocks, capacity):
    """Canonical set partitions into at most max_blocks blocks of bounded
    size, in lexicographic order."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest, max_blocks, capacity):
        for i, block in enumerate(part):
            if len(block) < capacity:
                yield part[:i] + [[first] + block] + part[i + 1:]
        if len(part) < max_blocks:
            yield part + [[first]]


def enumerate_partitions(num_users, max_blocks, capacity):
    """All valid user partitions (deterministic order)."""
    return [
        sorted([sorted(b) for b in p])
        for p in _partitions(list(range(num_users)), max_blocks, capacity)
    ]


def exhaustive_schedule(scenario, powers, weights, num_bands=None,
                        capacity=None, context=None):
    """Brute-force optimal grouping under equal-split bandwidth."""
    cfg = scenario.config
    K = scenario.num_users
    if K > EXHAUSTIVE_GUARD:
        raise ValueError(f"exhaustive search refused for K > {EXHAUSTIVE_GUARD}")
    if num_bands is None:
        num_bands = cfg.num_subbands
    if capacity is None:
        capacity = cfg.subband_capacity
    if context is None:
        context = RateContext(scenario)
    best, best_rate = None, -np.inf
    for groups in enumerate_partitions(K, num_bands, capacity):
        alloc = _allocation_for_groups(scenario, groups, num_bands, powers,
                                       weights)
        if not _meets_requirements(scenario, alloc, context):
            continue
        rate = sum_rate(scenario, alloc, context)
        if rate > best_rate:
            best_rate = rate
            best = Schedule(groups=groups, colors_used=len(groups),
                            feasible=True)
    if best is None:
        groups = enumerate_partitions(K, num_bands, capacity)[0]
        best = Schedule(groups=groups, colors_used=len(groups),
                        feasible=False)
    return best
