import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsneseg.dbscan import (
    NOISE,
    DbscanConfig,
    cluster_embedding,
    dbscan_raw,
    epsilon_from_constant,
    finalize_assignment,
)


def test_epsilon_examples():
    two = np.array([[0.0, 0.0], [4.0, 0.0]])
    assert epsilon_from_constant(two, 1.0) == 4.0
    assert epsilon_from_constant(two, 0.5) == 2.0
    tri = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    assert epsilon_from_constant(tri, 1.0) == pytest.approx(4.0, abs=1e-12)
    with pytest.raises(ValueError):
        epsilon_from_constant(two[:1], 1.0)
    with pytest.raises(ValueError):
        epsilon_from_constant(two, 0.0)


def test_collinear_chain():
    x = np.column_stack([np.arange(5.0), np.zeros(5)])
    assert dbscan_raw(x, 1.5, 2).tolist() == [0] * 5


def test_two_distant_blobs():
    rng = np.random.default_rng(0)
    a = rng.random((10, 2)) * 0.5
    b = rng.random((12, 2)) * 0.5 + 100.0
    labels = dbscan_raw(np.vstack([a, b]), 2.0, 3)
    assert labels[:10].tolist() == [0] * 10 and labels[10:].tolist() == [1] * 12


def _components(adj, nodes):
    """Union-find over ``nodes`` using boolean adjacency."""
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i in nodes:
        for j in nodes:
            if i < j and adj[i, j]:
                parent[find(i)] = find(j)
    return {v: find(v) for v in nodes}


def oracle_dbscan(x, eps, min_pts):
    """Brute-force eps-graph: components of core points, borders by scan order."""
    n = len(x)
    adj = np.array([[np.hypot(*(x[i] - x[j])) <= eps for j in range(n)] for i in range(n)])
    core = [i for i in range(n) if adj[i].sum() >= min_pts]
    roots = _components(adj, core)
    # clusters are discovered in order of their smallest core member
    order = sorted(set(roots.values()), key=lambda r: min(v for v in core if roots[v] == r))
    cid = {r: k for k, r in enumerate(order)}
    labels = [NOISE] * n
    for v in core:
        labels[v] = cid[roots[v]]
    for i in range(n):
        if labels[i] == NOISE and i not in roots:
            reach = [cid[roots[c]] for c in core if adj[i, c]]
            # scan order: the cluster whose expansion is started first claims the border point
            if reach:
                labels[i] = min(reach)
    return np.array(labels)


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    if rng.random() < 0.5:
        x = rng.random((n, 2)) * 10
    else:
        k = int(rng.integers(1, 6))
        centers = rng.random((k, 2)) * 20
        x = centers[rng.integers(0, k, n)] + rng.normal(scale=rng.uniform(0.2, 2), size=(n, 2))
    eps = float(rng.uniform(0.2, 3.0))
    min_pts = int(rng.integers(1, 8))
    return x, eps, min_pts


def check_against_oracle(seed):
    x, eps, min_pts = random_instance(seed)
    got = dbscan_raw(x, eps, min_pts)
    want = oracle_dbscan(x, eps, min_pts)
    # exact label equality is stronger than partition equality
    return np.array_equal(got, want) and same_partition(got, want)


def test_oracle_agreement_30_uniform():
    rng = np.random.default_rng(11)
    x = rng.random((30, 2))
    for eps in (0.05, 0.1, 0.2, 0.4):
        for m in (1, 2, 3, 5):
            assert np.array_equal(dbscan_raw(x, eps, m), oracle_dbscan(x, eps, m))


def test_oracle_agreement_random_instances():
    bad = [s for s in range(40) if not check_against_oracle(1000 + s)]
    assert bad == []


def test_border_point_goes_to_first_cluster():
    # point 4 is a non-core point within eps of a core point in each group
    xs = [0.0, 0.2, 0.4, 0.6, 1.2, 1.8, 2.0, 2.2, 2.4]
    x = np.column_stack([xs, np.zeros(len(xs))])
    labels = dbscan_raw(x, 0.65, 4)
    assert labels.tolist() == [0] * 5 + [1] * 4
    assert np.array_equal(labels, oracle_dbscan(x, 0.65, 4))
    # reversed scan order hands it to the other group
    flipped = dbscan_raw(x[::-1], 0.65, 4)
    assert flipped.tolist() == [0] * 5 + [1] * 4


def test_finalize_examples():
    raw = np.array([0] * 10 + [1] * 25)
    a = finalize_assignment(raw)
    assert a.labels[0] == 1 and a.labels[-1] == 0
    assert a.cluster_sizes == (25, 10)
    a = finalize_assignment(np.full(4, NOISE))
    assert a.labels.tolist() == [0, 1, 2, 3] and a.cluster_sizes == (1, 1, 1, 1)
    a = finalize_assignment(np.array([NOISE, 0, 0, 0, NOISE, 0, 0]))
    assert a.labels.tolist() == [1, 0, 0, 0, 2, 0, 0]
    assert a.cluster_sizes == (5, 1, 1)


def test_finalize_equal_sizes_by_smallest_member():
    a = finalize_assignment(np.array([1, 0, 1, 0]))
    # raw cluster 1 owns index 0, so it becomes label 0
    assert a.labels.tolist() == [0, 1, 0, 1]


def test_noise_as_single_cluster():
    raw = np.array([NOISE, 0, 0, 0, NOISE, 0, 0])
    a = finalize_assignment(raw, noise_as_single_cluster=True)
    assert a.labels.tolist() == [1, 0, 0, 0, 1, 0, 0]
    assert a.cluster_sizes == (5, 2)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-1, 4), min_size=1, max_size=40), st.booleans())
def test_finalize_invariants(raw, pooled):
    raw = np.array(raw)
    a = finalize_assignment(raw, noise_as_single_cluster=pooled)
    sizes = np.array(a.cluster_sizes)
    assert sizes.sum() == len(raw) and np.all(np.diff(sizes) <= 0)
    assert np.array_equal(np.bincount(a.labels), sizes)
    for i in range(len(raw)):
        for j in range(len(raw)):
            if i == j:
                continue
            shared_raw = raw[i] == raw[j] and (raw[i] != NOISE or pooled)
            assert (a.labels[i] == a.labels[j]) == shared_raw


def _core_components(x, eps, min_pts):
    labels = dbscan_raw(x, eps, min_pts)
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    core = (d <= eps).sum(1) >= min_pts
    return {int(i): int(labels[i]) for i in np.flatnonzero(core)}


@pytest.mark.parametrize("seed", range(10))
def test_core_components_refine_as_eps_grows(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((60, 2)) * 5
    eps_values = np.sort(rng.uniform(0.2, 1.5, 4))
    for small, large in zip(eps_values[:-1], eps_values[1:]):
        a = _core_components(x, small, 4)
        b = _core_components(x, large, 4)
        # every core point stays core, and no small-eps component is split
        assert set(a) <= set(b)
        for comp in set(a.values()):
            members = [i for i, c in a.items() if c == comp]
            assert len({b[i] for i in members}) == 1


def test_core_component_count_can_grow_with_eps():
    # an isolated pair becomes core only at the larger eps, adding a component
    x = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [10.0, 0.0], [10.9, 0.0]])
    n_small = len(set(_core_components(x, 0.5, 2).values()))
    n_large = len(set(_core_components(x, 1.0, 2).values()))
    assert (n_small, n_large) == (1, 2)


def test_huge_constant_gives_one_cluster():
    x = np.random.default_rng(3).normal(size=(50, 2))
    a = cluster_embedding(x, DbscanConfig(epsilon_constant=10.0))
    assert a.n_clusters == 1 and a.cluster_sizes == (50,)
    assert a.epsilon_used == pytest.approx(epsilon_from_constant(x, 10.0))


def test_config_validation():
    with pytest.raises(ValueError):
        DbscanConfig(epsilon_constant=0)
    with pytest.raises(ValueError):
        DbscanConfig(min_pts=0)
    with pytest.raises(ValueError):
        DbscanConfig(min_clusters=0)
