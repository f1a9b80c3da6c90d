import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imgspread.cluster import (
    BKTree,
    HammingDBSCAN,
    brute_force_neighbors,
    cluster_corpus,
    cluster_stats,
    medoid,
    read_clusters_jsonl,
    write_clusters_jsonl,
)
from imgspread.exceptions import ConfigError, EmptyClusterError
from imgspread.phash import hamming

from oracles import dbscan_oracle, medoid_oracle

hashes64 = st.integers(min_value=0, max_value=(1 << 64) - 1)


def flip(h, rng, k):
    for b in rng.sample(range(64), k):
        h ^= 1 << b
    return h


def planted_corpus(seed, n_centers=15, per_center=8, max_flips=6, n_noise=40):
    """Near-duplicate groups around random centers plus random noise, so
    every eps sees cores, borders and chained components."""
    rng = random.Random(seed)
    items = {}
    for c in range(n_centers):
        center = rng.getrandbits(64)
        for j in range(per_center):
            items[f"c{c:02d}_{j}"] = flip(center, rng, rng.randint(0, max_flips))
    for j in range(n_noise):
        items[f"n{j:03d}"] = rng.getrandbits(64)
    return items


def as_sets(clustering):
    return {frozenset(c.members) for c in clustering.clusters}, set(clustering.noise)


def test_bktree_matches_brute_force():
    rng = np.random.default_rng(0)
    base = rng.integers(0, 2**63, 50, dtype=np.uint64)
    hashes = np.concatenate([base, base ^ np.uint64(0b1011), base ^ np.uint64(1 << 40)])
    tree = BKTree()
    for i, h in enumerate(hashes):
        tree.add(int(h), i)
    for radius in (0, 3, 8, 30):
        brute = brute_force_neighbors(hashes, radius)
        for i, h in enumerate(hashes):
            got = sorted(j for j, _ in tree.query(int(h), radius))
            assert got == sorted(brute[i].tolist())
            assert all(d == hamming(h, hashes[j]) for j, d in tree.query(int(h), radius))


@pytest.mark.parametrize("eps", [0, 4, 8, 16])
@pytest.mark.parametrize("min_samples", [1, 2, 3, 5])
def test_planted_corpus_matches_quadratic_oracle(eps, min_samples):
    items = planted_corpus(eps * 10 + min_samples)
    got = cluster_corpus(items, eps=eps, min_samples=min_samples)
    assert as_sets(got) == dbscan_oracle(list(items.items()), eps, min_samples)


@pytest.mark.parametrize("algorithm", ["bktree", "brute"])
def test_random_hashes_match_oracle(algorithm):
    rng = random.Random(123)
    items = {f"{i:03d}": rng.getrandbits(64) for i in range(200)}
    for eps in (4, 8, 16, 24):
        got = cluster_corpus(items, eps=eps, min_samples=2, algorithm=algorithm)
        assert as_sets(got) == dbscan_oracle(list(items.items()), eps, 2)


def test_border_point_joins_lowest_numbered_cluster():
    # b is within eps of cores of two separate components
    a1, a2 = 0, 0b1
    c1, c2 = (1 << 64) - 1, ((1 << 64) - 1) ^ 0b1
    b = (1 << 32) - 1  # distance 32 to both sides
    items = {"a1": a1, "a2": a2, "z1": c1, "z2": c2, "m": b}
    got = cluster_corpus(items, eps=32, min_samples=3)
    oracle = dbscan_oracle(list(items.items()), 32, 3)
    assert as_sets(got) == oracle
    assert got.clusters[0].members[0] == "a1"
    assert "m" in got.clusters[0].members


def test_spec_examples():
    got = cluster_corpus({f"i{k}": 0xABC for k in range(10)}, eps=8, min_samples=2)
    assert len(got.clusters) == 1 and len(got.clusters[0].members) == 10
    assert got.clusters[0].unique_hashes == 1
    got = cluster_corpus({"a": 0, "b": (1 << 64) - 1}, eps=8, min_samples=2)
    assert got.clusters == [] and sorted(got.noise) == ["a", "b"]


def test_cluster_ids_follow_smallest_member():
    items = planted_corpus(5)
    got = cluster_corpus(items)
    firsts = [min(c.members) for c in got.clusters]
    assert firsts == sorted(firsts)
    assert [c.id for c in got.clusters] == list(range(len(got.clusters)))


@pytest.mark.parametrize("eps", [-1, 65])
def test_eps_out_of_range(eps):
    with pytest.raises(ConfigError):
        cluster_corpus({"a": 1}, eps=eps)


@settings(max_examples=40, deadline=None)
@given(st.lists(hashes64, min_size=1, max_size=40), st.integers(0, 64), st.integers(1, 4), st.randoms())
def test_partition_invariants(values, eps, min_samples, rnd):
    # include near copies so clusters actually form
    values = values + [v ^ 1 for v in values[::3]]
    items = {f"{i:03d}": v for i, v in enumerate(values)}
    got = cluster_corpus(items, eps=eps, min_samples=min_samples)
    members = [m for c in got.clusters for m in c.members]
    assert sorted(members + got.noise) == sorted(items)
    assert len(set(members)) == len(members)
    for c in got.clusters:
        assert len(c.members) >= min_samples
        assert c.medoid in c.members
    keys = list(items)
    rnd.shuffle(keys)
    shuffled = cluster_corpus({k: items[k] for k in keys}, eps=eps, min_samples=min_samples)
    assert as_sets(shuffled) == as_sets(got)


def test_medoid_examples():
    assert medoid([("a", 5)]) == "a"
    assert medoid([("a", 0), ("a2", 0), ("b", 0b1111)]) == "a"
    assert medoid([("z", 9), ("m", 9), ("q", 9)]) == "m"
    with pytest.raises(EmptyClusterError):
        medoid([])


def test_medoid_exhaustive():
    rng = random.Random(3)
    for _ in range(100):
        center = rng.getrandbits(64)
        n = rng.randint(1, 20)
        members = [(f"m{rng.randint(0, 999):03d}_{j}", flip(center, rng, rng.randint(0, 10))) for j in range(n)]
        assert medoid(members) == medoid_oracle(members)


@given(st.lists(hashes64, min_size=1, max_size=12))
def test_duplicate_of_medoid_keeps_medoid_hash(values):
    members = [(f"{i:02d}", v) for i, v in enumerate(values)]
    m = medoid(members)
    h = dict(members)[m]
    assert dict(members + [("zz", h)])[medoid(members + [("zz", h)])] == h


def test_cluster_stats():
    empty = cluster_stats(cluster_corpus({}))
    assert (empty.n_clusters, empty.n_images, empty.mean_unique) == (0, 0, 0.0)
    got = cluster_corpus({"a": 0, "a2": 0, "b": 1 << 60, "b2": 1 << 60, "c": 1 << 30, "c2": 1 << 30}, eps=0)
    s = cluster_stats(got)
    assert s.n_clusters == 3 and s.mean_unique == 1 and s.median_unique == 1
    x, y = s.cdf()
    assert x.tolist() == [1, 1, 1] and y[-1] == 1.0
    assert s.summary_line().startswith("3 clusters containing 6 images")


def test_jsonl_roundtrip(tmp_path):
    items = planted_corpus(9)
    got = cluster_corpus(items)
    path = tmp_path / "clusters.jsonl"
    write_clusters_jsonl(got, path)
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) == {"id", "medoid", "members", "unique_hashes"}
    back = read_clusters_jsonl(path, items)
    assert back.clusters == got.clusters and sorted(back.noise) == sorted(got.noise)


def test_estimator_api():
    items = planted_corpus(11)
    ids = list(items)
    X = np.array([items[k] for k in ids], dtype=np.uint64)
    est = HammingDBSCAN(eps=8, min_samples=2).fit(X, ids=ids)
    ref = cluster_corpus(items)
    assert est.n_clusters_ == len(ref.clusters)
    for c, mi in zip(ref.clusters, est.medoid_indices_):
        assert ids[mi] == c.medoid
        assert {ids[i] for i in np.flatnonzero(est.labels_ == c.id)} == set(c.members)
    assert est.get_params() == {"eps": 8, "min_samples": 2, "algorithm": "bktree"}
    assert np.array_equal(HammingDBSCAN().fit_predict(X), HammingDBSCAN().fit(X).labels_)
    assert len(est.medoid_hashes()[0]) == 16
