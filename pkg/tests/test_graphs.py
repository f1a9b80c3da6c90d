import random
from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imgspread.annotate import AnnotatedCluster, WebDetection
from imgspread.exceptions import ConfigError, DataError
from imgspread.graphs import (
    Louvain,
    Partition,
    WeightedGraph,
    cluster_similarity_graph,
    entity_domain_graph,
    export_graph,
    jaccard,
    louvain,
    modularity,
    read_gexf,
    to_dot,
    top_degree_filter,
)

from oracles import best_modularity_exhaustive, modularity_oracle


def ac(cid, entities, urls=(), n=1):
    return AnnotatedCluster(cid, WebDetection([(e, 0.5) for e in entities], list(urls), []), n)


def graph_from_edges(edges, nodes=None):
    g = WeightedGraph()
    for n in nodes or sorted({x for e in edges for x in e[:2]}):
        g.add_node(n, "cluster")
    for u, v, w in edges:
        g.add_edge(u, v, w)
    return g


def two_cliques():
    left = [f"a{i}" for i in range(5)]
    right = [f"b{i}" for i in range(5)]
    edges = [(u, v, 1.0) for grp in (left, right) for i, u in enumerate(grp) for v in grp[i + 1:]]
    edges.append(("a0", "b0", 1.0))
    return graph_from_edges(edges, left + right), edges, left, right


def test_jaccard_examples():
    assert jaccard({"a"}, {"a"}) == 1
    assert jaccard({"a"}, {"b"}) == 0
    assert jaccard({"a", "b"}, {"b", "c"}) == Fraction(1, 3)
    assert jaccard(set(), set()) == 0


@given(st.sets(st.integers(0, 9)), st.sets(st.integers(0, 9)))
def test_jaccard_symmetry(a, b):
    assert jaccard(a, b) == jaccard(b, a)
    if a:
        assert jaccard(a, a) == 1


def test_similarity_graph_threshold_boundaries():
    # J = 2/5 = 0.4 exactly: kept
    g = cluster_similarity_graph([ac(0, "ABCD"), ac(1, "CDE")])
    assert g.edges == {("cluster:0", "cluster:1"): 0.4}
    # J = 399/1000 = 0.399: dropped
    common = [f"e{i}" for i in range(399)]
    a = common + [f"x{i}" for i in range(300)]
    b = common + [f"y{i}" for i in range(301)]
    assert jaccard(a, b) == Fraction(399, 1000)
    g = cluster_similarity_graph([ac(0, a), ac(1, b)])
    assert g.edges == {}
    assert set(g.nodes) == {"cluster:0", "cluster:1"}


def test_similarity_graph_examples():
    assert cluster_similarity_graph([ac(0, "AB"), ac(1, "AB")]).edges == {("cluster:0", "cluster:1"): 1.0}
    assert cluster_similarity_graph([ac(0, "A"), ac(1, "B")]).edges == {}
    assert cluster_similarity_graph([ac(0, "AB"), ac(1, "BC")]).edges == {}
    assert cluster_similarity_graph([ac(0, ""), ac(1, "")], threshold=0.0).edges == {}
    for bad in (-0.1, 1.5):
        with pytest.raises(ConfigError):
            cluster_similarity_graph([], threshold=bad)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sets(st.sampled_from("ABCDEF")), min_size=1, max_size=12), st.sampled_from([0.0, 0.25, 0.4, 0.5, 1.0]))
def test_similarity_graph_matches_all_pairs(sets, threshold):
    g = cluster_similarity_graph([ac(i, s) for i, s in enumerate(sets)], threshold)
    expected = {}
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            jv = jaccard(sets[i], sets[j])
            if jv > 0 and jv >= Fraction(repr(threshold)):
                u, v = sorted((f"cluster:{i}", f"cluster:{j}"))
                expected[(u, v)] = float(jv)
    assert g.edges == expected


def test_entity_domain_graph_examples():
    g = entity_domain_graph([ac(0, "E", ["https://d.com/x"])])
    assert g.edges == {("domain:d.com", "entity:E"): 1.0}
    g = entity_domain_graph([ac(0, "E"), ac(1, "F")])
    assert set(g.nodes) == {"entity:E", "entity:F"} and g.edges == {}
    g = entity_domain_graph([ac(0, "EF", ["https://d.com/1"]), ac(1, "E", ["http://www.d.com/2"])])
    assert g.edges == {("domain:d.com", "entity:E"): 1.0, ("domain:d.com", "entity:F"): 0.5}
    assert g.nodes["domain:d.com"] == ("domain", "d.com")


def test_graph_invariants():
    g = graph_from_edges([("a", "b", 0.5)])
    with pytest.raises(DataError):
        g.add_edge("a", "a", 1.0)
    with pytest.raises(DataError):
        g.add_edge("a", "b", 1.5)
    g.add_edge("b", "a", 0.7)
    assert g.edges == {("a", "b"): 0.7}


def test_louvain_two_cliques_is_exhaustive_optimum():
    g, edges, left, right = two_cliques()
    part = louvain(g, seed=0)
    assert sorted(map(sorted, part.communities())) == [left, right]
    best_q, best_part = best_modularity_exhaustive(left + right, edges)
    assert part.modularity == pytest.approx(best_q, abs=1e-12)
    assert sorted(map(sorted, best_part)) == [left, right]


@pytest.mark.parametrize("seed", range(5))
def test_louvain_deterministic_and_not_worse_than_singletons(seed):
    rng = random.Random(seed)
    nodes = [f"n{i:02d}" for i in range(30)]
    edges = [(u, v, round(rng.uniform(0.1, 1.0), 3)) for i, u in enumerate(nodes) for v in nodes[i + 1:] if rng.random() < 0.15]
    g = graph_from_edges(edges, nodes)
    p1, p2 = louvain(g, seed=seed), louvain(g, seed=seed)
    assert p1.community_of == p2.community_of
    assert set(p1.community_of) == set(nodes)
    singletons = {n: i for i, n in enumerate(nodes)}
    assert p1.modularity >= modularity(g, singletons) - 1e-12
    assert -0.5 <= p1.modularity <= 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.floats(0.05, 1.0)), max_size=20), st.lists(st.integers(0, 3), min_size=8, max_size=8))
def test_modularity_against_references(raw, labels):
    edges = {}
    for u, v, w in raw:
        if u != v:
            edges[tuple(sorted((f"n{u}", f"n{v}")))] = w
    nodes = [f"n{i}" for i in range(8)]
    g = graph_from_edges([(u, v, w) for (u, v), w in edges.items()], nodes)
    assign = {n: labels[i] for i, n in enumerate(nodes)}
    ours = modularity(g, assign)
    assert ours == pytest.approx(modularity_oracle(nodes, [(u, v, w) for (u, v), w in edges.items()], assign), abs=1e-12)
    if edges:
        G = nx.Graph()
        G.add_nodes_from(nodes)
        G.add_weighted_edges_from([(u, v, w) for (u, v), w in edges.items()])
        comms = [{n for n in nodes if assign[n] == c} for c in set(labels)]
        assert ours == pytest.approx(nx.community.modularity(G, [c for c in comms if c]), abs=1e-12)


def test_louvain_trivial_graphs():
    g = graph_from_edges([], ["x", "y", "z"])
    p = louvain(g)
    assert p.n_communities == 3 and p.modularity == 0
    clique = graph_from_edges([(u, v, 1.0) for u in "abcd" for v in "abcd" if u < v])
    assert louvain(clique).n_communities == 1


def test_louvain_estimator():
    g, _, left, right = two_cliques()
    est = Louvain(seed=3).fit(g)
    assert est.partition_.n_communities == 2
    assert len(set(est.labels_)) == 2
    assert est.get_params() == {"seed": 3, "resolution": 1.0, "tol": 1e-7}


def test_top_degree_filter():
    g, *_ = two_cliques()
    assert top_degree_filter(g, 1.0) == g
    star = graph_from_edges([("c", f"l{i}", 1.0) for i in range(9)])
    kept = top_degree_filter(star, 0.1)
    assert set(kept.nodes) == {"c"} and kept.edges == {}
    flat = graph_from_edges([], ["d", "b", "a", "c"])
    assert set(top_degree_filter(flat, 0.5).nodes) == {"a", "b"}
    ten = graph_from_edges([], [f"n{i}" for i in range(10)])
    assert len(top_degree_filter(ten, 0.3).nodes) == 3
    for bad in (0.0, 1.2):
        with pytest.raises(ConfigError):
            top_degree_filter(g, bad)


def test_gexf_roundtrip(tmp_path):
    g = WeightedGraph()
    g.add_node("entity:Russia", "entity", "Russia")
    g.add_node("domain:ria.ru", "domain", "ria.ru")
    g.add_edge("entity:Russia", "domain:ria.ru", 0.5)
    part = louvain(g)
    path = tmp_path / "g.gexf"
    text = export_graph(g, part, path)
    back, back_part = read_gexf(path)
    assert back == g
    assert back_part.community_of == part.community_of
    assert text.count('for="community"') == 2
    assert 'xmlns="http://gexf.net/1.2"' in text and 'version="1.2"' in text


def test_gexf_empty_and_uncovered():
    empty = WeightedGraph()
    back, part = read_gexf(export_graph(empty, Partition({}, 0.0)))
    assert back.nodes == {} and part.community_of == {}
    g = graph_from_edges([("a", "b", 1.0)])
    with pytest.raises(DataError):
        export_graph(g, Partition({"a": 0}, 0.0))


def test_dot_output():
    g = graph_from_edges([("a", "b", 0.25)])
    dot = to_dot(g, louvain(g))
    assert dot.startswith("graph G {") and '"a" -- "b" [weight=0.25];' in dot
