"""Cluster-similarity and entity-domain graphs, Louvain communities, GEXF I/O."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator

from .annotate import AnnotatedCluster
from .exceptions import ConfigError, DataError
from .validation import check_real_range

GEXF_NS = "http://gexf.net/1.2"
NODE_KINDS = ("cluster", "entity", "domain")


@dataclass
class WeightedGraph:
    """Undirected weighted graph without self-loops.

    ``nodes`` maps id -> (kind, label); ``edges`` maps a sorted id pair to
    a weight in (0, 1].
    """

    nodes: dict[str, tuple[str, str]] = field(default_factory=dict)
    edges: dict[tuple[str, str], float] = field(default_factory=dict)

    def add_node(self, node_id: str, kind: str, label: str | None = None) -> None:
        if kind not in NODE_KINDS:
            raise DataError(f"unknown node kind {kind!r}")
        self.nodes.setdefault(node_id, (kind, label if label is not None else node_id))

    def add_edge(self, u: str, v: str, weight: float) -> None:
        if u == v:
            raise DataError(f"self-loop on {u!r}")
        if u not in self.nodes or v not in self.nodes:
            raise DataError(f"edge ({u!r}, {v!r}) references an unknown node")
        if not 0 < weight <= 1:
            raise DataError(f"edge weight {weight} outside (0, 1]")
        self.edges[(u, v) if u < v else (v, u)] = float(weight)

    def degree(self) -> dict[str, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def adjacency(self) -> dict[str, dict[str, float]]:
        adj: dict[str, dict[str, float]] = {n: {} for n in self.nodes}
        for (u, v), w in self.edges.items():
            adj[u][v] = w
            adj[v][u] = w
        return adj

    def subgraph(self, keep: Iterable[str]) -> WeightedGraph:
        keep = set(keep)
        g = WeightedGraph()
        for n, (kind, label) in self.nodes.items():
            if n in keep:
                g.nodes[n] = (kind, label)
        g.edges = {e: w for e, w in self.edges.items() if e[0] in keep and e[1] in keep}
        return g

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges.keys() == other.edges.keys() and all(
            math.isclose(w, other.edges[e], rel_tol=1e-12) for e, w in self.edges.items()
        )


@dataclass
class Partition:
    community_of: dict[str, int]
    modularity: float

    @property
    def n_communities(self) -> int:
        return len(set(self.community_of.values()))

    def communities(self) -> list[set[str]]:
        groups: dict[int, set[str]] = {}
        for n, c in self.community_of.items():
            groups.setdefault(c, set()).add(n)
        return [groups[c] for c in sorted(groups)]


def jaccard(a: Iterable[str], b: Iterable[str]) -> Fraction:
    a, b = set(a), set(b)
    union = len(a | b)
    if union == 0:
        return Fraction(0)
    return Fraction(len(a & b), union)


def cluster_node_id(cluster_id: int) -> str:
    return f"cluster:{cluster_id}"


def cluster_similarity_graph(annotated: Iterable[AnnotatedCluster], threshold: float = 0.4) -> WeightedGraph:
    """Clusters joined by entity-set Jaccard similarity.

    Pairs with similarity below ``threshold`` are discarded, as are pairs
    sharing no entity.
    """
    threshold = check_real_range(threshold, "threshold", 0.0, 1.0)
    cut = Fraction(repr(threshold))
    annotated = list(annotated)
    g = WeightedGraph()
    entity_sets = {}
    postings: dict[str, list[str]] = {}
    for a in annotated:
        nid = cluster_node_id(a.cluster_id)
        g.add_node(nid, "cluster", a.top_entity or str(a.cluster_id))
        entity_sets[nid] = a.entities
        for e in a.entities:
            postings.setdefault(e, []).append(nid)
    # only pairs sharing an entity can have positive similarity
    candidates = set()
    for members in postings.values():
        for u, v in combinations(sorted(set(members)), 2):
            candidates.add((u, v))
    for u, v in sorted(candidates):
        j = jaccard(entity_sets[u], entity_sets[v])
        if j > 0 and j >= cut:
            g.add_edge(u, v, float(j))
    return g


def entity_domain_graph(annotated: Iterable[AnnotatedCluster], top_entity_only: bool = False) -> WeightedGraph:
    """Bipartite entity/domain co-occurrence graph.

    An (entity, domain) pair is counted once per cluster in which both
    occur; weights are counts divided by the largest count.
    """
    g = WeightedGraph()
    counts: dict[tuple[str, str], int] = {}
    for a in annotated:
        if top_entity_only:
            entities = [a.top_entity] if a.top_entity is not None else []
        else:
            entities = sorted(a.entities)
        for e in entities:
            g.add_node(f"entity:{e}", "entity", e)
        domains = sorted(a.domains)
        for d in domains:
            g.add_node(f"domain:{d}", "domain", d)
        for e in entities:
            for d in domains:
                key = (f"entity:{e}", f"domain:{d}")
                counts[key] = counts.get(key, 0) + 1
    if counts:
        top = max(counts.values())
        for (u, v), c in counts.items():
            g.add_edge(u, v, c / top)
    return g


def modularity(graph: WeightedGraph, community_of: Mapping[str, int], resolution: float = 1.0) -> float:
    """Newman modularity of a node -> community assignment (0 for edgeless graphs)."""
    m = sum(graph.edges.values())
    if m == 0:
        return 0.0
    internal: dict[int, float] = {}
    degree: dict[int, float] = {}
    for (u, v), w in graph.edges.items():
        cu, cv = community_of[u], community_of[v]
        if cu == cv:
            internal[cu] = internal.get(cu, 0.0) + w
        degree[cu] = degree.get(cu, 0.0) + w
        degree[cv] = degree.get(cv, 0.0) + w
    return sum(internal.get(c, 0.0) / m - resolution * (d / (2 * m)) ** 2 for c, d in degree.items())


def _one_level(adj, self_w, order, m, resolution, tol):
    """Local-move phase on an aggregated graph.

    ``adj[i]`` maps neighbor -> weight (no self entries); ``self_w[i]`` is
    the self-loop weight. Returns the community of every node.
    """
    n = len(adj)
    k = np.array([sum(adj[i].values()) + 2 * self_w[i] for i in range(n)])
    comm = list(range(n))
    tot = k.copy()
    two_m = 2.0 * m
    improved = True
    while improved:
        improved = False
        moved_gain = 0.0
        for i in order:
            ci = comm[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[ci] -= k[i]
            best_c = ci
            best_gain = links.get(ci, 0.0) - resolution * k[i] * tot[ci] / two_m
            stay_gain = best_gain
            for c in sorted(links):
                gain = links[c] - resolution * k[i] * tot[c] / two_m
                if gain > best_gain:
                    best_c, best_gain = c, gain
            tot[best_c] += k[i]
            if best_c != ci:
                comm[i] = best_c
                moved_gain += (best_gain - stay_gain) / m
        if moved_gain > tol:
            improved = True
    return comm


def louvain(graph: WeightedGraph, seed: int = 0, resolution: float = 1.0, tol: float = 1e-7) -> Partition:
    """Louvain community detection with a seeded node visitation order.

    Local moving and aggregation alternate until a level improves
    modularity by less than ``tol``.
    """
    names = sorted(graph.nodes)
    if not names:
        raise ConfigError("louvain needs at least one node")
    index = {n: i for i, n in enumerate(names)}
    m = sum(graph.edges.values())
    membership = list(range(len(names)))
    if m == 0:
        return Partition({n: i for i, n in enumerate(names)}, 0.0)

    rng = np.random.default_rng(seed)
    adj = [dict() for _ in names]
    self_w = [0.0] * len(names)
    for (u, v), w in graph.edges.items():
        adj[index[u]][index[v]] = w
        adj[index[v]][index[u]] = w

    current_q = modularity(graph, {n: membership[i] for i, n in enumerate(names)}, resolution)
    while True:
        order = list(rng.permutation(len(adj)))
        comm = _one_level(adj, self_w, order, m, resolution, tol)
        relabel = {c: r for r, c in enumerate(sorted(set(comm)))}
        comm = [relabel[c] for c in comm]
        candidate = [comm[membership[i]] for i in range(len(names))]
        q = modularity(graph, {n: candidate[i] for i, n in enumerate(names)}, resolution)
        if q - current_q < tol or len(relabel) == len(adj):
            if q > current_q:
                membership, current_q = candidate, q
            break
        membership, current_q = candidate, q
        # aggregate communities into super-nodes
        n_new = len(relabel)
        new_adj = [dict() for _ in range(n_new)]
        new_self = [0.0] * n_new
        for i in range(len(adj)):
            ci = comm[i]
            new_self[ci] += self_w[i]
            for j, w in adj[i].items():
                cj = comm[j]
                if ci == cj:
                    if i < j:
                        new_self[ci] += w
                else:
                    new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
        adj, self_w = new_adj, new_self

    # stable community ids: order of first appearance over sorted node ids
    remap: dict[int, int] = {}
    out = {}
    for i, n in enumerate(names):
        out[n] = remap.setdefault(membership[i], len(remap))
    return Partition(out, modularity(graph, out, resolution))


class Louvain(BaseEstimator):
    """Estimator wrapper around :func:`louvain` for a :class:`WeightedGraph`.

    After ``fit``, ``partition_`` holds the :class:`Partition`,
    ``labels_`` the community ids in sorted node order and
    ``modularity_`` its modularity.
    """

    def __init__(self, seed: int = 0, resolution: float = 1.0, tol: float = 1e-7):
        self.seed = seed
        self.resolution = resolution
        self.tol = tol

    def fit(self, graph: WeightedGraph, y=None):
        if not isinstance(graph, WeightedGraph):
            raise ConfigError("Louvain.fit expects a WeightedGraph")
        self.partition_ = louvain(graph, self.seed, self.resolution, self.tol)
        self.nodes_ = sorted(graph.nodes)
        self.labels_ = np.array([self.partition_.community_of[n] for n in self.nodes_])
        self.modularity_ = self.partition_.modularity
        return self

    def fit_predict(self, graph, y=None):
        return self.fit(graph).labels_


def top_degree_filter(graph: WeightedGraph, fraction: float = 0.3) -> WeightedGraph:
    """Induced subgraph on the ``ceil(fraction * |V|)`` highest-degree nodes."""
    fraction = check_real_range(fraction, "fraction", 0.0, 1.0, low_inclusive=False)
    n_keep = math.ceil(round(fraction * len(graph.nodes), 9))
    deg = graph.degree()
    ranked = sorted(graph.nodes, key=lambda n: (-deg[n], n))
    return graph.subgraph(ranked[:n_keep])


def to_gexf(graph: WeightedGraph, partition: Partition) -> str:
    missing = [n for n in graph.nodes if n not in partition.community_of]
    if missing:
        raise DataError(f"partition does not cover nodes {missing[:5]}")
    ET.register_namespace("", GEXF_NS)
    root = ET.Element(f"{{{GEXF_NS}}}gexf", {"version": "1.2"})
    g = ET.SubElement(root, f"{{{GEXF_NS}}}graph", {"defaultedgetype": "undirected", "mode": "static"})
    attrs = ET.SubElement(g, f"{{{GEXF_NS}}}attributes", {"class": "node", "mode": "static"})
    ET.SubElement(attrs, f"{{{GEXF_NS}}}attribute", {"id": "community", "title": "community", "type": "integer"})
    ET.SubElement(attrs, f"{{{GEXF_NS}}}attribute", {"id": "kind", "title": "kind", "type": "string"})
    nodes_el = ET.SubElement(g, f"{{{GEXF_NS}}}nodes")
    for n in sorted(graph.nodes):
        kind, label = graph.nodes[n]
        el = ET.SubElement(nodes_el, f"{{{GEXF_NS}}}node", {"id": n, "label": label})
        vals = ET.SubElement(el, f"{{{GEXF_NS}}}attvalues")
        ET.SubElement(vals, f"{{{GEXF_NS}}}attvalue", {"for": "community", "value": str(partition.community_of[n])})
        ET.SubElement(vals, f"{{{GEXF_NS}}}attvalue", {"for": "kind", "value": kind})
    edges_el = ET.SubElement(g, f"{{{GEXF_NS}}}edges")
    for i, ((u, v), w) in enumerate(sorted(graph.edges.items())):
        ET.SubElement(edges_el, f"{{{GEXF_NS}}}edge", {"id": str(i), "source": u, "target": v, "weight": repr(w)})
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def export_graph(graph: WeightedGraph, partition: Partition, path=None) -> str:
    text = to_gexf(graph, partition)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_gexf(source) -> tuple[WeightedGraph, Partition]:
    """Parse a document written by :func:`export_graph` (path or XML text)."""
    if isinstance(source, str) and source.lstrip().startswith("<"):
        root = ET.fromstring(source)
    else:
        root = ET.parse(source).getroot()
    ns = {"g": GEXF_NS}
    g = WeightedGraph()
    community = {}
    for el in root.iterfind("g:graph/g:nodes/g:node", ns):
        vals = {v.get("for"): v.get("value") for v in el.iterfind("g:attvalues/g:attvalue", ns)}
        g.add_node(el.get("id"), vals.get("kind", "cluster"), el.get("label"))
        community[el.get("id")] = int(vals["community"])
    for el in root.iterfind("g:graph/g:edges/g:edge", ns):
        g.add_edge(el.get("source"), el.get("target"), float(el.get("weight", 1.0)))
    return g, Partition(community, modularity(g, community) if g.nodes else 0.0)


def to_dot(graph: WeightedGraph, partition: Partition | None = None) -> str:
    def q(s):
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = ["graph G {"]
    for n in sorted(graph.nodes):
        kind, label = graph.nodes[n]
        extra = f", community={partition.community_of[n]}" if partition else ""
        lines.append(f"  {q(n)} [label={q(label)}, kind={kind}{extra}];")
    for (u, v), w in sorted(graph.edges.items()):
        lines.append(f"  {q(u)} -- {q(v)} [weight={w!r}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
