"""Density-based clustering of perceptual hashes in Hamming space."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .exceptions import ConfigError, EmptyClusterError
from .phash import hamming_many, to_hex
from .validation import as_hash, check_hash_mapping, check_hashes, check_int_range

DEFAULT_EPS = 8
DEFAULT_MIN_SAMPLES = 2


class BKTree:
    """Burkhard-Keller tree over 64-bit hashes under the Hamming metric.

    Each node stores one hash and the caller-supplied index of that hash;
    children are keyed by their distance to the parent.
    """

    __slots__ = ("_hashes", "_indices", "_children")

    def __init__(self, hashes: Iterable[int] = ()):
        self._hashes: list[int] = []
        self._indices: list[int] = []
        self._children: list[dict[int, int]] = []
        for i, h in enumerate(hashes):
            self.add(int(h), i)

    def __len__(self):
        return len(self._hashes)

    def add(self, h: int, index: int) -> None:
        node = len(self._hashes)
        self._hashes.append(h)
        self._indices.append(index)
        self._children.append({})
        if node == 0:
            return
        cur = 0
        while True:
            d = (h ^ self._hashes[cur]).bit_count()
            nxt = self._children[cur].get(d)
            if nxt is None:
                self._children[cur][d] = node
                return
            cur = nxt

    def query(self, h: int, radius: int) -> list[tuple[int, int]]:
        """All ``(index, distance)`` pairs with distance <= radius."""
        if not self._hashes:
            return []
        out = []
        stack = [0]
        hashes, children = self._hashes, self._children
        while stack:
            cur = stack.pop()
            d = (h ^ hashes[cur]).bit_count()
            if d <= radius:
                out.append((self._indices[cur], d))
            lo, hi = d - radius, d + radius
            for dist, child in children[cur].items():
                if lo <= dist <= hi:
                    stack.append(child)
        return out


def brute_force_neighbors(hashes: np.ndarray, radius: int) -> list[np.ndarray]:
    hashes = np.asarray(hashes, dtype=np.uint64)
    return [np.flatnonzero(hamming_many(hashes, h) <= radius) for h in hashes]


def radius_neighbors(hashes: np.ndarray, radius: int, algorithm: str = "bktree") -> list[np.ndarray]:
    """Indices within ``radius`` of every hash (each set includes itself)."""
    if algorithm == "brute":
        return brute_force_neighbors(hashes, radius)
    if algorithm != "bktree":
        raise ConfigError(f"unknown neighbor algorithm {algorithm!r}")
    tree = BKTree(int(h) for h in hashes)
    return [np.array(sorted(i for i, _ in tree.query(int(h), radius)), dtype=np.int64) for h in hashes]


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def dbscan_labels(
    hashes,
    keys: Sequence | None = None,
    eps: int = DEFAULT_EPS,
    min_samples: int = DEFAULT_MIN_SAMPLES,
    algorithm: str = "bktree",
) -> tuple[np.ndarray, np.ndarray]:
    """DBSCAN over the Hamming metric with deterministic tie-breaking.

    ``keys`` order the points (defaults to input position). Identical
    hashes are collapsed to one weighted point before the neighbor search.
    Returns ``(labels, core_mask)`` where noise is labelled -1 and clusters
    are numbered by ascending smallest member key. A border point joins the
    eligible cluster whose smallest core key is lowest.
    """
    eps = check_int_range(eps, "eps", 0, 64)
    min_samples = check_int_range(min_samples, "min_samples", 1)
    hashes = check_hashes(hashes)
    n = len(hashes)
    if keys is None:
        keys = list(range(n))
    elif len(keys) != n:
        raise ConfigError("keys and hashes differ in length")
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)

    uniq, inverse, weight = np.unique(hashes, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    m = len(uniq)
    rank = np.empty(n, dtype=np.int64)
    rank[sorted(range(n), key=lambda i: keys[i])] = np.arange(n)
    # smallest rank of any point sharing this hash
    first_rank = np.full(m, n, dtype=np.int64)
    np.minimum.at(first_rank, inverse, rank)

    neighbors = radius_neighbors(uniq, eps, algorithm)
    core = np.array([weight[nb].sum() >= min_samples for nb in neighbors], dtype=bool)

    parent = list(range(m))
    for u in np.flatnonzero(core):
        for v in neighbors[u]:
            if core[v]:
                ru, rv = _find(parent, u), _find(parent, int(v))
                if ru != rv:
                    parent[max(ru, rv)] = min(ru, rv)
    roots = {}
    for u in np.flatnonzero(core):
        r = _find(parent, int(u))
        roots[r] = min(roots.get(r, n), first_rank[u])
    comp_order = {r: i for i, r in enumerate(sorted(roots, key=roots.get))}

    ulabel = np.full(m, -1, dtype=np.int64)
    for u in range(m):
        if core[u]:
            ulabel[u] = comp_order[_find(parent, u)]
        else:
            cands = [comp_order[_find(parent, int(v))] for v in neighbors[u] if core[v]]
            if cands:
                ulabel[u] = min(cands)

    # renumber by smallest member key (border points may change the order)
    smallest = {}
    for u in range(m):
        if ulabel[u] >= 0:
            smallest[ulabel[u]] = min(smallest.get(ulabel[u], n), first_rank[u])
    final = {old: new for new, old in enumerate(sorted(smallest, key=smallest.get))}
    final[-1] = -1
    labels = np.array([final[ulabel[inverse[i]]] for i in range(n)], dtype=np.int64)
    return labels, core[inverse]


@dataclass(frozen=True)
class Cluster:
    id: int
    members: list[str]
    medoid: str
    unique_hashes: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "medoid": self.medoid,
            "members": list(self.members),
            "unique_hashes": self.unique_hashes,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> Cluster:
        return cls(
            id=int(rec["id"]),
            members=[str(m) for m in rec["members"]],
            medoid=str(rec["medoid"]),
            unique_hashes=int(rec["unique_hashes"]),
        )


@dataclass(frozen=True)
class Clustering:
    clusters: list[Cluster] = field(default_factory=list)
    noise: list[str] = field(default_factory=list)

    def cluster_of(self) -> dict[str, int]:
        return {m: c.id for c in self.clusters for m in c.members}


def medoid(members: Sequence[tuple[str, int]]) -> str:
    """Member with minimum mean Hamming distance to all members.

    Ties go to the smallest id.
    """
    if not members:
        raise EmptyClusterError("medoid of an empty cluster")
    ids = [str(i) for i, _ in members]
    hashes = np.array([as_hash(h) for _, h in members], dtype=np.uint64)
    uniq, inverse, weight = np.unique(hashes, return_inverse=True, return_counts=True)
    # total distance from each unique hash to every member
    totals = (hamming_many(uniq[:, None], uniq[None, :]) * weight[None, :]).sum(axis=1)
    per_member = totals[inverse.ravel()]
    best = per_member.min()
    return min(i for i, t in zip(ids, per_member) if t == best)


def cluster_corpus(
    hashes: Mapping,
    eps: int = DEFAULT_EPS,
    min_samples: int = DEFAULT_MIN_SAMPLES,
    algorithm: str = "bktree",
) -> Clustering:
    """Cluster an ``id -> hash`` mapping; ids order the tie-breaking."""
    ids, arr = check_hash_mapping(hashes)
    labels, _ = dbscan_labels(arr, ids, eps, min_samples, algorithm)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    clusters = []
    for lab in sorted(k for k in groups if k >= 0):
        idx = groups[lab]
        pairs = [(ids[i], int(arr[i])) for i in idx]
        clusters.append(
            Cluster(
                id=lab,
                members=[ids[i] for i in idx],
                medoid=medoid(pairs),
                unique_hashes=len({int(arr[i]) for i in idx}),
            )
        )
    noise = [ids[i] for i in groups.get(-1, [])]
    return Clustering(clusters=clusters, noise=noise)


@dataclass(frozen=True)
class ClusterStats:
    n_clusters: int
    n_images: int
    n_noise: int
    unique_per_cluster: list[int]
    mean_unique: float
    median_unique: float

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted unique-image counts and their empirical CDF values."""
        x = np.sort(np.asarray(self.unique_per_cluster, dtype=float))
        if x.size == 0:
            return x, x
        return x, np.arange(1, x.size + 1) / x.size

    def summary_line(self) -> str:
        return (
            f"{self.n_clusters:,} clusters containing {self.n_images:,} images; "
            f"unique images per cluster: mean {self.mean_unique:.1f}, median {self.median_unique:g}"
        )


def cluster_stats(clustering: Clustering) -> ClusterStats:
    uniq = [c.unique_hashes for c in clustering.clusters]
    return ClusterStats(
        n_clusters=len(clustering.clusters),
        n_images=sum(len(c.members) for c in clustering.clusters),
        n_noise=len(clustering.noise),
        unique_per_cluster=uniq,
        mean_unique=float(np.mean(uniq)) if uniq else 0.0,
        median_unique=float(np.median(uniq)) if uniq else 0.0,
    )


def write_clusters_jsonl(clustering: Clustering, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in clustering.clusters:
            fh.write(json.dumps(c.to_record()) + "\n")


def read_clusters_jsonl(path, all_ids: Iterable[str] | None = None) -> Clustering:
    """Load clusters; noise is recovered only when ``all_ids`` is given."""
    clusters = []
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                clusters.append(Cluster.from_record(json.loads(line)))
    clusters.sort(key=lambda c: c.id)
    noise = []
    if all_ids is not None:
        seen = {m for c in clusters for m in c.members}
        noise = sorted(i for i in all_ids if i not in seen)
    return Clustering(clusters=clusters, noise=noise)


class HammingDBSCAN(ClusterMixin, BaseEstimator):
    """DBSCAN on 64-bit perceptual hashes.

    Parameters
    ----------
    eps : int, default=8
        Maximum Hamming distance for two hashes to be neighbors.
    min_samples : int, default=2
        Neighborhood size (counting the point itself and duplicate hashes)
        needed for a core point.
    algorithm : {"bktree", "brute"}, default="bktree"
        Neighbor search strategy. Both give identical results.

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Cluster label per input hash, -1 for noise.
    core_sample_indices_ : ndarray
    medoid_indices_ : ndarray of shape (n_clusters,)
        Input position of each cluster's medoid.
    """

    def __init__(self, eps: int = DEFAULT_EPS, min_samples: int = DEFAULT_MIN_SAMPLES, algorithm: str = "bktree"):
        self.eps = eps
        self.min_samples = min_samples
        self.algorithm = algorithm

    def fit(self, X, y=None, ids: Sequence | None = None):
        hashes = check_hashes(X)
        labels, core = dbscan_labels(hashes, ids, self.eps, self.min_samples, self.algorithm)
        keys = list(range(len(hashes))) if ids is None else list(ids)
        self.labels_ = labels
        self.core_sample_indices_ = np.flatnonzero(core)
        self.n_clusters_ = int(labels.max() + 1) if labels.size else 0
        medoids = []
        for lab in range(self.n_clusters_):
            idx = np.flatnonzero(labels == lab)
            # medoid() breaks ties on str ids; use zero-padded ranks to honor key order
            order = sorted(idx, key=lambda i: keys[i])
            width = len(str(len(order)))
            tagged = [(f"{r:0{width}d}", int(hashes[i])) for r, i in enumerate(order)]
            medoids.append(order[int(medoid(tagged))])
        self.medoid_indices_ = np.array(medoids, dtype=np.int64)
        self.hashes_ = hashes
        return self

    def medoid_hashes(self) -> list[str]:
        return [to_hex(self.hashes_[i]) for i in self.medoid_indices_]
