"""Perceptual-hash clustering, entity annotation, graph analytics and
Hawkes-process influence estimation for image dissemination studies."""

from .cluster import Cluster, Clustering, HammingDBSCAN, cluster_corpus, cluster_stats, medoid
from .phash import PHasher, compute_phash, hamming

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "Clustering",
    "HammingDBSCAN",
    "PHasher",
    "cluster_corpus",
    "cluster_stats",
    "compute_phash",
    "hamming",
    "medoid",
]
