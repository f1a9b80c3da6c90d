"""Web-detection annotation of cluster medoids and popularity tables.

Detections come from a pluggable provider and are cached on disk under the
medoid's perceptual hash, so repeated runs never hit the provider twice for
the same image content.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import tempfile
import threading
import time
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Protocol

import tldextract

from .cluster import Clustering
from .exceptions import AnnotationGapError, DataError, FixtureMissError, ProviderError
from .phash import compute_phash, to_hex
from .validation import as_hash

logger = logging.getLogger(__name__)

API_KEY_ENV = "IMGSPREAD_VISION_API_KEY"
DEFAULT_ENDPOINT = "https://vision.googleapis.com/v1/images:annotate"

_extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)


@dataclass(frozen=True)
class WebDetection:
    entities: list[tuple[str, float]] = field(default_factory=list)
    full_match_urls: list[str] = field(default_factory=list)
    page_urls: list[str] = field(default_factory=list)

    def __post_init__(self):
        for label, score in self.entities:
            if not label:
                raise DataError("entity labels must be non-empty")
            if not score >= 0:
                raise DataError(f"entity {label!r} has negative or NaN score {score}")

    @property
    def top_entity(self) -> str | None:
        """Highest-scoring label; the first listed wins ties."""
        best = None
        for label, score in self.entities:
            if best is None or score > best[1]:
                best = (label, score)
        return best[0] if best else None

    @property
    def entity_set(self) -> frozenset[str]:
        return frozenset(label for label, _ in self.entities)

    @property
    def urls(self) -> list[str]:
        return list(self.full_match_urls) + list(self.page_urls)

    def to_json(self) -> dict:
        return {
            "entities": [[label, score] for label, score in self.entities],
            "full_match_urls": list(self.full_match_urls),
            "page_urls": list(self.page_urls),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> WebDetection:
        try:
            entities = [(str(label), float(score)) for label, score in obj.get("entities", [])]
        except (TypeError, ValueError) as exc:
            raise DataError(f"malformed entity list: {exc}") from exc
        return cls(
            entities=entities,
            full_match_urls=[str(u) for u in obj.get("full_match_urls", [])],
            page_urls=[str(u) for u in obj.get("page_urls", [])],
        )


@dataclass
class ImageRef:
    id: str
    source: object = None
    community: str | None = None
    timestamp: float | None = None
    phash: int | None = None

    def hash_hex(self) -> str:
        if self.phash is None:
            if self.source is None:
                raise DataError(f"image {self.id!r} has neither a hash nor a payload")
            self.phash = compute_phash(self.source)
        return to_hex(self.phash)


class WebDetectionProvider(Protocol):
    name: str

    def detect(self, phash_hex: str, image: ImageRef | None = None) -> WebDetection: ...


class FixtureProvider:
    """Offline provider answering from a JSON object keyed by pHash hex."""

    name = "fixture"

    def __init__(self, fixture):
        if isinstance(fixture, Mapping):
            data = fixture
        else:
            with open(fixture, encoding="utf-8") as fh:
                data = json.load(fh)
        self._data = {f"{as_hash(k):016x}": WebDetection.from_json(v) for k, v in data.items()}
        self.calls = 0

    def detect(self, phash_hex: str, image: ImageRef | None = None) -> WebDetection:
        self.calls += 1
        try:
            return self._data[phash_hex.lower()]
        except KeyError:
            raise FixtureMissError(f"no fixture entry for pHash {phash_hex}") from None


class LiveProvider:
    """Remote web-detection service (Cloud Vision ``WEB_DETECTION`` schema).

    The API key is read from ``$IMGSPREAD_VISION_API_KEY``. Requests are
    spaced at least ``min_interval`` seconds apart across threads; HTTP 429
    and 5xx responses are retried with exponential backoff.
    """

    name = "live"

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        max_results: int = 50,
        max_retries: int = 3,
        min_interval: float = 0.1,
        timeout: float = 30.0,
        session=None,
    ):
        self.endpoint = endpoint
        self.max_results = max_results
        self.max_retries = max_retries
        self.min_interval = min_interval
        self.timeout = timeout
        self._session = session
        self._lock = threading.Lock()
        self._next_slot = 0.0
        self.calls = 0

    def _wait_for_slot(self):
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self.min_interval
        if wait > 0:
            time.sleep(wait)

    def build_request(self, image: ImageRef) -> dict:
        payload = image.source
        if isinstance(payload, (str, os.PathLike)):
            payload = Path(payload).read_bytes()
        if not isinstance(payload, (bytes, bytearray)):
            raise DataError(f"image {image.id!r} has no encoded payload to upload")
        return {
            "requests": [
                {
                    "image": {"content": base64.b64encode(bytes(payload)).decode("ascii")},
                    "features": [{"type": "WEB_DETECTION", "maxResults": self.max_results}],
                }
            ]
        }

    @staticmethod
    def parse_response(body: Mapping) -> WebDetection:
        responses = body.get("responses") or [{}]
        first = responses[0]
        if "error" in first:
            raise ProviderError(f"provider error: {first['error']}")
        web = first.get("webDetection", {})
        return WebDetection(
            entities=[
                (e["description"], float(e.get("score", 0.0)))
                for e in web.get("webEntities", [])
                if e.get("description")
            ],
            full_match_urls=[m["url"] for m in web.get("fullMatchingImages", []) if "url" in m],
            page_urls=[p["url"] for p in web.get("pagesWithMatchingImages", []) if "url" in p],
        )

    def detect(self, phash_hex: str, image: ImageRef | None = None) -> WebDetection:
        import requests

        if image is None:
            raise DataError("live detection needs the image payload")
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise ProviderError(f"${API_KEY_ENV} is not set", attempts=0)
        session = self._session or requests
        body = self.build_request(image)
        delay = 1.0
        retry_after = None
        status = None
        for attempt in range(1, self.max_retries + 1):
            self._wait_for_slot()
            self.calls += 1
            try:
                resp = session.post(self.endpoint, params={"key": key}, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                status = None
                logger.warning("detection request for %s failed: %s", phash_hex, exc)
            else:
                status = resp.status_code
                if status == 200:
                    return self.parse_response(resp.json())
                if status != 429 and status < 500:
                    raise ProviderError(f"HTTP {status} for {phash_hex}", attempts=attempt, status=status)
                header = resp.headers.get("Retry-After")
                retry_after = float(header) if header and header.isdigit() else None
            if attempt < self.max_retries:
                time.sleep(retry_after if retry_after is not None else delay)
                delay *= 2
        raise ProviderError(
            f"giving up on {phash_hex} after {self.max_retries} attempts",
            attempts=self.max_retries,
            retry_after=retry_after,
            status=status,
        )


class DetectionCache:
    """One JSON file per pHash in ``cache_dir``; writes are serialized."""

    def __init__(self, cache_dir):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path(self, phash_hex: str) -> Path:
        return self.cache_dir / f"{phash_hex.lower()}.json"

    def get(self, phash_hex: str) -> WebDetection | None:
        p = self.path(phash_hex)
        if not p.exists():
            return None
        with open(p, encoding="utf-8") as fh:
            return WebDetection.from_json(json.load(fh))

    def put(self, phash_hex: str, detection: WebDetection) -> None:
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(detection.to_json(), fh)
            os.replace(tmp, self.path(phash_hex))


def detect(medoid: ImageRef, provider: WebDetectionProvider, cache: DetectionCache | None = None) -> WebDetection:
    """Detection for ``medoid``, served from ``cache`` when available."""
    key = medoid.hash_hex()
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    result = provider.detect(key, medoid)
    if cache is not None:
        cache.put(key, result)
    return result


def detect_many(
    medoids: Iterable[ImageRef],
    provider: WebDetectionProvider,
    cache: DetectionCache | None = None,
    max_workers: int = 4,
) -> dict[str, WebDetection]:
    """Detections for many medoids keyed by image id, fetched concurrently."""
    refs = list(medoids)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(lambda r: detect(r, provider, cache), refs))
    return {r.id: d for r, d in zip(refs, results)}


def registrable_domain(url: str) -> str | None:
    """Registrable domain (public-suffix + 1 label) of ``url``, lowercased."""
    parts = _extract(url.strip().lower())
    domain = parts.top_domain_under_public_suffix if hasattr(parts, "top_domain_under_public_suffix") else parts.registered_domain
    if domain:
        return domain
    # bare hosts / IPs without a public suffix
    return parts.domain or None


@dataclass(frozen=True)
class AnnotatedCluster:
    cluster_id: int
    detection: WebDetection
    n_images: int = 1

    @property
    def top_entity(self) -> str | None:
        return self.detection.top_entity

    @property
    def entities(self) -> frozenset[str]:
        return self.detection.entity_set

    @property
    def domains(self) -> frozenset[str]:
        out = set()
        for url in self.detection.urls:
            d = registrable_domain(url)
            if d:
                out.add(d)
        return frozenset(out)


def annotate_clusters(clustering: Clustering, detections: Mapping[int, WebDetection]) -> list[AnnotatedCluster]:
    missing = [c.id for c in clustering.clusters if c.id not in detections]
    if missing:
        raise AnnotationGapError(missing)
    return [AnnotatedCluster(c.id, detections[c.id], len(c.members)) for c in clustering.clusters]


def assign_entities(clustering: Clustering, detections: Mapping[int, WebDetection]) -> dict[str, str | None]:
    """Every clustered image inherits its cluster's top entity."""
    out = {}
    for ac, cluster in zip(annotate_clusters(clustering, detections), clustering.clusters):
        for member in cluster.members:
            out[member] = ac.top_entity
    return out


def percent(count: int, total: int) -> Decimal:
    """``100 * count / total`` rounded half-up to one decimal."""
    if total == 0:
        return Decimal("0.0")
    return (Decimal(100) * count / Decimal(total)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class PopularityRow:
    key: str
    cluster_count: int
    cluster_pct: Decimal
    image_count: int
    image_pct: Decimal

    def as_tuple(self):
        return (self.key, self.cluster_count, self.cluster_pct, self.image_count, self.image_pct)


def _popularity(per_cluster: list[tuple[Iterable[str], int]], total_clusters: int, total_images: int) -> list[PopularityRow]:
    counts: dict[str, list[int]] = {}
    for keys, n_images in per_cluster:
        for k in set(keys):
            c = counts.setdefault(k, [0, 0])
            c[0] += 1
            c[1] += n_images
    rows = [
        PopularityRow(k, nc, percent(nc, total_clusters), ni, percent(ni, total_images))
        for k, (nc, ni) in counts.items()
    ]
    rows.sort(key=lambda r: (-r.cluster_count, -r.image_count, r.key))
    return rows


def entity_popularity(annotated: Iterable[AnnotatedCluster]) -> list[PopularityRow]:
    """Top-entity counts, by clusters and by images, ranked by cluster count."""
    annotated = list(annotated)
    total_images = sum(a.n_images for a in annotated)
    per_cluster = [([a.top_entity] if a.top_entity is not None else [], a.n_images) for a in annotated]
    return _popularity(per_cluster, len(annotated), total_images)


def domain_popularity(annotated: Iterable[AnnotatedCluster]) -> list[PopularityRow]:
    """Domain counts; a domain counts once per cluster however many URLs hit it."""
    annotated = list(annotated)
    total_images = sum(a.n_images for a in annotated)
    return _popularity([(a.domains, a.n_images) for a in annotated], len(annotated), total_images)


def format_count(count: int, pct: Decimal) -> str:
    return f"{count:,} ({pct}%)"


def popularity_table(rows: list[PopularityRow], key_header: str, top: int = 20) -> list[list[str]]:
    """Side-by-side layout: ranked by #clusters on the left, #images on the right."""
    by_clusters = rows[:top]
    by_images = sorted(rows, key=lambda r: (-r.image_count, -r.cluster_count, r.key))[:top]
    table = [[key_header, "#clusters (%)", key_header, "#images (%)"]]
    for i in range(max(len(by_clusters), len(by_images))):
        left = by_clusters[i] if i < len(by_clusters) else None
        right = by_images[i] if i < len(by_images) else None
        table.append(
            [
                left.key if left else "",
                format_count(left.cluster_count, left.cluster_pct) if left else "",
                right.key if right else "",
                format_count(right.image_count, right.image_pct) if right else "",
            ]
        )
    return table


def write_annotations_jsonl(annotated: Iterable[AnnotatedCluster], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotated:
            rec = {"cluster_id": a.cluster_id, "n_images": a.n_images, "top_entity": a.top_entity,
                   "domains": sorted(a.domains), "detection": a.detection.to_json()}
            fh.write(json.dumps(rec) + "\n")


def read_annotations_jsonl(path) -> list[AnnotatedCluster]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(AnnotatedCluster(int(rec["cluster_id"]), WebDetection.from_json(rec["detection"]),
                                            int(rec.get("n_images", 1))))
    return out
