import json
from decimal import Decimal

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from imgspread import annotate as ann
from imgspread.annotate import (
    AnnotatedCluster,
    DetectionCache,
    FixtureProvider,
    ImageRef,
    LiveProvider,
    WebDetection,
    assign_entities,
    detect,
    detect_many,
    domain_popularity,
    entity_popularity,
    percent,
    popularity_table,
    read_annotations_jsonl,
    registrable_domain,
    write_annotations_jsonl,
)
from imgspread.cluster import Cluster, Clustering
from imgspread.exceptions import AnnotationGapError, DataError, FixtureMissError, ProviderError

H = "00000000000000ab"


def ref(h=H, source=None):
    return ImageRef(id="img", source=source, phash=int(h, 16))


def test_fixture_echo_and_cache(tmp_path):
    provider = FixtureProvider({H: {"entities": [["Russia", 0.9]], "full_match_urls": [], "page_urls": []}})
    cache = DetectionCache(tmp_path / "cache")
    first = detect(ref(), provider, cache)
    assert first == WebDetection(entities=[("Russia", 0.9)])
    assert provider.calls == 1
    for _ in range(5):
        assert detect(ref(), provider, cache) == first
    assert provider.calls == 1
    assert (tmp_path / "cache" / f"{H}.json").exists()
    assert not list((tmp_path / "cache").glob("*.tmp"))


def test_fixture_from_file_and_miss(tmp_path):
    path = tmp_path / "fx.json"
    path.write_text(json.dumps({H.upper(): {"entities": []}}))
    provider = FixtureProvider(path)
    det = detect(ref(), provider)
    assert det.entities == [] and det.top_entity is None
    with pytest.raises(FixtureMissError):
        detect(ref("ffffffffffffffff"), provider)


def test_top_entity_rules():
    assert WebDetection([("Car", 0.2), ("Russia", 0.9)]).top_entity == "Russia"
    assert WebDetection([("X", 0.5), ("Y", 0.5)]).top_entity == "X"
    assert WebDetection([("Solo", 0.0)]).top_entity == "Solo"
    with pytest.raises(DataError):
        WebDetection([("", 0.5)])
    with pytest.raises(DataError):
        WebDetection([("A", -1.0)])


def _clustering():
    return Clustering(
        clusters=[Cluster(0, ["a", "b"], "a", 1), Cluster(1, ["c"], "c", 1)],
        noise=["n"],
    )


def test_assign_entities():
    dets = {0: WebDetection([("Car", 0.2), ("Russia", 0.9)]), 1: WebDetection([("Solo", 0.3)])}
    assert assign_entities(_clustering(), dets) == {"a": "Russia", "b": "Russia", "c": "Solo"}
    with pytest.raises(AnnotationGapError) as err:
        assign_entities(_clustering(), {0: dets[0]})
    assert err.value.cluster_ids == [1]


@pytest.mark.parametrize(
    "url,domain",
    [
        ("https://a.com/x", "a.com"),
        ("http://www.pinterest.co.uk/pin/1", "pinterest.co.uk"),
        ("https://WWW.Pinterest.com/pin", "pinterest.com"),
        ("https://news.bbc.co.uk/path?q=1", "bbc.co.uk"),
        ("https://foo.blogspot.com/post", "blogspot.com"),
        ("ria.ru/news", "ria.ru"),
    ],
)
def test_registrable_domain(url, domain):
    assert registrable_domain(url) == domain


def test_domain_counts_once_per_cluster():
    ac = AnnotatedCluster(0, WebDetection([], ["https://a.com/x"], ["http://a.com/y"]), n_images=7)
    rows = domain_popularity([ac])
    assert [r.as_tuple()[:4] for r in rows] == [("a.com", 1, Decimal("100.0"), 7)]
    assert domain_popularity([AnnotatedCluster(0, WebDetection(), 3)]) == []


def test_entity_popularity_examples():
    one = entity_popularity([AnnotatedCluster(0, WebDetection([("E", 1.0)]), 1)])
    assert [r.as_tuple() for r in one] == [("E", 1, Decimal("100.0"), 1, Decimal("100.0"))]
    two = entity_popularity(
        [AnnotatedCluster(0, WebDetection([("E", 1.0)]), 2), AnnotatedCluster(1, WebDetection([("E", 0.3)]), 3)]
    )
    assert two[0].key == "E" and two[0].cluster_count == 2 and two[0].image_count == 5


def test_percent_half_up():
    assert percent(1, 8) == Decimal("12.5")
    assert percent(1, 16) == Decimal("6.3")  # 6.25 rounds up
    assert percent(2783, 78624) == Decimal("3.5")
    assert percent(0, 0) == Decimal("0.0")


detections = st.lists(
    st.tuples(
        st.lists(st.tuples(st.sampled_from("ABCDE"), st.floats(0, 1)), max_size=4),
        st.integers(1, 50),
    ),
    min_size=1,
    max_size=20,
)


@given(detections)
def test_popularity_invariants(raw):
    annotated = [AnnotatedCluster(i, WebDetection(ents), n) for i, (ents, n) in enumerate(raw)]
    rows = entity_popularity(annotated)
    n_with_top = sum(a.top_entity is not None for a in annotated)
    assert sum(r.cluster_count for r in rows) == n_with_top
    total_images = sum(a.n_images for a in annotated)
    for r in rows:
        assert r.cluster_pct == percent(r.cluster_count, len(annotated))
        assert r.image_pct == percent(r.image_count, total_images)
    # each share is rounded independently, so the sum may exceed 100 by at most 0.05 per row
    assert sum(r.cluster_pct for r in rows) <= Decimal(100) + Decimal("0.05") * len(rows)
    counts = [r.cluster_count for r in rows]
    assert counts == sorted(counts, reverse=True)


def test_popularity_table_layout():
    rows = entity_popularity(
        [AnnotatedCluster(i, WebDetection([(e, 1.0)]), n) for i, (e, n) in enumerate([("A", 1), ("A", 1), ("B", 2783)])]
    )
    table = popularity_table(rows, "Entity")
    assert table[0] == ["Entity", "#clusters (%)", "Entity", "#images (%)"]
    assert table[1] == ["A", "2 (66.7%)", "B", "2,783 (99.9%)"]
    assert table[2] == ["B", "1 (33.3%)", "A", "2 (0.1%)"]


def test_annotations_jsonl_roundtrip(tmp_path):
    items = [AnnotatedCluster(3, WebDetection([("E", 0.5)], ["https://x.org/a"], []), 4)]
    write_annotations_jsonl(items, tmp_path / "a.jsonl")
    assert read_annotations_jsonl(tmp_path / "a.jsonl") == items


class FakeResponse:
    def __init__(self, status, body=None, headers=None):
        self.status_code = status
        self._body = body or {}
        self.headers = headers or {}

    def json(self):
        return self._body


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, params=None, json=None, timeout=None):
        self.requests.append((url, params, json))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


LIVE_BODY = {
    "responses": [
        {
            "webDetection": {
                "webEntities": [
                    {"entityId": "/m/1", "score": 0.9, "description": "Russia"},
                    {"entityId": "/m/2", "score": 0.4},
                ],
                "fullMatchingImages": [{"url": "https://a.com/i.jpg"}],
                "pagesWithMatchingImages": [{"url": "https://b.org/p", "pageTitle": "t"}],
            }
        }
    ]
}


@pytest.fixture
def no_sleep(monkeypatch):
    slept = []
    monkeypatch.setattr(ann.time, "sleep", slept.append)
    return slept


def test_live_provider_request_and_parse(monkeypatch, no_sleep):
    monkeypatch.setenv("IMGSPREAD_VISION_API_KEY", "k123")
    session = FakeSession([FakeResponse(200, LIVE_BODY)])
    provider = LiveProvider(session=session, min_interval=0)
    det = provider.detect(H, ImageRef("img", source=b"\x89PNGfake"))
    assert det == WebDetection([("Russia", 0.9)], ["https://a.com/i.jpg"], ["https://b.org/p"])
    url, params, body = session.requests[0]
    assert params == {"key": "k123"}
    feature = body["requests"][0]["features"][0]
    assert feature["type"] == "WEB_DETECTION"
    assert body["requests"][0]["image"]["content"] == "iVBOR2Zha2U="


def test_live_provider_retries_then_succeeds(monkeypatch, no_sleep):
    monkeypatch.setenv("IMGSPREAD_VISION_API_KEY", "k")
    session = FakeSession(
        [FakeResponse(503), FakeResponse(429, headers={"Retry-After": "7"}), FakeResponse(200, LIVE_BODY)]
    )
    provider = LiveProvider(session=session, min_interval=0)
    assert provider.detect(H, ImageRef("i", source=b"x")).top_entity == "Russia"
    assert provider.calls == 3
    assert no_sleep == [1.0, 7.0]


def test_live_provider_gives_up_with_metadata(monkeypatch, no_sleep):
    monkeypatch.setenv("IMGSPREAD_VISION_API_KEY", "k")
    session = FakeSession([requests.ConnectionError("down"), FakeResponse(500), FakeResponse(502)])
    with pytest.raises(ProviderError) as err:
        LiveProvider(session=session, min_interval=0).detect(H, ImageRef("i", source=b"x"))
    assert err.value.attempts == 3 and err.value.status == 502


def test_live_provider_client_error_and_missing_key(monkeypatch, no_sleep):
    monkeypatch.setenv("IMGSPREAD_VISION_API_KEY", "k")
    with pytest.raises(ProviderError) as err:
        LiveProvider(session=FakeSession([FakeResponse(403)]), min_interval=0).detect(H, ImageRef("i", source=b"x"))
    assert err.value.status == 403 and err.value.attempts == 1
    monkeypatch.delenv("IMGSPREAD_VISION_API_KEY")
    with pytest.raises(ProviderError):
        LiveProvider(session=FakeSession([]), min_interval=0).detect(H, ImageRef("i", source=b"x"))


def test_live_provider_error_payload():
    with pytest.raises(ProviderError):
        LiveProvider.parse_response({"responses": [{"error": {"code": 3, "message": "bad image"}}]})


def test_detect_many_concurrent_cache(tmp_path):
    fixture = {f"{i:016x}": {"entities": [[f"E{i}", 0.5]]} for i in range(20)}
    provider = FixtureProvider(fixture)
    cache = DetectionCache(tmp_path)
    refs = [ImageRef(f"m{i}", phash=i) for i in range(20)]
    out = detect_many(refs, provider, cache, max_workers=8)
    assert out["m7"].top_entity == "E7"
    calls = provider.calls
    again = detect_many(refs, provider, cache, max_workers=8)
    assert again == out and provider.calls == calls
    assert len(list(tmp_path.glob("*.json"))) == 20
