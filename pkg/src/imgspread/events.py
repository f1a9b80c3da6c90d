"""Cross-platform image occurrence events and temporal reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError
from .phash import to_hex
from .validation import as_hash, check_int_range

logger = logging.getLogger(__name__)

DEFAULT_COMMUNITIES = ("/pol/", "Reddit", "Twitter", "Gab", "The_Donald", "Trolls")


@dataclass(frozen=True)
class EventRecord:
    phash: int
    community: str
    timestamp: float


@dataclass(frozen=True)
class EventStore:
    """Per-pHash, per-community sorted timestamps (epoch seconds)."""

    series: dict[int, dict[str, tuple[float, ...]]]
    window: tuple[float, float]
    communities: tuple[str, ...] = DEFAULT_COMMUNITIES

    def __len__(self):
        return len(self.series)

    @property
    def phashes(self) -> list[int]:
        return sorted(self.series)

    def n_events(self, phash: int) -> int:
        return sum(len(ts) for ts in self.series[phash].values())

    def total_events(self) -> int:
        return sum(self.n_events(h) for h in self.series)

    def counts_by_community(self) -> dict[str, int]:
        out = dict.fromkeys(self.communities, 0)
        for per in self.series.values():
            for c, ts in per.items():
                out[c] = out.get(c, 0) + len(ts)
        return out

    def hours(self, phash: int) -> list[np.ndarray]:
        """Event times for one pHash in hours since the window start, one array per community."""
        start = self.window[0]
        per = self.series[phash]
        return [(np.asarray(per.get(c, ()), dtype=float) - start) / 3600.0 for c in self.communities]

    @property
    def horizon_hours(self) -> float:
        return (self.window[1] - self.window[0]) / 3600.0

    def subset(self, keep: Iterable[int]) -> EventStore:
        keep = set(keep)
        return EventStore({h: s for h, s in self.series.items() if h in keep}, self.window, self.communities)

    def records(self) -> Iterator[EventRecord]:
        for h in self.phashes:
            for c in self.communities:
                for t in self.series[h].get(c, ()):
                    yield EventRecord(h, c, t)


@dataclass
class IngestReport:
    accepted: int = 0
    duplicates: int = 0
    out_of_window: int = 0
    unknown_community: int = 0
    malformed: int = 0
    rejects: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "rejects"}


def _check_window(window) -> tuple[float, float]:
    try:
        start, end = (float(window[0]), float(window[1]))
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"window must be (start, end) epoch seconds, got {window!r}") from None
    if not end > start:
        raise ConfigError(f"window end {end} must be after start {start}")
    return start, end


def ingest(
    records: Iterable[EventRecord],
    window,
    communities: Iterable[str] = DEFAULT_COMMUNITIES,
    report: IngestReport | None = None,
) -> EventStore:
    """Build an :class:`EventStore`; duplicate (phash, community, time) triples collapse.

    Records outside the half-open ``[start, end)`` window or on undeclared
    communities are rejected and counted in ``report``.
    """
    start, end = _check_window(window)
    communities = tuple(communities)
    allowed = set(communities)
    report = report if report is not None else IngestReport()
    seen: dict[int, dict[str, set[float]]] = {}
    for rec in records:
        if rec.community not in allowed:
            report.unknown_community += 1
            report.rejects.append(f"unknown community {rec.community!r}: {to_hex(rec.phash)}")
            continue
        if not start <= rec.timestamp < end:
            report.out_of_window += 1
            continue
        bucket = seen.setdefault(rec.phash, {}).setdefault(rec.community, set())
        if rec.timestamp in bucket:
            report.duplicates += 1
            continue
        bucket.add(rec.timestamp)
        report.accepted += 1
    series = {h: {c: tuple(sorted(ts)) for c, ts in per.items()} for h, per in seen.items()}
    return EventStore(series, (start, end), communities)


def _parse_ts(value) -> float:
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.timestamp()


def parse_records(lines: Iterable[str], fmt: str = "csv", report: IngestReport | None = None) -> Iterator[EventRecord]:
    """Parse ``phash_hex, community, unix_ts`` rows from CSV or JSON-lines.

    Malformed lines are appended to ``report.rejects`` and skipped.
    """
    report = report if report is not None else IngestReport()
    if fmt == "csv":
        reader = csv.reader(lines)
        for lineno, row in enumerate(reader, 1):
            if not row or row[0].startswith("#") or row[0] == "phash_hex":
                continue
            try:
                if len(row) != 3:
                    raise ValueError(f"expected 3 columns, got {len(row)}")
                yield EventRecord(as_hash(row[0]), row[1].strip(), _parse_ts(row[2]))
            except (ValueError, ConfigError) as exc:
                report.malformed += 1
                report.rejects.append(f"line {lineno}: {exc}: {','.join(row)}")
    elif fmt == "jsonl":
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield EventRecord(as_hash(obj["phash_hex"]), str(obj["community"]), _parse_ts(obj["unix_ts"]))
            except (ValueError, KeyError, TypeError, ConfigError) as exc:
                report.malformed += 1
                report.rejects.append(f"line {lineno}: {exc}: {line.rstrip()}")
    else:
        raise ConfigError(f"unknown event format {fmt!r}")


def read_events(path, window, communities=DEFAULT_COMMUNITIES, report: IngestReport | None = None) -> EventStore:
    path = Path(path)
    fmt = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    report = report if report is not None else IngestReport()
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest(parse_records(fh, fmt, report), window, communities, report)


def adapt_public_rows(
    rows: Iterable[Mapping],
    *,
    phash_field: str = "phash",
    platform_field: str = "platform",
    timestamp_field: str = "timestamp",
    subforum_field: str | None = "subreddit",
    platform_map: Mapping[str, str] | None = None,
    split_subforums: Mapping[str, str] | None = None,
) -> Iterator[EventRecord]:
    """Map rows of a platform dump onto :class:`EventRecord`.

    ``platform_map`` renames platforms (e.g. ``{"4chan": "/pol/"}``);
    ``split_subforums`` relabels posts from specific sub-forums as their own
    community, e.g. ``{"The_Donald": "The_Donald"}`` splits that subreddit
    off from Reddit.
    """
    platform_map = dict(platform_map or {"4chan": "/pol/", "pol": "/pol/", "reddit": "Reddit",
                                         "twitter": "Twitter", "gab": "Gab"})
    split_subforums = dict(split_subforums or {"The_Donald": "The_Donald"})
    for row in rows:
        platform = str(row[platform_field])
        community = platform_map.get(platform, platform_map.get(platform.lower(), platform))
        if subforum_field and row.get(subforum_field) in split_subforums:
            community = split_subforums[row[subforum_field]]
        yield EventRecord(as_hash(row[phash_field]), community, _parse_ts(row[timestamp_field]))


def write_events_csv(store: EventStore, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phash_hex", "community", "unix_ts"])
        for rec in store.records():
            w.writerow([to_hex(rec.phash), rec.community, repr(rec.timestamp)])


def filter_min_occurrences(store: EventStore, k: int = 5) -> EventStore:
    """Keep pHashes with at least ``k`` (deduplicated) events across all communities."""
    k = check_int_range(k, "k", 1)
    return store.subset(h for h in store.series if store.n_events(h) >= k)


@dataclass(frozen=True)
class SubsetReport:
    kept: int
    unannotated: int
    unmatched: int


def select_by_entities(
    store: EventStore,
    annotations: Mapping[int, Iterable[str]],
    entity_list: Iterable[str],
) -> tuple[EventStore, SubsetReport]:
    """pHashes whose detected entities intersect ``entity_list``.

    ``annotations`` maps pHash -> entity labels. Unannotated pHashes are
    excluded and counted separately.
    """
    wanted = set(entity_list)
    if not wanted:
        raise ConfigError("entity_list must not be empty")
    keep, unannotated, unmatched = [], 0, 0
    for h in store.series:
        ents = annotations.get(h)
        if ents is None:
            unannotated += 1
        elif wanted & set(ents):
            keep.append(h)
        else:
            unmatched += 1
    return store.subset(keep), SubsetReport(len(keep), unannotated, unmatched)


def event_count_table(stores: Mapping[str, EventStore], communities: Iterable[str] | None = None) -> list[list[str]]:
    """Rows of per-community event counts, total events and pHash count."""
    rows = []
    header = None
    for name, store in stores.items():
        comms = tuple(communities) if communities is not None else store.communities
        if header is None:
            header = ["", *comms, "Total Events", "pHashes"]
        counts = store.counts_by_community()
        rows.append([name, *(f"{counts.get(c, 0):,}" for c in comms), f"{store.total_events():,}", f"{len(store):,}"])
    return [header or ["", "Total Events", "pHashes"], *rows]


def iso_week(ts: float) -> tuple[int, int]:
    iso = datetime.fromtimestamp(ts, tz=timezone.utc).isocalendar()
    return iso[0], iso[1]


@dataclass(frozen=True)
class WeeklyShares:
    """Weekly percentages keyed by ISO (year, week).

    ``all_tweets`` and ``image_tweets_of_all`` are normalized by the total
    number of tweets; ``image_tweets`` by the total number of image tweets.
    ``image_tweets`` is empty and ``no_image_tweets`` True when there are
    no image tweets at all.
    """

    weeks: list[tuple[int, int]]
    all_tweets: dict[tuple[int, int], float]
    image_tweets_of_all: dict[tuple[int, int], float]
    image_tweets: dict[tuple[int, int], float]
    no_image_tweets: bool


def _week_range(first: tuple[int, int], last: tuple[int, int]) -> list[tuple[int, int]]:
    """Every ISO week from ``first`` to ``last`` inclusive, so quiet weeks report 0."""
    day = date.fromisocalendar(first[0], first[1], 1)
    out = []
    while (wk := day.isocalendar()[:2]) <= last:
        out.append(tuple(wk))
        day += timedelta(weeks=1)
    return out


def weekly_share_report(tweets: Iterable[tuple[float, bool]]) -> WeeklyShares:
    total: dict[tuple[int, int], int] = {}
    with_img: dict[tuple[int, int], int] = {}
    n = n_img = 0
    for ts, has_image in tweets:
        wk = iso_week(float(ts))
        total[wk] = total.get(wk, 0) + 1
        n += 1
        if has_image:
            with_img[wk] = with_img.get(wk, 0) + 1
            n_img += 1
    if n == 0:
        raise DataError("weekly_share_report needs at least one tweet")
    weeks = _week_range(min(total), max(total))
    all_share = {w: 100.0 * total.get(w, 0) / n for w in weeks}
    img_of_all = {w: 100.0 * with_img.get(w, 0) / n for w in weeks}
    img_share = {w: 100.0 * with_img.get(w, 0) / n_img for w in weeks} if n_img else {}
    return WeeklyShares(weeks, all_share, img_of_all, img_share, n_img == 0)


def weekly_report_csv(shares: WeeklyShares) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["iso_year", "iso_week", "pct_all_tweets", "pct_image_tweets_of_all", "pct_image_tweets"])
    for wk in shares.weeks:
        img = shares.image_tweets.get(wk)
        w.writerow([wk[0], wk[1], f"{shares.all_tweets[wk]:.2f}", f"{shares.image_tweets_of_all[wk]:.2f}",
                    "" if img is None else f"{img:.2f}"])
    return buf.getvalue()
