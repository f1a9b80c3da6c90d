"""Pipeline configuration loaded from an INI-style key-value file.

Example::

    [paths]
    corpus = images
    events = events.csv
    tweets = tweets.csv            ; optional, enables the weekly report
    fixture = annotations.json     ; offline web-detection answers
    cache = cache
    output = out

    [cluster]
    eps = 8
    min_samples = 2

    [annotate]
    provider = fixture             ; or "live"
    workers = 4

    [graph]
    threshold = 0.4
    fraction = 0.3

    [events]
    window_start = 2016-07-01T00:00:00Z
    window_end = 2017-08-01T00:00:00Z
    communities = /pol/, Reddit, Twitter, Gab, The_Donald, Trolls
    min_occurrences = 5

    [hawkes]
    tau = 1.0
    max_lag = 24.0
    background_prior = 1.0, 1.0
    weight_prior = 1.0, 5.0
    n_burnin = 500
    n_samples = 1500
    workers = 1

    [report]
    source = Trolls
    alpha = 0.01
    top = 20

    [subsets]
    Republican Party-related Images = Republican Party; Donald Trump
    Democratic Party-related Images = Democratic Party; Hillary Clinton; Barack Obama

    [run]
    seed = 0

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .events import DEFAULT_COMMUNITIES, _parse_ts
from .exceptions import ConfigError
from .validation import check_int_range, check_real_range

DEFAULT_SUBSETS = {
    "Republican Party-related Images": ("Republican Party", "Donald Trump"),
    "Democratic Party-related Images": ("Democratic Party", "Hillary Clinton", "Barack Obama"),
}


@dataclass(frozen=True)
class PipelineConfig:
    corpus: Path | None = None
    events: Path | None = None
    tweets: Path | None = None
    fixture: Path | None = None
    cache: Path = Path("cache")
    output: Path = Path("out")
    eps: int = 8
    min_samples: int = 2
    provider: str = "fixture"
    annotate_workers: int = 4
    threshold: float = 0.4
    fraction: float = 0.3
    window: tuple[float, float] | None = None
    communities: tuple[str, ...] = DEFAULT_COMMUNITIES
    min_occurrences: int = 5
    tau: float = 1.0
    max_lag: float = 24.0
    background_prior: tuple[float, float] = (1.0, 1.0)
    weight_prior: tuple[float, float] = (1.0, 5.0)
    n_burnin: int = 500
    n_samples: int = 1500
    fit_workers: int = 1
    source: str = "Trolls"
    alpha: float = 0.01
    top: int = 20
    subsets: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_SUBSETS))
    seed: int = 0

    def __post_init__(self):
        check_int_range(self.eps, "eps", 0, 64)
        check_int_range(self.min_samples, "min_samples", 1)
        if self.provider not in ("fixture", "live"):
            raise ConfigError(f"annotate.provider must be 'fixture' or 'live', got {self.provider!r}")
        check_real_range(self.threshold, "threshold", 0.0, 1.0)
        check_real_range(self.fraction, "fraction", 0.0, 1.0, low_inclusive=False)
        check_int_range(self.min_occurrences, "min_occurrences", 1)
        check_real_range(self.tau, "tau", 0.0, low_inclusive=False)
        check_real_range(self.max_lag, "max_lag", 0.0, low_inclusive=False)
        check_int_range(self.n_burnin, "n_burnin", 0)
        check_int_range(self.n_samples, "n_samples", 1)
        check_real_range(self.alpha, "alpha", 0.0, 1.0)
        if self.window is not None and not self.window[1] > self.window[0]:
            raise ConfigError("events window end must follow its start")
        if self.source not in self.communities:
            raise ConfigError(f"report.source {self.source!r} is not a declared community")
        for name, ents in self.subsets.items():
            if not ents:
                raise ConfigError(f"subset {name!r} has no entities")

    # fields each stage's output depends on; drives the stale-artifact check
    STAGE_FIELDS = {
        "hash": (),
        "cluster": ("eps", "min_samples"),
        "annotate": ("provider",),
        "graph": ("threshold", "fraction", "seed"),
        "events": ("window", "communities", "min_occurrences"),
        "fit": ("communities", "tau", "max_lag", "background_prior", "weight_prior", "n_burnin", "n_samples", "seed"),
        "report": ("communities", "source", "alpha", "top", "subsets"),
    }

    def stage_hash(self, stage: str) -> str:
        values = {}
        for name in self.STAGE_FIELDS[stage]:
            v = getattr(self, name)
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            elif isinstance(v, tuple):
                v = [int(x) if isinstance(x, float) and x.is_integer() else x for x in v]
            elif isinstance(v, dict):
                v = {k: sorted(x) for k, x in v.items()}
            values[name] = v
        blob = json.dumps({"stage": stage, **values}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> PipelineConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_json(self) -> dict:
        out = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in out.items()}


def _pair(text: str, name: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{name} needs two comma-separated numbers")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{name} needs two comma-separated numbers") from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str  # keep subset names verbatim
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    base = path.parent
    kw: dict = {}

    def get(section, key, conv=str):
        if cp.has_option(section, key):
            raw = cp.get(section, key).strip()
            try:
                return conv(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {conv.__name__}") from None
        return None

    for key in ("corpus", "events", "tweets", "fixture", "cache", "output"):
        v = get("paths", key)
        if v:
            kw[key] = (base / v).resolve()
    kw["eps"] = get("cluster", "eps", int)
    kw["min_samples"] = get("cluster", "min_samples", int)
    kw["provider"] = get("annotate", "provider")
    kw["annotate_workers"] = get("annotate", "workers", int)
    kw["threshold"] = get("graph", "threshold", float)
    kw["fraction"] = get("graph", "fraction", float)
    start, end = get("events", "window_start"), get("events", "window_end")
    if (start is None) != (end is None):
        raise ConfigError("events.window_start and window_end must be given together")
    if start is not None:
        try:
            kw["window"] = (_parse_ts(start), _parse_ts(end))
        except ValueError as exc:
            raise ConfigError(f"bad events window: {exc}") from exc
    comms = get("events", "communities")
    if comms:
        kw["communities"] = tuple(c.strip() for c in comms.split(",") if c.strip())
    kw["min_occurrences"] = get("events", "min_occurrences", int)
    kw["tau"] = get("hawkes", "tau", float)
    kw["max_lag"] = get("hawkes", "max_lag", float)
    if get("hawkes", "background_prior"):
        kw["background_prior"] = _pair(get("hawkes", "background_prior"), "background_prior")
    if get("hawkes", "weight_prior"):
        kw["weight_prior"] = _pair(get("hawkes", "weight_prior"), "weight_prior")
    kw["n_burnin"] = get("hawkes", "n_burnin", int)
    kw["n_samples"] = get("hawkes", "n_samples", int)
    kw["fit_workers"] = get("hawkes", "workers", int)
    kw["source"] = get("report", "source")
    kw["alpha"] = get("report", "alpha", float)
    kw["top"] = get("report", "top", int)
    if cp.has_section("subsets"):
        kw["subsets"] = {
            name: tuple(e.strip() for e in value.split(";") if e.strip()) for name, value in cp.items("subsets")
        }
    kw["seed"] = get("run", "seed", int)
    return PipelineConfig(**{k: v for k, v in kw.items() if v is not None})
