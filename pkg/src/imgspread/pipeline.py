"""Resumable pipeline stages that communicate only through files.

Every stage writes its artifact atomically (temp path + rename) and records
input file hashes, its config hash and the tool version in
``<output>/manifest.json``. Rerunning a stage whose inputs and config are
unchanged is a no-op.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import (
    DetectionCache,
    FixtureProvider,
    ImageRef,
    LiveProvider,
    annotate_clusters,
    detect_many,
    domain_popularity,
    entity_popularity,
    popularity_table,
    read_annotations_jsonl,
    write_annotations_jsonl,
)
from .cluster import cluster_corpus, cluster_stats, read_clusters_jsonl, write_clusters_jsonl
from .config import PipelineConfig
from .events import (
    IngestReport,
    event_count_table,
    filter_min_occurrences,
    read_events,
    select_by_entities,
    weekly_report_csv,
    weekly_share_report,
    write_events_csv,
)
from .exceptions import ConfigError, DataError, DependencyError, StaleArtifactError
from .graphs import Partition, cluster_similarity_graph, entity_domain_graph, export_graph, louvain, to_dot, top_degree_filter
from .hawkes import GibbsConfig, HawkesFit, InfluenceReport, fit_gibbs, rank_by_troll_influence, significance
from .hawkes.model import ExponentialKernel
from .phash import compute_phash, to_hex
from .validation import HASH_MASK, as_hash

logger = logging.getLogger(__name__)

STAGES = ("hash", "cluster", "annotate", "graph", "events", "fit", "report")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}

ARTIFACTS = {
    "hash": "hashes.jsonl",
    "cluster": "clusters.jsonl",
    "annotate": "annotations.jsonl",
    "graph": "graphs",
    "events": "events",
    "fit": "fits.jsonl",
    "report": "report",
}

# direct upstream stages, nearest first
UPSTREAM = {
    "hash": (),
    "cluster": ("hash",),
    "annotate": ("cluster", "hash"),
    "graph": ("annotate",),
    "events": (),
    "fit": ("events",),
    "report": ("fit", "events", "annotate", "cluster", "hash"),
}


def sha256_path(path: Path) -> str:
    """Content hash of a file, or of a directory's files and relative names."""
    h = hashlib.sha256()
    path = Path(path)
    if path.is_dir():
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(str(p.relative_to(path)).encode() + b"\0")
                h.update(sha256_path(p).encode())
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def atomic_path(final: Path, is_dir: bool = False):
    """Yield a temp path next to ``final``; move it into place on success."""
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    if is_dir:
        tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=f".{final.name}."))
    else:
        fd, name = tempfile.mkstemp(dir=final.parent, prefix=f".{final.name}.")
        os.close(fd)
        tmp = Path(name)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True) if is_dir else tmp.unlink(missing_ok=True)
        raise
    if is_dir:
        old = None
        if final.exists():
            old = final.with_name(f".{final.name}.old.{os.getpid()}")
            os.replace(final, old)
        os.replace(tmp, final)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
    else:
        os.replace(tmp, final)


class Manifest:
    def __init__(self, output: Path):
        self.path = Path(output) / "manifest.json"
        self.entries: dict = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self.entries = json.load(fh)

    def save(self) -> None:
        with atomic_path(self.path) as tmp:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self.entries, fh, indent=2, sort_keys=True)

    def valid_output(self, stage: str, output: Path) -> bool:
        entry = self.entries.get(stage)
        return bool(entry) and output.exists() and sha256_path(output) == entry["output_hash"]


class Pipeline:
    """Runs stages for one :class:`PipelineConfig`."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest(self.out)

    def artifact(self, stage: str) -> Path:
        return self.out / ARTIFACTS[stage]

    def _external_inputs(self, stage: str) -> dict[str, Path]:
        cfg = self.config
        if stage == "hash":
            if cfg.corpus is None or not Path(cfg.corpus).is_dir():
                raise ConfigError(f"paths.corpus must be an existing directory, got {cfg.corpus}")
            return {"corpus": Path(cfg.corpus)}
        if stage == "annotate" and cfg.provider == "fixture":
            if cfg.fixture is None or not Path(cfg.fixture).exists():
                raise ConfigError(f"paths.fixture must exist for the fixture provider, got {cfg.fixture}")
            return {"fixture": Path(cfg.fixture)}
        if stage == "events":
            if cfg.events is None or not Path(cfg.events).exists():
                raise ConfigError(f"paths.events must exist, got {cfg.events}")
            if cfg.window is None:
                raise ConfigError("events.window_start / window_end are required")
            return {"events": Path(cfg.events)}
        if stage == "report" and cfg.tweets is not None:
            return {"tweets": Path(cfg.tweets)}
        return {}

    def input_hashes(self, stage: str) -> dict[str, str]:
        hashes = {}
        for dep in UPSTREAM[stage]:
            path = self.artifact(dep)
            if not self.manifest.valid_output(dep, path):
                raise DependencyError(dep, f"{path} is missing or was not produced by the pipeline")
            hashes[dep] = self.manifest.entries[dep]["output_hash"]
        for name, path in self._external_inputs(stage).items():
            hashes[name] = sha256_path(path)
        return hashes

    def run(self, stage: str, force: bool = False) -> str:
        """Run one stage; returns ``"ran"`` or ``"skipped"``."""
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
        inputs = self.input_hashes(stage)
        config_hash = self.config.stage_hash(stage)
        output = self.artifact(stage)
        entry = self.manifest.entries.get(stage)
        if entry and self.manifest.valid_output(stage, output) and not force:
            if entry["config_hash"] != config_hash:
                raise StaleArtifactError(
                    f"stage {stage!r} artifact was built with a different configuration; rerun with --force"
                )
            if entry["inputs"] == inputs:
                logger.info("stage %s up to date", stage)
                return "skipped"
        t0 = time.time()
        is_dir = ARTIFACTS[stage] in ("graphs", "events", "report")
        with atomic_path(output, is_dir=is_dir) as tmp:
            getattr(self, f"_stage_{stage}")(tmp)
        self.manifest.entries[stage] = {
            "inputs": inputs,
            "config_hash": config_hash,
            "tool_version": __version__,
            "output": ARTIFACTS[stage],
            "output_hash": sha256_path(output),
            "seconds": round(time.time() - t0, 3),
        }
        self.manifest.save()
        return "ran"

    def run_all(self, force: bool = False) -> dict[str, str]:
        return {stage: self.run(stage, force) for stage in STAGES}

    # -- loaders -----------------------------------------------------------

    def load_hashes(self) -> dict[str, int]:
        out = {}
        with open(self.artifact("hash"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    out[rec["id"]] = as_hash(rec["phash"])
        return out

    def load_clustering(self):
        return read_clusters_jsonl(self.artifact("cluster"), self.load_hashes())

    def phash_entities(self) -> dict[int, frozenset[str]]:
        """Entity set of every clustered image hash, via its cluster's detection."""
        hashes = self.load_hashes()
        clustering = self.load_clustering()
        ann = {a.cluster_id: a for a in read_annotations_jsonl(self.artifact("annotate"))}
        out: dict[int, set[str]] = {}
        for c in clustering.clusters:
            for m in c.members:
                out.setdefault(hashes[m], set()).update(ann[c.id].entities)
        return {h: frozenset(v) for h, v in out.items()}

    def load_store(self):
        cfg = self.config
        return read_events(self.artifact("events") / "events.csv", cfg.window, cfg.communities)

    def load_fits(self) -> dict[int, HawkesFit]:
        fits = {}
        with open(self.artifact("fit"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    fits[as_hash(rec["phash"])] = HawkesFit.from_record(rec)
        return fits

    # -- stages ------------------------------------------------------------

    def _stage_hash(self, tmp: Path) -> None:
        corpus = Path(self.config.corpus)
        files = sorted(p for p in corpus.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        with open(tmp, "w", encoding="utf-8") as fh:
            for p in files:
                rec = {"id": p.relative_to(corpus).as_posix(), "phash": to_hex(compute_phash(p))}
                fh.write(json.dumps(rec) + "\n")

    def _stage_cluster(self, tmp: Path) -> None:
        clustering = cluster_corpus(self.load_hashes(), self.config.eps, self.config.min_samples)
        write_clusters_jsonl(clustering, tmp)

    def _provider(self):
        if self.config.provider == "fixture":
            return FixtureProvider(self.config.fixture)
        return LiveProvider()

    def _stage_annotate(self, tmp: Path) -> None:
        hashes = self.load_hashes()
        clustering = self.load_clustering()
        corpus = Path(self.config.corpus) if self.config.corpus else None
        refs = [
            ImageRef(c.medoid, corpus / c.medoid if corpus else None, phash=hashes[c.medoid])
            for c in clustering.clusters
        ]
        cache = DetectionCache(self.config.cache)
        by_image = detect_many(refs, self._provider(), cache, self.config.annotate_workers)
        detections = {c.id: by_image[c.medoid] for c in clustering.clusters}
        write_annotations_jsonl(annotate_clusters(clustering, detections), tmp)

    def _stage_graph(self, tmp: Path) -> None:
        annotated = read_annotations_jsonl(self.artifact("annotate"))
        seed = self.config.seed
        summary = {}
        sim = cluster_similarity_graph(annotated, self.config.threshold)
        bip = entity_domain_graph(annotated)
        for name, graph in (("cluster_similarity", sim), ("entity_domain", bip)):
            if not graph.nodes:
                summary[name] = {"nodes": 0, "edges": 0, "communities": 0, "modularity": 0.0}
                export_graph(graph, Partition({}, 0.0), tmp / f"{name}.gexf")
                continue
            part = louvain(graph, seed)
            export_graph(graph, part, tmp / f"{name}.gexf")
            (tmp / f"{name}.dot").write_text(to_dot(graph, part), encoding="utf-8")
            shown = top_degree_filter(graph, self.config.fraction)
            shown_part = Partition({n: part.community_of[n] for n in shown.nodes}, part.modularity)
            export_graph(shown, shown_part, tmp / f"{name}.top.gexf")
            summary[name] = {
                "nodes": len(graph.nodes),
                "edges": len(graph.edges),
                "communities": part.n_communities,
                "modularity": part.modularity,
                "shown_nodes": len(shown.nodes),
            }
        (tmp / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    def _stage_events(self, tmp: Path) -> None:
        cfg = self.config
        report = IngestReport()
        store = read_events(cfg.events, cfg.window, cfg.communities, report)
        kept = filter_min_occurrences(store, cfg.min_occurrences)
        write_events_csv(kept, tmp / "events.csv")
        (tmp / "rejects.txt").write_text("".join(r + "\n" for r in report.rejects), encoding="utf-8")
        summary = {
            "ingest": report.to_json(),
            "phashes_ingested": len(store),
            "phashes_kept": len(kept),
            "events_kept": kept.total_events(),
            "events_by_community": kept.counts_by_community(),
        }
        (tmp / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    def _stage_fit(self, tmp: Path) -> None:
        cfg = self.config
        store = self.load_store()
        gibbs = dict(
            n_burnin=cfg.n_burnin,
            n_samples=cfg.n_samples,
            background_prior=tuple(cfg.background_prior),
            weight_prior=tuple(cfg.weight_prior),
            kernel=ExponentialKernel(cfg.tau, cfg.max_lag),
            keep_samples=False,
        )
        jobs = [(h, store.hours(h), store.horizon_hours, gibbs, cfg.seed) for h in store.phashes]
        if cfg.fit_workers > 1:
            with ProcessPoolExecutor(cfg.fit_workers) as pool:
                records = list(pool.map(_fit_one, jobs, chunksize=8))
        else:
            records = [_fit_one(j) for j in jobs]
        with open(tmp, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")

    def _stage_report(self, tmp: Path) -> None:
        cfg = self.config
        clustering = self.load_clustering()
        annotated = read_annotations_jsonl(self.artifact("annotate"))
        store = self.load_store()
        fits = self.load_fits()
        comms = list(cfg.communities)

        _write_rows(tmp / "cluster_stats.csv", _cluster_stats_rows(cluster_stats(clustering)))
        _write_rows(tmp / "top_entities.csv", popularity_table(entity_popularity(annotated), "Top entity", cfg.top))
        _write_rows(tmp / "top_domains.csv", popularity_table(domain_popularity(annotated), "Domain", cfg.top))

        entities = self.phash_entities()
        groups = {}
        subset_reports = {}
        for name, ents in cfg.subsets.items():
            sub, rep = select_by_entities(store, entities, ents)
            groups[name] = sub
            subset_reports[name] = rep.__dict__
        groups["All images"] = store
        _write_rows(tmp / "events_table.csv", event_count_table(groups, comms))

        summary = {"subsets": subset_reports, "reports": {}}
        src = comms.index(cfg.source)
        for name, sub in groups.items():
            sub_fits = {h: fits[h] for h in sub.phashes if h in fits}
            if not sub_fits:
                continue
            rep = InfluenceReport.from_fits(list(sub_fits.values()), comms)
            slug = _slug(name)
            (tmp / f"influence_{slug}.csv").write_text(rep.matrix_csv("influence"), encoding="utf-8")
            (tmp / f"efficiency_{slug}.csv").write_text(rep.matrix_csv("efficiency"), encoding="utf-8")
            summary["reports"][name] = rep.to_json()
            ranked = rank_by_troll_influence(sub_fits, src)[: cfg.top]
            _write_rows(tmp / f"most_influential_{slug}.csv", [["rank", "phash"], *([i + 1, to_hex(h)] for i, h in enumerate(ranked))])

        names = list(cfg.subsets)
        if len(names) >= 2:
            a, b = names[0], names[1]
            fa = [fits[h] for h in groups[a].phashes if h in fits]
            fb = [fits[h] for h in groups[b].phashes if h in fits]
            if fa and fb:
                pvals, stars = significance(fa, fb, cfg.alpha)
                for label, g in ((a, fa), (b, fb)):
                    rep = InfluenceReport.from_fits(g, comms)
                    (tmp / f"influence_{_slug(label)}.csv").write_text(rep.matrix_csv("influence", stars), encoding="utf-8")
                summary["significance"] = {
                    "groups": [a, b],
                    "alpha": cfg.alpha,
                    "p_values": [[None if not np.isfinite(p) else float(p) for p in row] for row in pvals],
                }

        if cfg.tweets is not None:
            (tmp / "weekly_shares.csv").write_text(weekly_report_csv(weekly_share_report(_read_tweets(cfg.tweets))), encoding="utf-8")
        (tmp / "report.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")


def _fit_one(job) -> dict:
    h, hours, horizon, gibbs, seed = job
    config = GibbsConfig(seed=(seed ^ h) & HASH_MASK, **gibbs)
    fit = fit_gibbs(hours, horizon, config)
    return {"phash": to_hex(h), **fit.to_record()}


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name.lower()).strip("_")


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _cluster_stats_rows(stats):
    x, y = stats.cdf()
    rows = [["clusters", stats.n_clusters], ["images", stats.n_images], ["noise", stats.n_noise],
            ["mean_unique_per_cluster", f"{stats.mean_unique:.2f}"], ["median_unique_per_cluster", f"{stats.median_unique:g}"],
            [], ["unique_images", "cdf"]]
    rows.extend([f"{a:g}", f"{b:.4f}"] for a, b in zip(x, y))
    return rows


def _read_tweets(path):
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                yield float(row["timestamp"]), row["has_image"].strip().lower() in ("1", "true", "yes")
            except (KeyError, ValueError) as exc:
                raise DataError(f"malformed tweets row {row}: {exc}") from exc
