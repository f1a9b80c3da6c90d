"""Command-line entry point.

Exit codes: 0 ok, 2 configuration error, 3 dependency/stale-artifact error,
4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ImgSpreadError

logger = logging.getLogger("imgspread")


def _cmd_run(args) -> int:
    from .config import load_config
    from .pipeline import STAGES, Pipeline

    cfg = load_config(args.config).with_overrides(
        eps=args.eps, min_samples=args.min_samples, threshold=args.threshold, fraction=args.fraction, seed=args.seed
    )
    pipe = Pipeline(cfg)
    stages = STAGES if args.stage == "all" else (args.stage,)
    for stage in stages:
        status = pipe.run(stage, force=args.force)
        print(f"{stage}: {status}")
    return 0


def _cmd_hash(args) -> int:
    from .phash import compute_phash, to_hex

    for path in args.images:
        print(f"{to_hex(compute_phash(path))}  {path}")
    return 0


def _window(values, store_path=None):
    from .events import _parse_ts

    if values:
        return _parse_ts(values[0]), _parse_ts(values[1])
    # default: span of the stored events
    import csv

    with open(store_path, encoding="utf-8", newline="") as fh:
        ts = [float(r["unix_ts"]) for r in csv.DictReader(fh)]
    if not ts:
        return 0.0, 1.0
    return min(ts), max(ts) + 1.0


def _write_store(store, output: Path, report=None) -> None:
    from .events import write_events_csv

    output.parent.mkdir(parents=True, exist_ok=True)
    write_events_csv(store, output)
    summary = {
        "phashes": len(store),
        "events": store.total_events(),
        "events_by_community": store.counts_by_community(),
    }
    if report is not None:
        summary["ingest"] = report.to_json()
        output.with_suffix(".rejects.txt").write_text("".join(r + "\n" for r in report.rejects), encoding="utf-8")
    output.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    print(json.dumps(summary))


def _communities(text):
    from .events import DEFAULT_COMMUNITIES

    return tuple(c.strip() for c in text.split(",")) if text else DEFAULT_COMMUNITIES


def _cmd_events(args) -> int:
    from .events import IngestReport, filter_min_occurrences, read_events, select_by_entities
    from .validation import as_hash

    comms = _communities(args.communities)
    if args.events_cmd == "ingest":
        report = IngestReport()
        store = read_events(args.input, _window(args.window), comms, report)
        _write_store(store, Path(args.output), report)
        return 0
    store = read_events(args.input, _window(args.window, args.input), comms)
    if args.events_cmd == "filter":
        _write_store(filter_min_occurrences(store, args.min_k), Path(args.output))
        return 0
    entities = [line.strip() for line in Path(args.entities).read_text(encoding="utf-8").splitlines() if line.strip()]
    with open(args.annotations, encoding="utf-8") as fh:
        ann = {as_hash(k): v for k, v in json.load(fh).items()}
    sub, rep = select_by_entities(store, ann, entities)
    _write_store(sub, Path(args.output))
    print(json.dumps(rep.__dict__))
    return 0


def _cmd_fixture(args) -> int:
    from .fixtures import make_synthetic_fixture

    truth = make_synthetic_fixture(args.directory, seed=args.seed)
    print(f"wrote {truth['n_images']} images and {int(sum(truth['n_events']))} events to {args.directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imgspread", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pipeline stage (or 'all')")
    run.add_argument("stage", choices=["hash", "cluster", "annotate", "graph", "events", "fit", "report", "all"])
    run.add_argument("--config", required=True, help="pipeline INI file")
    run.add_argument("--force", action="store_true", help="rebuild even if the artifact is current or stale")
    run.add_argument("--eps", type=int)
    run.add_argument("--min-samples", type=int)
    run.add_argument("--threshold", type=float, help="Jaccard edge threshold")
    run.add_argument("--fraction", type=float, help="fraction of top-degree nodes to keep")
    run.add_argument("--seed", type=int)
    run.set_defaults(func=_cmd_run)

    h = sub.add_parser("hash", help="print perceptual hashes of image files")
    h.add_argument("images", nargs="+")
    h.set_defaults(func=_cmd_hash)

    ev = sub.add_parser("events", help="event-store utilities")
    ev_sub = ev.add_subparsers(dest="events_cmd", required=True)
    ing = ev_sub.add_parser("ingest")
    ing.add_argument("--input", required=True)
    ing.add_argument("--window", nargs=2, metavar=("START", "END"), required=True)
    ing.add_argument("--output", default="events.csv")
    flt = ev_sub.add_parser("filter")
    flt.add_argument("--input", required=True)
    flt.add_argument("--min-k", type=int, default=5)
    flt.add_argument("--output", default="events.filtered.csv")
    sbs = ev_sub.add_parser("subset")
    sbs.add_argument("--input", required=True)
    sbs.add_argument("--entities", required=True, help="file with one entity label per line")
    sbs.add_argument("--annotations", required=True, help="JSON object {phash_hex: [entity, ...]}")
    sbs.add_argument("--output", default="events.subset.csv")
    for sp in (ing, flt, sbs):
        sp.add_argument("--communities", help="comma-separated community labels")
        if sp is not ing:
            sp.add_argument("--window", nargs=2, metavar=("START", "END"))
    ev.set_defaults(func=_cmd_events)

    fx = sub.add_parser("fixture", help="write the synthetic end-to-end fixture")
    fx.add_argument("directory")
    fx.add_argument("--seed", type=int, default=0)
    fx.set_defaults(func=_cmd_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ImgSpreadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
