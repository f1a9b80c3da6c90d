"""Deterministic synthetic corpus for end-to-end runs.

``make_synthetic_fixture`` writes 50 images (15 planted near-duplicate
triples plus 5 singletons), an offline web-detection fixture, occurrence
events simulated from a known six-process Hawkes model, a tweet stream,
a ready-to-run ``pipeline.ini`` and ``ground_truth.json``.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path

import numpy as np
from PIL import Image

from .events import DEFAULT_COMMUNITIES
from .hawkes.model import HawkesModel, simulate
from .phash import compute_phash, hamming, to_hex

WINDOW_START = datetime(2016, 7, 1, tzinfo=timezone.utc).timestamp()
HORIZON_HOURS = 2000.0

# order: /pol/, Reddit, Twitter, Gab, The_Donald, Trolls
PLANTED_BACKGROUND = np.array([0.010, 0.010, 0.020, 0.004, 0.004, 0.008])
PLANTED_WEIGHTS = np.array(
    [
        [0.10, 0.04, 0.04, 0.04, 0.02, 0.01],
        [0.03, 0.12, 0.05, 0.03, 0.05, 0.01],
        [0.02, 0.04, 0.15, 0.03, 0.02, 0.02],
        [0.03, 0.02, 0.03, 0.10, 0.02, 0.01],
        [0.04, 0.15, 0.08, 0.10, 0.10, 0.02],
        [0.02, 0.08, 0.20, 0.06, 0.06, 0.10],
    ]
)

TOPICS = [
    ([("Donald Trump", 0.92), ("Republican Party", 0.61), ("U.S.A.", 0.40)],
     ["https://twitter.com/a/1", "https://www.pinterest.com/pin/1", "https://foo.blogspot.com/p"]),
    ([("Hillary Clinton", 0.88), ("Democratic Party", 0.57), ("U.S.A.", 0.33)],
     ["https://twitter.com/b/2", "https://ria.ru/news/2", "https://www.youtube.com/watch?v=2"]),
    ([("Russia", 0.95), ("Vladimir Putin", 0.71)],
     ["https://ria.ru/x", "https://riafan.ru/y", "https://www.pinterest.co.uk/pin/3"]),
    ([("Barack Obama", 0.90), ("Democratic Party", 0.45)],
     ["https://twitter.com/c/3", "https://www.pinterest.com/pin/4"]),
    ([("Car", 0.80), ("Advertising", 0.35)],
     ["https://www.pinterest.com/pin/5"]),
    ([("Meme", 0.70), ("Illustration", 0.50)],
     ["https://me.me/i/6", "https://www.pinterest.com/pin/6"]),
]


def _base_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size, 3))
    for _ in range(4):
        fx, fy = rng.uniform(0.5, 4.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(20, 60, 3)
        img += amp * np.cos(2 * np.pi * (fx * x + fy * y) + phase)[..., None]
    for _ in range(3):
        x0, y0 = rng.integers(0, size - 16, 2)
        w, h = rng.integers(8, 24, 2)
        img[y0:y0 + h, x0:x0 + w] += rng.uniform(-60, 60, 3)
    img -= img.min()
    img *= 255.0 / max(img.max(), 1e-9)
    return np.clip(img, 0, 255).astype(np.uint8)


def _png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _variants(arr: np.ndarray) -> list[np.ndarray]:
    img = Image.fromarray(arr)
    w, h = img.size
    scaled = np.asarray(img.resize((int(w * 0.9), int(h * 0.9)), Image.Resampling.BILINEAR))
    brighter = np.clip(arr.astype(int) + 8, 0, 255).astype(np.uint8)
    return [scaled, brighter]


def make_synthetic_fixture(root, seed: int = 0, n_groups: int = 15, n_singletons: int = 5) -> dict:
    """Write the fixture under ``root`` and return the ground truth."""
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    bases, base_hashes = [], []
    while len(bases) < n_groups + n_singletons:
        arr = _base_image(rng)
        h = compute_phash(arr)
        # keep bases far apart so planted groups never merge
        if all(hamming(h, o) > 20 for o in base_hashes):
            variants = _variants(arr) if len(bases) < n_groups else []
            if all(hamming(h, compute_phash(v)) <= 4 for v in variants):
                bases.append((arr, variants))
                base_hashes.append(h)

    groups, hashes = [], {}
    for g, (arr, variants) in enumerate(bases):
        members = []
        for v, img in enumerate([arr, *variants]):
            name = f"img{g:02d}_{v}.png"
            data = _png(img)
            (images_dir / name).write_bytes(data)
            hashes[name] = compute_phash(data)
            members.append(name)
        groups.append(members)

    fixture = {}
    topic_of_group = {}
    for g, members in enumerate(groups):
        topic = g % len(TOPICS)
        topic_of_group[g] = topic
        ents, urls = TOPICS[topic]
        for m in members:
            fixture[to_hex(hashes[m])] = {
                "entities": [[e, s] for e, s in ents],
                "full_match_urls": urls[:1],
                "page_urls": urls[1:],
            }
    (root / "annotations.json").write_text(json.dumps(fixture, indent=1, sort_keys=True), encoding="utf-8")

    model = HawkesModel(PLANTED_BACKGROUND, PLANTED_WEIGHTS)
    k = model.n_processes
    C_true = np.zeros((k, k))
    B_true = np.zeros(k)
    N_true = np.zeros(k)
    rows = []
    unique_hashes = sorted(set(hashes.values()))
    for i, h in enumerate(unique_hashes):
        sim = simulate(model, HORIZON_HOURS, seed=seed * 100_003 + i)
        C, B = sim.true_counts()
        if sim.n_events.sum() >= 5:
            C_true += C
            B_true += B
            N_true += sim.n_events
        for d, times in enumerate(sim.times):
            for t in times:
                rows.append([to_hex(h), DEFAULT_COMMUNITIES[d], repr(WINDOW_START + float(t) * 3600.0)])
    rows.sort(key=lambda r: (float(r[2]), r[0], r[1]))
    with open(root / "events.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phash_hex", "community", "unix_ts"])
        w.writerows(rows)
        # rejects: malformed, out of window, unknown community
        fh.write("not-a-hash,Twitter,1467331200\n")
        fh.write("00ff,Twitter\n")
        w.writerow([to_hex(unique_hashes[0]), "Twitter", repr(WINDOW_START - 3600.0)])
        w.writerow([to_hex(unique_hashes[0]), "MySpace", repr(WINDOW_START + 3600.0)])

    with open(root / "tweets.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "has_image"])
        for t in np.sort(rng.uniform(0, HORIZON_HOURS, 500)):
            p_img = 0.2 + 0.5 * t / HORIZON_HOURS
            w.writerow([repr(WINDOW_START + float(t) * 3600.0), int(rng.random() < p_img)])

    window_end = WINDOW_START + HORIZON_HOURS * 3600.0
    fmt = "%Y-%m-%dT%H:%M:%SZ"
    (root / "pipeline.ini").write_text(
        "\n".join(
            [
                "[paths]",
                "corpus = images",
                "events = events.csv",
                "tweets = tweets.csv",
                "fixture = annotations.json",
                "cache = cache",
                "output = out",
                "",
                "[cluster]",
                "eps = 8",
                "min_samples = 2",
                "",
                "[annotate]",
                "provider = fixture",
                "",
                "[events]",
                f"window_start = {datetime.fromtimestamp(WINDOW_START, timezone.utc).strftime(fmt)}",
                f"window_end = {datetime.fromtimestamp(window_end, timezone.utc).strftime(fmt)}",
                "communities = " + ", ".join(DEFAULT_COMMUNITIES),
                "min_occurrences = 5",
                "",
                "[hawkes]",
                "n_burnin = 100",
                "n_samples = 300",
                "",
                "[run]",
                f"seed = {seed}",
                "",
            ]
        ),
        encoding="utf-8",
    )

    trolls = DEFAULT_COMMUNITIES.index("Trolls")
    off = [d for d in range(k) if d != trolls]
    truth = {
        "communities": list(DEFAULT_COMMUNITIES),
        "background": PLANTED_BACKGROUND.tolist(),
        "weights": PLANTED_WEIGHTS.tolist(),
        "horizon_hours": HORIZON_HOURS,
        "groups": groups,
        "planted_pairs_max_hamming": max(
            hamming(hashes[a], hashes[b]) for g in groups for a, b in combinations(g, 2)
        ) if any(len(g) > 1 for g in groups) else 0,
        "true_counts": C_true.tolist(),
        "true_background": B_true.tolist(),
        "n_events": N_true.tolist(),
        "trolls_external_efficiency": float(C_true[trolls, off].sum() / N_true[trolls]),
        "trolls_planted_external_weight": float(PLANTED_WEIGHTS[trolls, off].sum()),
        "n_images": len(hashes),
        "n_unique_hashes": len(unique_hashes),
    }
    (root / "ground_truth.json").write_text(json.dumps(truth, indent=2), encoding="utf-8")
    return truth
