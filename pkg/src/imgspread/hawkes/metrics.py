"""Influence and efficiency matrices, KS significance and image ranking.

All matrices are indexed ``[source, destination]``. Aggregation over many
per-pHash fits sums attributed counts and event counts before dividing.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from ..exceptions import StatError
from ..phash import to_hex


def _as_list(fits) -> list:
    if hasattr(fits, "counts"):
        return [fits]
    fits = list(fits.values()) if isinstance(fits, Mapping) else list(fits)
    if not fits:
        raise StatError("no fits to aggregate")
    return fits


def aggregate(fits) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Summed ``(C, B, N)`` over one or many fits."""
    fits = _as_list(fits)
    C = np.sum([f.counts for f in fits], axis=0)
    B = np.sum([f.background_counts for f in fits], axis=0)
    N = np.sum([f.n_events for f in fits], axis=0).astype(float)
    return C, B, N


def _safe_div(num, den):
    den = np.asarray(den, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.asarray(num, dtype=float) / den
    return np.where(den > 0, out, np.nan)


def influence(fits) -> np.ndarray:
    """``100 * C[s, d] / N[d]``; NaN (null) where destination ``d`` has no events."""
    C, _, N = aggregate(fits)
    return 100.0 * _safe_div(C, N[None, :])


def background_share(fits) -> np.ndarray:
    _, B, N = aggregate(fits)
    return 100.0 * _safe_div(B, N)


def efficiency(fits, event_counts: Sequence[float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-source-event efficiency and external efficiency, in percent.

    ``efficiency[s, d] = 100 * C[s, d] / N[s]`` and
    ``external[s] = 100 * sum_{d != s} C[s, d] / N[s]``. Rows with
    ``N[s] == 0`` are NaN.
    """
    C, _, N = aggregate(fits)
    if event_counts is not None:
        N = np.asarray(event_counts, dtype=float)
    eff = 100.0 * _safe_div(C, N[:, None])
    off_diag = C.sum(axis=1) - np.diag(C)
    ext = 100.0 * _safe_div(off_diag, N)
    return eff, ext


@dataclass(frozen=True)
class InfluenceReport:
    communities: tuple[str, ...]
    influence: np.ndarray
    background: np.ndarray
    efficiency: np.ndarray
    external_efficiency: np.ndarray
    n_events: np.ndarray
    n_fits: int

    @classmethod
    def from_fits(cls, fits, communities: Sequence[str]) -> InfluenceReport:
        fits = _as_list(fits)
        eff, ext = efficiency(fits)
        return cls(tuple(communities), influence(fits), background_share(fits), eff, ext,
                   aggregate(fits)[2], len(fits))

    def destination_totals(self) -> np.ndarray:
        """Background share plus all source shares, per destination (100 or NaN)."""
        return self.background + np.nansum(self.influence, axis=0)

    def to_json(self) -> dict:
        def clean(a):
            return [clean(x) for x in a] if np.ndim(a) else (None if not math.isfinite(a) else float(a))

        return {
            "communities": list(self.communities),
            "influence": clean(self.influence),
            "background": clean(self.background),
            "efficiency": clean(self.efficiency),
            "external_efficiency": clean(self.external_efficiency),
            "n_events": clean(self.n_events),
            "n_fits": self.n_fits,
        }

    def matrix_csv(self, which: str = "influence", stars: np.ndarray | None = None, digits: int = 1) -> str:
        """Source rows x destination columns; the efficiency table gains an
        ``External`` column and the influence table a ``Background`` row."""
        mat = getattr(self, which)
        buf = io.StringIO()
        w = csv.writer(buf)
        header = ["source \\ destination", *self.communities]
        if which == "efficiency":
            header.append("External")
        w.writerow(header)

        def cell(v, star=False):
            if not math.isfinite(v):
                return "null"
            return f"{v:.{digits}f}" + ("*" if star else "")

        for s, name in enumerate(self.communities):
            row = [name] + [cell(mat[s, d], stars is not None and bool(stars[s, d])) for d in range(len(self.communities))]
            if which == "efficiency":
                row.append(cell(self.external_efficiency[s]))
            w.writerow(row)
        if which == "influence":
            w.writerow(["Background", *(cell(v) for v in self.background)])
        return buf.getvalue()


def ks_two_sample(a: Iterable[float], b: Iterable[float]) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``p = Q_KS(sqrt(n_a * n_b / (n_a + n_b)) * D)`` with ``Q_KS`` the
    Kolmogorov survival function.
    """
    a = np.sort(np.asarray(list(a), dtype=float))
    b = np.sort(np.asarray(list(b), dtype=float))
    if a.size == 0 or b.size == 0:
        raise StatError("KS test needs two non-empty samples")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise StatError("KS samples must be finite")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = a.size * b.size / (a.size + b.size)
    p = float(kolmogorov(math.sqrt(en) * d)) if d > 0 else 1.0
    return d, min(1.0, max(0.0, p))


def per_fit_influence(fits, source: int, dest: int) -> np.ndarray:
    """Influence ``source -> dest`` of each fit with events on ``dest``."""
    vals = [100.0 * f.counts[source, dest] / f.n_events[dest] for f in _as_list(fits) if f.n_events[dest] > 0]
    return np.asarray(vals, dtype=float)


def significance(fits_a, fits_b, alpha: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Cellwise KS p-values between two groups of fits and the ``p < alpha`` mask.

    Cells where either group has no fits with destination events get NaN.
    """
    fa, fb = _as_list(fits_a), _as_list(fits_b)
    k = fa[0].n_processes
    pvals = np.full((k, k), np.nan)
    for s in range(k):
        for d in range(k):
            xa, xb = per_fit_influence(fa, s, d), per_fit_influence(fb, s, d)
            if xa.size and xb.size:
                pvals[s, d] = ks_two_sample(xa, xb)[1]
    with np.errstate(invalid="ignore"):
        return pvals, pvals < alpha


def external_influence(fit, source: int) -> float:
    """Share of events on other processes attributed to ``source`` (0 if none)."""
    mask = np.arange(fit.n_processes) != source
    den = float(fit.n_events[mask].sum())
    return float(fit.counts[source, mask].sum() / den) if den > 0 else 0.0


def rank_by_troll_influence(fits: Mapping[int, object], source: int) -> list[int]:
    """pHashes ordered by ``source``'s external influence, highest first.

    Ties are broken by the hex form of the pHash.
    """
    scored = [(external_influence(f, source), h) for h, f in fits.items()]
    scored.sort(key=lambda x: (-x[0], to_hex(x[1])))
    return [h for _, h in scored]
