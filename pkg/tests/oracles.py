"""Independent reference implementations used as test oracles.

Nothing here imports the code under test; these are deliberately slow,
direct translations of the definitions.
"""

from __future__ import annotations

import itertools
import math


def popcount64(x: int) -> int:
    return bin(x & ((1 << 64) - 1)).count("1")


def dct2_direct(pixels):
    """Unnormalised 2-D DCT-II by direct summation (list of lists in, out)."""
    n_rows, n_cols = len(pixels), len(pixels[0])
    out = [[0.0] * n_cols for _ in range(n_rows)]
    cos_r = [[math.cos(math.pi * (2 * x + 1) * u / (2 * n_rows)) for x in range(n_rows)] for u in range(n_rows)]
    cos_c = [[math.cos(math.pi * (2 * y + 1) * v / (2 * n_cols)) for y in range(n_cols)] for v in range(n_cols)]
    for u in range(n_rows):
        for v in range(n_cols):
            s = 0.0
            for x in range(n_rows):
                cu = cos_r[u][x]
                row = pixels[x]
                for y in range(n_cols):
                    s += row[y] * cu * cos_c[v][y]
            out[u][v] = 4.0 * s  # scipy's unnormalised convention: 2 per axis
    return out


def phash_bits_oracle(pixels32, tol_rel=1e-9):
    """Hash of a 32x32 grayscale raster from the direct DCT."""
    coeffs = dct2_direct(pixels32)
    block = [coeffs[u][v] for u in range(8) for v in range(8)]
    rest = sorted(block[1:])
    median = rest[31]
    tol = tol_rel * max(abs(c) for c in block)
    value = 0
    for i, c in enumerate(block):
        if c > median + tol:
            value |= 1 << (63 - i)
    return value


def dbscan_oracle(items, eps, min_samples):
    """Plain O(n^2) DBSCAN over (id, hash) pairs with the documented tie rules.

    Returns a set of frozensets (clusters) and the noise set.
    """
    ids = sorted(i for i, _ in items)
    h = dict(items)
    nbrs = {i: [j for j in ids if popcount64(h[i] ^ h[j]) <= eps] for i in ids}
    core = {i for i in ids if len(nbrs[i]) >= min_samples}
    label = {}
    comp = 0
    for i in ids:  # ascending id -> components numbered by smallest core id
        if i in core and i not in label:
            stack = [i]
            label[i] = comp
            while stack:
                u = stack.pop()
                for v in nbrs[u]:
                    if v in core and v not in label:
                        label[v] = comp
                        stack.append(v)
            comp += 1
    clusters = {}
    noise = set()
    for i in ids:
        if i in core:
            clusters.setdefault(label[i], set()).add(i)
        else:
            cands = [label[j] for j in nbrs[i] if j in core]
            if cands:
                clusters.setdefault(min(cands), set()).add(i)
            else:
                noise.add(i)
    return {frozenset(c) for c in clusters.values()}, noise


def medoid_oracle(members):
    best = None
    for i, hi in members:
        mean = sum(popcount64(hi ^ hj) for _, hj in members) / len(members)
        key = (mean, i)
        if best is None or key < best:
            best = key
    return best[1]


def modularity_oracle(nodes, edges, assignment):
    """Newman modularity, summed over all ordered node pairs."""
    m = sum(w for _, _, w in edges)
    if m == 0:
        return 0.0
    adj = {}
    deg = {n: 0.0 for n in nodes}
    for u, v, w in edges:
        adj[(u, v)] = adj.get((u, v), 0.0) + w
        adj[(v, u)] = adj.get((v, u), 0.0) + w
        deg[u] += w
        deg[v] += w
    q = 0.0
    for a in nodes:
        for b in nodes:
            if assignment[a] == assignment[b]:
                q += adj.get((a, b), 0.0) - deg[a] * deg[b] / (2 * m)
    return q / (2 * m)


def set_partitions(items):
    """All set partitions of ``items`` (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def best_modularity_exhaustive(nodes, edges):
    best_q, best_part = -1.0, None
    for part in set_partitions(list(nodes)):
        assign = {n: k for k, block in enumerate(part) for n in block}
        q = modularity_oracle(nodes, edges, assign)
        if q > best_q + 1e-12:
            best_q, best_part = q, part
    return best_q, best_part


def _trunc_exp_pdf(dt, tau, max_lag):
    if not 0 < dt < max_lag:
        return 0.0
    return math.exp(-dt / tau) / (tau * (1 - math.exp(-max_lag / tau)))


def _trunc_exp_cdf(dt, tau, max_lag):
    dt = min(max(dt, 0.0), max_lag)
    return (1 - math.exp(-dt / tau)) / (1 - math.exp(-max_lag / tau))


def exact_parent_marginals(events, horizon, tau=1.0, max_lag=24.0, bg_prior=(1.0, 1.0), w_prior=(1.0, 5.0)):
    """Exact posterior marginal of each event's parent, parameters integrated out.

    ``events`` is a list of (time, process). Events are indexed in
    ascending (time, process) order; returns one dict per event mapping
    parent index (-1 = background) to probability.
    """
    evs = sorted(events)
    k = max(p for _, p in evs) + 1
    n = len(evs)
    a0, b0 = bg_prior
    aw, bw = w_prior
    exposure = [0.0] * k
    for t, p in evs:
        exposure[p] += _trunc_exp_cdf(horizon - t, tau, max_lag)
    options = []
    for i, (ti, _) in enumerate(evs):
        opts = [-1] + [j for j, (tj, _) in enumerate(evs) if 0 < ti - tj < max_lag]
        options.append(opts)
    totals = [dict() for _ in range(n)]
    z_sum = 0.0
    for z in itertools.product(*options):
        logw = 0.0
        B = [0] * k
        C = [[0] * k for _ in range(k)]
        for i, j in enumerate(z):
            d = evs[i][1]
            if j < 0:
                B[d] += 1
            else:
                C[evs[j][1]][d] += 1
                logw += math.log(_trunc_exp_pdf(evs[i][0] - evs[j][0], tau, max_lag))
        for d in range(k):
            logw += math.lgamma(a0 + B[d]) - (a0 + B[d]) * math.log(b0 + horizon)
        for s in range(k):
            for d in range(k):
                logw += math.lgamma(aw + C[s][d]) - (aw + C[s][d]) * math.log(bw + exposure[s])
        w = math.exp(logw)
        z_sum += w
        for i, j in enumerate(z):
            totals[i][j] = totals[i].get(j, 0.0) + w
    return [{j: v / z_sum for j, v in t.items()} for t in totals]


def ks_statistic_oracle(a, b):
    """sup |F_a - F_b| by evaluating both step functions at every data point."""
    pts = sorted(set(a) | set(b))
    best = 0.0
    for x in pts:
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def kolmogorov_sf_series(lam, terms=100):
    if lam <= 0:
        return 1.0
    return max(0.0, min(1.0, 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, terms))))
