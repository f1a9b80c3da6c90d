"""Gibbs sampling for a multivariate Hawkes process with latent parents.

Each sweep

1. draws a parent for every event from the categorical distribution over
   the background (weight ``background[d]``) and every earlier event ``j``
   within ``max_lag`` (weight ``weights[s_j, d] * kernel(t_i - t_j)``);
2. redraws background rates and weights from their Gamma conditionals
   given the parent counts.

``counts`` and ``background_counts`` of the returned fit are posterior
means of the attributed-event matrices, Rao-Blackwellised: every kept
sweep contributes the parent *probabilities* under the current parameters
rather than the single sampled parent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import ConfigError, DataError, NumericalError
from ..validation import check_event_times, check_int_range
from .model import ExponentialKernel


@dataclass(frozen=True)
class GibbsConfig:
    """Sampler settings. Gamma priors are ``(shape, rate)`` pairs."""

    n_burnin: int = 500
    n_samples: int = 1500
    background_prior: tuple[float, float] = (1.0, 1.0)
    weight_prior: tuple[float, float] = (1.0, 5.0)
    kernel: ExponentialKernel = field(default_factory=ExponentialKernel)
    seed: int | None = 0
    keep_samples: bool = True

    def __post_init__(self):
        check_int_range(self.n_burnin, "n_burnin", 0)
        check_int_range(self.n_samples, "n_samples", 1)
        for name in ("background_prior", "weight_prior"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0):
                raise ConfigError(f"{name} shape and rate must be positive, got {(a, b)}")


@dataclass
class HawkesFit:
    n_events: np.ndarray
    counts: np.ndarray
    background_counts: np.ndarray
    horizon: float
    background_samples: np.ndarray | None = None
    weight_samples: np.ndarray | None = None
    loglik: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    # per-event parent options, flattened; see ``parent_distribution``
    event_times: np.ndarray | None = None
    event_process: np.ndarray | None = None
    option_offsets: np.ndarray | None = None
    option_parent: np.ndarray | None = None
    parent_frequencies: np.ndarray | None = None
    parent_probabilities: np.ndarray | None = None

    @property
    def n_processes(self) -> int:
        return self.n_events.size

    @property
    def background_mean(self) -> np.ndarray | None:
        return None if self.background_samples is None else self.background_samples.mean(axis=0)

    @property
    def weights_mean(self) -> np.ndarray | None:
        return None if self.weight_samples is None else self.weight_samples.mean(axis=0)

    def conservation_error(self) -> float:
        """max_d |B_d + sum_s C[s, d] - N_d|."""
        return float(np.max(np.abs(self.background_counts + self.counts.sum(axis=0) - self.n_events), initial=0.0))

    def parent_distribution(self, event: int, sampled: bool = True) -> dict[int, float]:
        """Posterior parent distribution of event ``event`` (time-sorted index).

        Keys are parent event indices, -1 meaning background. ``sampled``
        selects empirical frequencies of the drawn parents; otherwise the
        Rao-Blackwellised probabilities are returned.
        """
        if self.option_offsets is None:
            raise DataError("fit was run without retaining parent options")
        lo, hi = self.option_offsets[event], self.option_offsets[event + 1]
        src = self.parent_frequencies if sampled else self.parent_probabilities
        return {int(p): float(v) for p, v in zip(self.option_parent[lo:hi], src[lo:hi])}

    def to_record(self) -> dict:
        return {
            "N": self.n_events.astype(int).tolist(),
            "C": self.counts.tolist(),
            "B": self.background_counts.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_record(cls, rec: dict) -> HawkesFit:
        return cls(
            n_events=np.asarray(rec["N"], dtype=float),
            counts=np.asarray(rec["C"], dtype=float),
            background_counts=np.asarray(rec["B"], dtype=float),
            horizon=float(rec.get("diagnostics", {}).get("horizon", np.nan)),
            diagnostics=dict(rec.get("diagnostics", {})),
        )


def _flatten(events: list[np.ndarray]):
    times = np.concatenate(events) if events else np.empty(0)
    procs = np.concatenate([np.full(t.size, k) for k, t in enumerate(events)]).astype(np.int64)
    order = np.lexsort((procs, times))
    return times[order], procs[order]


def _build_options(times, procs, kernel: ExponentialKernel):
    """Background plus every candidate parent in ``(t_i - max_lag, t_i)``."""
    n = times.size
    lo = np.searchsorted(times, times - kernel.max_lag, side="right")
    hi = np.searchsorted(times, times, side="left")
    n_cand = hi - lo
    sizes = n_cand + 1
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    total = int(offsets[-1])
    opt_event = np.repeat(np.arange(n), sizes)
    # position within each event's option block; 0 is the background
    pos = np.arange(total) - np.repeat(offsets[:-1], sizes)
    parent = np.where(pos == 0, -1, np.repeat(lo, sizes) + pos - 1)
    is_bg = parent < 0
    safe_parent = np.where(is_bg, 0, parent)
    src = np.where(is_bg, -1, procs[safe_parent])
    kern = np.where(is_bg, 1.0, kernel.pdf(times[opt_event] - times[safe_parent]))
    return offsets, opt_event, parent, src, kern


def fit_gibbs(events, horizon: float | None = None, config: GibbsConfig | None = None) -> HawkesFit:
    """Fit a Hawkes model to per-process event times on ``[0, horizon]``."""
    config = config or GibbsConfig()
    events = check_event_times(events)
    k = len(events)
    if k == 0:
        raise DataError("need at least one process")
    n_events = np.array([t.size for t in events], dtype=float)
    if n_events.sum() == 0:
        raise DataError("need at least one event")
    t_max = max(float(t.max()) for t in events if t.size)
    if horizon is None:
        horizon = t_max
    if not horizon > 0:
        raise DataError(f"observation window must have positive length, got {horizon}")
    if not horizon >= t_max or min(float(t.min()) for t in events if t.size) < 0:
        raise DataError(f"events must lie in [0, {horizon}]")
    horizon = float(horizon)
    kernel = config.kernel

    times, procs = _flatten(events)
    n = times.size
    offsets, opt_event, parent, src, kern = _build_options(times, procs, kernel)
    n_opts = parent.size
    is_bg = src < 0
    src_idx = np.where(is_bg, 0, src)
    dest = procs[opt_event]
    seg_sizes = np.diff(offsets)
    starts = offsets[:-1]
    # flat source*k + dest index of each option, for counting
    pair_idx = src_idx * k + dest
    # index into concat(W.ravel(), background) for a single gather per sweep
    param_idx = np.where(is_bg, k * k + dest, pair_idx)
    bg_dest = dest[is_bg]
    bg_pos = np.flatnonzero(is_bg)
    ex_pos = np.flatnonzero(~is_bg)
    ex_pair = pair_idx[ex_pos]

    # exposure of each source process: integral of its events' kernels inside the window
    exposure = np.array([kernel.cdf(horizon - t).sum() for t in events])

    a0, b0 = config.background_prior
    aw, bw = config.weight_prior
    rng = np.random.default_rng(config.seed)
    lam = np.maximum(n_events, 1.0) / horizon * 0.5
    W = np.full((k, k), aw / bw)

    n_total = config.n_burnin + config.n_samples
    C_acc = np.zeros(k * k)
    B_acc = np.zeros(k)
    freq = np.zeros(n_opts)
    prob_acc = np.zeros(n_opts)
    lam_samples = np.empty((config.n_samples, k)) if config.keep_samples else None
    w_samples = np.empty((config.n_samples, k, k)) if config.keep_samples else None
    loglik = np.empty(n_total)

    for sweep in range(n_total):
        w = np.concatenate((W.ravel(), lam))[param_idx] * kern
        cum = np.cumsum(w)
        seg_end = cum[offsets[1:] - 1]
        seg_start = np.concatenate(([0.0], seg_end[:-1]))
        seg_sum = seg_end - seg_start
        if not (np.all(np.isfinite(seg_sum)) and np.all(seg_sum > 0)):
            raise NumericalError(
                "non-finite or zero event intensity",
                {"sweep": sweep, "background": lam.tolist(), "weights": W.tolist()},
            )
        # exact per-event intensity sums (cumsum differences lose precision)
        intensity = np.add.reduceat(w, starts)
        loglik[sweep] = np.log(intensity).sum() - lam.sum() * horizon - (W * exposure[:, None]).sum()

        u = seg_start + rng.random(n) * seg_sum
        chosen = np.searchsorted(cum, u, side="right")
        # rounding at segment edges can step one past the block
        chosen = np.clip(chosen, starts, offsets[1:] - 1)
        hit = np.bincount(param_idx[chosen], minlength=k * k + k)
        C, B = hit[: k * k], hit[k * k:]

        if sweep >= config.n_burnin:
            probs = w / np.repeat(intensity, seg_sizes)
            B_acc += np.bincount(bg_dest, weights=probs[bg_pos], minlength=k)
            C_acc += np.bincount(ex_pair, weights=probs[ex_pos], minlength=k * k)
            freq += np.bincount(chosen, minlength=n_opts)
            prob_acc += probs

        lam = rng.gamma(a0 + B, 1.0 / (b0 + horizon))
        W = rng.gamma(aw + C.reshape(k, k), 1.0 / (bw + exposure[:, None]))

        if sweep >= config.n_burnin and config.keep_samples:
            lam_samples[sweep - config.n_burnin] = lam
            w_samples[sweep - config.n_burnin] = W

    kept = config.n_samples
    return HawkesFit(
        n_events=n_events,
        counts=C_acc.reshape(k, k) / kept,
        background_counts=B_acc / kept,
        horizon=horizon,
        background_samples=lam_samples,
        weight_samples=w_samples,
        loglik=loglik,
        diagnostics={
            "n_burnin": config.n_burnin,
            "n_samples": config.n_samples,
            "seed": config.seed,
            "horizon": horizon,
            "tau": kernel.tau,
            "max_lag": kernel.max_lag,
            "loglik_kept_mean": float(loglik[config.n_burnin:].mean()),
        },
        event_times=times,
        event_process=procs,
        option_offsets=offsets,
        option_parent=parent,
        parent_frequencies=freq / kept,
        parent_probabilities=prob_acc / kept,
    )


class HawkesGibbs(BaseEstimator):
    """Bayesian multivariate Hawkes estimator fitted by Gibbs sampling.

    ``fit(events, horizon)`` takes one array of event times (hours) per
    process. Fitted attributes: ``counts_`` (posterior mean attributed
    events, source x destination), ``background_counts_``, ``background_``
    and ``weights_`` (posterior means), ``fit_`` (the full
    :class:`HawkesFit`).
    """

    def __init__(
        self,
        n_burnin: int = 500,
        n_samples: int = 1500,
        tau: float = 1.0,
        max_lag: float = 24.0,
        background_prior: tuple[float, float] = (1.0, 1.0),
        weight_prior: tuple[float, float] = (1.0, 5.0),
        random_state: int | None = 0,
    ):
        self.n_burnin = n_burnin
        self.n_samples = n_samples
        self.tau = tau
        self.max_lag = max_lag
        self.background_prior = background_prior
        self.weight_prior = weight_prior
        self.random_state = random_state

    def _config(self) -> GibbsConfig:
        return GibbsConfig(
            n_burnin=self.n_burnin,
            n_samples=self.n_samples,
            background_prior=tuple(self.background_prior),
            weight_prior=tuple(self.weight_prior),
            kernel=ExponentialKernel(self.tau, self.max_lag),
            seed=self.random_state,
        )

    def fit(self, X, y=None, horizon: float | None = None):
        fit = fit_gibbs(X, horizon, self._config())
        self.fit_ = fit
        self.n_events_ = fit.n_events
        self.counts_ = fit.counts
        self.background_counts_ = fit.background_counts
        self.background_ = fit.background_mean
        self.weights_ = fit.weights_mean
        self.n_features_in_ = fit.n_processes
        return self

    def score(self, X, y=None, horizon: float | None = None) -> float:
        """Log-likelihood of ``X`` under the posterior-mean parameters."""
        events = check_event_times(X, self.n_features_in_)
        times, procs = _flatten(events)
        if horizon is None:
            horizon = float(times.max()) if times.size else 0.0
        kernel = ExponentialKernel(self.tau, self.max_lag)
        offsets, opt_event, parent, src, kern = _build_options(times, procs, kernel)
        dest = procs[opt_event]
        is_bg = src < 0
        w = np.where(is_bg, self.background_[dest], self.weights_[np.where(is_bg, 0, src), dest] * kern)
        intensity = np.add.reduceat(w, offsets[:-1]) if times.size else np.empty(0)
        exposure = np.array([kernel.cdf(horizon - t).sum() for t in events])
        return float(np.log(intensity).sum() - self.background_.sum() * horizon - (self.weights_ * exposure[:, None]).sum())
