"""Multivariate Hawkes model definition and exact branching simulation.

Times are in hours. ``weights[s, d]`` is the expected number of direct
children an event on process ``s`` spawns on process ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError, StabilityError


@dataclass(frozen=True)
class ExponentialKernel:
    """Exponential impulse response truncated (and renormalised) at ``max_lag``.

    ``pdf(dt) = exp(-dt / tau) / (tau * (1 - exp(-max_lag / tau)))`` for
    ``0 < dt < max_lag`` and zero elsewhere.
    """

    tau: float = 1.0
    max_lag: float = 24.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"kernel tau must be positive, got {self.tau}")
        if not self.max_lag > 0:
            raise ConfigError(f"kernel max_lag must be positive, got {self.max_lag}")

    @property
    def mass(self) -> float:
        return -np.expm1(-self.max_lag / self.tau)

    def pdf(self, dt):
        dt = np.asarray(dt, dtype=float)
        inside = (dt > 0) & (dt < self.max_lag)
        return np.where(inside, np.exp(-np.clip(dt, 0, None) / self.tau) / (self.tau * self.mass), 0.0)

    def cdf(self, dt):
        dt = np.clip(np.asarray(dt, dtype=float), 0.0, self.max_lag)
        return -np.expm1(-dt / self.tau) / self.mass

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        return -self.tau * np.log1p(-u * self.mass)


@dataclass(frozen=True)
class HawkesModel:
    background: np.ndarray
    weights: np.ndarray
    kernel: ExponentialKernel = field(default_factory=ExponentialKernel)

    def __post_init__(self):
        lam = np.asarray(self.background, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (lam.size, lam.size):
            raise ConfigError(f"weights shape {w.shape} does not match {lam.size} processes")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError("background rates must be finite and non-negative")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("excitation weights must be finite and non-negative")
        object.__setattr__(self, "background", lam)
        object.__setattr__(self, "weights", w)

    @property
    def n_processes(self) -> int:
        return self.background.size

    @property
    def spectral_radius(self) -> float:
        if self.weights.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.weights))))

    def check_stable(self) -> None:
        rho = self.spectral_radius
        if rho >= 1:
            raise StabilityError(f"spectral radius of weights is {rho:.4f} >= 1")


@dataclass(frozen=True)
class Simulation:
    """Simulated events with the true parent of every event.

    ``parents[d][i]`` is the process of the parent of event ``i`` on ``d``
    (-1 for immigrants).
    """

    times: list[np.ndarray]
    parents: list[np.ndarray]
    horizon: float

    @property
    def n_events(self) -> np.ndarray:
        return np.array([t.size for t in self.times])

    def true_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """True parent counts as ``(C, B)`` with ``C[s, d]`` source->dest."""
        k = len(self.times)
        C = np.zeros((k, k))
        B = np.zeros(k)
        for d, par in enumerate(self.parents):
            B[d] = np.sum(par < 0)
            for s in range(k):
                C[s, d] = np.sum(par == s)
        return C, B

    def true_fractions(self) -> np.ndarray:
        """``C[s, d] / N[d]``; NaN where process ``d`` has no events."""
        C, _ = self.true_counts()
        with np.errstate(invalid="ignore", divide="ignore"):
            return C / self.n_events[None, :]


def simulate(model: HawkesModel, horizon: float, seed=None) -> Simulation:
    """Sample events on ``[0, horizon)`` by the branching (cluster) construction.

    Immigrants are homogeneous Poisson per process; each event then spawns
    ``Poisson(weights[s, d])`` children on every process ``d`` at kernel
    lags. Children past the horizon are discarded with their descendants.
    """
    model.check_stable()
    if not horizon > 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(seed)
    k = model.n_processes
    times_out = [[] for _ in range(k)]
    parents_out = [[] for _ in range(k)]

    gen_t, gen_p = [], []
    for d in range(k):
        n = rng.poisson(model.background[d] * horizon)
        t = rng.uniform(0.0, horizon, n)
        gen_t.append(t)
        gen_p.append(np.full(n, d))
        times_out[d].append(t)
        parents_out[d].append(np.full(n, -1))
    gen_t = np.concatenate(gen_t)
    gen_p = np.concatenate(gen_p)

    while gen_t.size:
        nxt_t, nxt_p = [], []
        for d in range(k):
            n_child = rng.poisson(model.weights[gen_p, d])
            total = int(n_child.sum())
            if total == 0:
                continue
            t = np.repeat(gen_t, n_child) + model.kernel.sample(rng, total)
            src = np.repeat(gen_p, n_child)
            keep = t < horizon
            t, src = t[keep], src[keep]
            times_out[d].append(t)
            parents_out[d].append(src)
            nxt_t.append(t)
            nxt_p.append(np.full(t.size, d))
        gen_t = np.concatenate(nxt_t) if nxt_t else np.empty(0)
        gen_p = np.concatenate(nxt_p).astype(int) if nxt_p else np.empty(0, dtype=int)

    times, parents = [], []
    for d in range(k):
        t = np.concatenate(times_out[d]) if times_out[d] else np.empty(0)
        p = np.concatenate(parents_out[d]).astype(int) if parents_out[d] else np.empty(0, dtype=int)
        order = np.argsort(t, kind="stable")
        times.append(t[order])
        parents.append(p[order])
    return Simulation(times, parents, float(horizon))
