"""Multivariate Hawkes processes: simulation, Gibbs fitting, influence metrics."""

from .gibbs import GibbsConfig, HawkesFit, HawkesGibbs, fit_gibbs
from .metrics import (
    InfluenceReport,
    aggregate,
    background_share,
    efficiency,
    external_influence,
    influence,
    ks_two_sample,
    per_fit_influence,
    rank_by_troll_influence,
    significance,
)
from .model import ExponentialKernel, HawkesModel, Simulation, simulate

__all__ = [
    "ExponentialKernel",
    "GibbsConfig",
    "HawkesFit",
    "HawkesGibbs",
    "HawkesModel",
    "InfluenceReport",
    "Simulation",
    "aggregate",
    "background_share",
    "efficiency",
    "external_influence",
    "fit_gibbs",
    "influence",
    "ks_two_sample",
    "per_fit_influence",
    "rank_by_troll_influence",
    "significance",
    "simulate",
]
