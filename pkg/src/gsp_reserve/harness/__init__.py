"""Simulation harness: valuation distributions, datasets, experiments and CLI."""

from .data import Dataset, ResultRecord
from .distributions import Mixture, TruncLogNormal, Uniform, lognormal_mixture, sample_valuations
from .experiments import (
    ExperimentConfig,
    default_experiment,
    run_convergence,
    run_histograms,
    run_table1,
    simulate_auctions,
    sne_recover,
)

__all__ = [
    "Dataset",
    "ResultRecord",
    "Uniform",
    "TruncLogNormal",
    "Mixture",
    "lognormal_mixture",
    "sample_valuations",
    "ExperimentConfig",
    "default_experiment",
    "simulate_auctions",
    "sne_recover",
    "run_table1",
    "run_convergence",
    "run_histograms",
]
