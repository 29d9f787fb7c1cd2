"""Experiment drivers: simulated auctions, both learners, and the reports.

Random streams hang off ``ExperimentConfig.master_seed``:

* ``"equilibrium"``: valuations behind the fitted bid function,
* ``("auctions", "train")`` / ``("auctions", "test")``: auction valuations,
* ``"convergence"``: the equilibrium convergence study.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import ks_2samp

from .. import __version__
from .. import equilibrium as eq
from .. import reserve_density as rd
from .. import reserve_discriminative as rdisc
from .. import rng as rng_mod
from ..auction_model import AuctionConfig
from ..exceptions import ConfigError
from .data import Dataset, ResultRecord, dump_json
from .distributions import distribution_from_dict, lognormal_mixture, sample_valuations

__all__ = [
    "ExperimentConfig",
    "Table1Result",
    "ConvergenceResult",
    "default_auction",
    "default_experiment",
    "fit_bid_function",
    "simulate_auctions",
    "sne_recover",
    "learn_sweep",
    "learn_density",
    "oracle_reserve",
    "run_table1",
    "run_convergence",
    "run_histograms",
    "write_table1",
    "write_convergence",
]

GENERATOR_VERSION = f"gsp_reserve-{__version__}/philox"


def default_auction() -> AuctionConfig:
    """Four bidders, three slots, ``c = (1, 0.45, 0.1)``, unit click-through rates."""
    return AuctionConfig(n_bidders=4, n_slots=3, position_factors=(1.0, 0.45, 0.1))


@dataclass(frozen=True)
class ExperimentConfig:
    auction: AuctionConfig
    valuation_dist: object
    n_train: int
    n_test: int
    master_seed: int = 0
    equilibrium_grid_n: int = 2000

    def __post_init__(self):
        for name in ("n_train", "n_test", "equilibrium_grid_n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.equilibrium_grid_n < 2:
            raise ConfigError("equilibrium_grid_n must be at least 2")
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {seed}")
        object.__setattr__(self, "master_seed", seed)
        if not hasattr(self.valuation_dist, "sample"):
            raise ConfigError("valuation_dist must provide sample(rng, n)")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(
            self.auction, self.valuation_dist, self.n_train, self.n_test, seed, self.equilibrium_grid_n
        )

    def to_dict(self) -> dict:
        return {
            "auction": self.auction.to_dict(),
            "valuation_dist": self.valuation_dist.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "master_seed": self.master_seed,
            "equilibrium_grid_n": self.equilibrium_grid_n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        base = default_experiment()
        try:
            auction = AuctionConfig.from_dict(d["auction"]) if "auction" in d else base.auction
            dist = (
                distribution_from_dict(d["valuation_dist"]) if "valuation_dist" in d else base.valuation_dist
            )
            return cls(
                auction=auction,
                valuation_dist=dist,
                n_train=d.get("n_train", base.n_train),
                n_test=d.get("n_test", base.n_test),
                master_seed=d.get("master_seed", base.master_seed),
                equilibrium_grid_n=d.get("equilibrium_grid_n", base.equilibrium_grid_n),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def config_hash(self) -> str:
        return hashlib.sha256(dump_json(self.to_dict()).encode("utf-8")).hexdigest()


def default_experiment(seed: int = 0) -> ExperimentConfig:
    """The two-component log-normal mixture setting with 300 training and 500 test auctions."""
    return ExperimentConfig(default_auction(), lognormal_mixture(), n_train=300, n_test=500, master_seed=seed)


def fit_bid_function(econfig: ExperimentConfig) -> eq.EmpiricalBidFunction:
    seed = rng_mod.derive_seed(econfig.master_seed, "equilibrium")
    sample = sample_valuations(econfig.valuation_dist, econfig.equilibrium_grid_n, seed)
    return eq.solve_equilibrium(sample, econfig.auction)


def simulate_auctions(
    econfig: ExperimentConfig,
    split: str = "train",
    n: int | None = None,
    bid_function: eq.EmpiricalBidFunction | None = None,
) -> Dataset:
    """Equilibrium bids for ``n`` auctions (default ``n_train`` or ``n_test``).

    Bids are ``bid_at(beta, v) / e_i``; under rank-by-bid ``e_i`` is 1.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    if n is None:
        n = econfig.n_train if split == "train" else econfig.n_test
    cfg = econfig.auction
    f = fit_bid_function(econfig) if bid_function is None else bid_function
    gen = rng_mod.generator(econfig.master_seed, "auctions", split)
    values = econfig.valuation_dist.sample(gen, n * cfg.n_bidders).reshape(n, cfg.n_bidders)
    bids = eq.bid_at(f, values) / cfg.effective_ctr
    provenance = {
        "config_hash": econfig.config_hash(),
        "master_seed": econfig.master_seed,
        "split": split,
        "generator_version": GENERATOR_VERSION,
        "config": econfig.to_dict(),
    }
    return Dataset(bids, provenance, valuations=values)


def _bids(dataset):
    return dataset.bids if isinstance(dataset, Dataset) else np.atleast_2d(np.asarray(dataset, dtype=float))


def sne_recover(dataset, config: AuctionConfig) -> rd.RecoveredValuations:
    """Valuations implied by the lower-boundary symmetric Nash equilibrium.

    For each auction with sorted scores ``b^(1) >= b^(2) >= ...`` and
    ``s = 1..S-1``:

        v^(s) = (c_s b^(s+1) - c_{s+1} b^(s+2)) / (c_s - c_{s+1})

    with ``b^(N+1) = 0``. Indifference between slots ``s`` and ``s+1`` pins
    down the value of the bidder holding slot ``s+1``, so each value is
    stored next to that bidder's own score ``b^(s+1)``.
    """
    S = config.n_slots
    if S < 2:
        raise ConfigError("the equal-SNE inversion needs at least two slots")
    scores = _bids(dataset) * config.effective_ctr
    q = np.concatenate([-np.sort(-scores, axis=1), np.zeros((scores.shape[0], 1))], axis=1)
    c = config.c
    values, own = [], []
    for s in range(S - 1):
        values.append((c[s] * q[:, s + 1] - c[s + 1] * q[:, s + 2]) / (c[s] - c[s + 1]))
        own.append(q[:, s + 1])
    values = np.stack(values, axis=1).ravel()
    return rd.RecoveredValuations(values, np.stack(own, axis=1).ravel(), np.zeros(values.shape, bool))


def learn_sweep(train, config: AuctionConfig) -> rdisc.ReserveSolution:
    return rdisc.minimize(rdisc.extract_breakpoints(_bids(train), config))


def learn_density(train, config: AuctionConfig) -> rd.ReserveEstimate:
    bids = _bids(train)
    return rd.solve_reserve(rd.recover_valuations(bids, config), bids, config)


def oracle_reserve(test, config: AuctionConfig) -> float:
    """Best scalar reserve in hindsight on the evaluation set itself."""
    return learn_sweep(test, config).reserve


@dataclass(frozen=True)
class Table1Result:
    sweep: ResultRecord
    density: ResultRecord
    oracle: ResultRecord
    density_is_root: bool
    train: Dataset = field(repr=False)
    test: Dataset = field(repr=False)

    @property
    def records(self):
        return self.sweep, self.density

    def to_dict(self, econfig: ExperimentConfig) -> dict:
        return {
            "config": econfig.to_dict(),
            "config_hash": econfig.config_hash(),
            "density_is_root": self.density_is_root,
            "records": [r.to_dict() for r in (self.sweep, self.density, self.oracle)],
        }


def run_table1(econfig: ExperimentConfig) -> Table1Result:
    """Train both learners on ``n_train`` auctions, score them on ``n_test`` fresh ones."""
    cfg = econfig.auction
    f = fit_bid_function(econfig)
    train = simulate_auctions(econfig, "train", bid_function=f)
    test = simulate_auctions(econfig, "test", bid_function=f)

    t0 = time.perf_counter()
    sweep = learn_sweep(train, cfg)
    t1 = time.perf_counter()
    density = learn_density(train, cfg)
    t2 = time.perf_counter()

    return Table1Result(
        sweep=ResultRecord.evaluate("sweep", sweep.reserve, test, cfg, t1 - t0),
        density=ResultRecord.evaluate("density", density.reserve, test, cfg, t2 - t1),
        oracle=ResultRecord.evaluate("oracle", oracle_reserve(test, cfg), test, cfg),
        density_is_root=density.is_root,
        train=train,
        test=test,
    )


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_table1(result: Table1Result, econfig: ExperimentConfig, out_dir) -> dict:
    """Write ``table1.json``, ``table1.csv``, the datasets and ``timings.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "table1.json",
        "csv": out / "table1.csv",
        "train": result.train.save(out / "train.csv"),
        "test": result.test.save(out / "test.csv"),
        "timings": out / "timings.json",
    }
    paths["json"].write_text(dump_json(result.to_dict(econfig)))
    rows = [
        (r.method, repr(r.reserve), repr(r.mean_revenue), repr(r.std_error), repr(r.std_dev), r.n_test)
        for r in (result.sweep, result.density, result.oracle)
    ]
    paths["csv"].write_text(
        csv_text(("method", "reserve", "mean_revenue", "std_error", "std_dev", "n_test"), rows)
    )
    paths["timings"].write_text(
        dump_json({r.method: r.runtime for r in (result.sweep, result.density)})
    )
    return paths


@dataclass(frozen=True)
class ConvergenceResult:
    rows: list
    summary: dict
    envelope_c: float
    fit_c: float
    slope: float


def run_convergence(
    econfig: ExperimentConfig,
    n_list: Sequence[int],
    reps: int,
    workers: int = 1,
    reference_n: int | None = None,
) -> ConvergenceResult:
    """Sup-errors of small-sample bid functions against a large-sample one.

    Per ``n`` the median sup-error over ``reps`` summarizes the curve.
    ``envelope_c`` is the smallest ``c`` with ``median(n) <= c / sqrt(n)`` at
    every ``n``, ``fit_c`` the least-squares fit of ``median(n) ~ c / sqrt(n)``
    and ``slope`` the log-log regression slope of the medians on ``n``.
    """
    ref_n = econfig.equilibrium_grid_n if reference_n is None else reference_n
    rows, _ = eq.convergence_sweep(
        econfig.valuation_dist.sample,
        n_list,
        reps,
        econfig.auction,
        reference_n=ref_n,
        seed=rng_mod.derive_seed(econfig.master_seed, "convergence"),
        workers=workers,
    )
    summary = eq.summarize_sweep(rows)
    ns = np.array(sorted(summary), dtype=float)
    med = np.array([summary[int(n)]["median"] for n in ns])
    x = 1.0 / np.sqrt(ns)
    fit_c = float(np.dot(x, med) / np.dot(x, x))
    envelope_c = float(np.max(med / x))
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0]) if ns.size > 1 else math.nan
    return ConvergenceResult(rows, summary, envelope_c, fit_c, slope)


def write_convergence(result: ConvergenceResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "convergence.csv", "fit": out / "convergence_fit.json"}
    paths["csv"].write_text(csv_text(("n", "rep", "sup_error"), [(n, r, repr(e)) for n, r, e in result.rows]))
    fit = {
        "envelope_c": result.envelope_c,
        "fit_c": result.fit_c,
        "loglog_slope": result.slope,
        "summary": {str(n): v for n, v in result.summary.items()},
    }
    paths["fit"].write_text(dump_json(fit))
    return paths


def run_histograms(econfig: ExperimentConfig, out_dir=None, bins: int = 30) -> dict:
    """Histograms of true, SNE-recovered and density-recovered valuations.

    All three share one set of bin edges. Returns the Kolmogorov-Smirnov
    distance of each recovered sample to the true valuations, and writes
    ``hist_<name>.csv`` files plus ``ks.json`` when ``out_dir`` is given.
    """
    cfg = econfig.auction
    train = simulate_auctions(econfig, "train")
    truth = train.valuations.ravel()
    samples = {
        "true": truth,
        "sne": sne_recover(train, cfg).usable,
        "density": rd.recover_valuations(train.bids, cfg).usable,
    }
    lo = min(float(v.min()) for v in samples.values())
    hi = max(float(v.max()) for v in samples.values())
    ks = {name: float(ks_2samp(v, truth).statistic) for name, v in samples.items() if name != "true"}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, v in samples.items():
            edges, counts = rd.histogram(v, bins=bins, range=(lo, hi))
            rows = [(repr(float(a)), repr(float(b)), int(k)) for a, b, k in zip(edges[:-1], edges[1:], counts)]
            (out / f"hist_{name}.csv").write_text(csv_text(("bin_left", "bin_right", "count"), rows))
        (out / "ks.json").write_text(dump_json(ks))
    return {"ks": ks, "samples": samples}
