"""Symmetric equilibrium bidding function of the discrete GSP auction.

Valuations ``v_1 <= ... <= v_n`` drawn i.i.d. define an empirical
distribution with ``F_i = i/n`` and ``G_i = 1 - F_i``. In an efficient
symmetric equilibrium of the auction played under that empirical
distribution, the bids ``beta_i`` at the sample points solve a lower
triangular linear system ``M beta = u``. This module builds that system,
solves it by forward substitution and measures how fast the solution
approaches a large-sample reference.

Slot indices ``s`` are 1-based in all public functions, as are the sample
indices ``i`` of :func:`z_hat` and :func:`z_hat_minus`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from . import rng as rng_mod
from .auction_model import AuctionConfig
from .exceptions import ConfigError, SingularDiagonalError

__all__ = [
    "ValuationSample",
    "EmpiricalGrids",
    "TriangularSystem",
    "EmpiricalBidFunction",
    "multinomial",
    "z_continuous",
    "z_hat",
    "z_hat_minus",
    "build_system",
    "solve",
    "solve_equilibrium",
    "bid_at",
    "convergence_sweep",
]

log = logging.getLogger(__name__)

TIE_EPS = 1e-12
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class ValuationSample:
    """Sorted, strictly increasing valuations.

    Exact ties are separated by adding ``j * TIE_EPS`` to the ``j``-th
    member of each tied run.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("valuations must be a non-empty finite sample")
        if v[0] < 0:
            raise ValueError("valuations must be non-negative")
        v = _separate_ties(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def increments(self) -> np.ndarray:
        """Backward differences with ``v_0 = 0``."""
        return np.diff(self.values, prepend=0.0)


def _separate_ties(v: np.ndarray) -> np.ndarray:
    position_in_run = np.arange(v.size) - np.searchsorted(v, v, side="left")
    return v + position_in_run * TIE_EPS


@dataclass(frozen=True)
class EmpiricalGrids:
    """``F_i = i/n`` and ``G_i = 1 - i/n`` for ``i = 0..n``."""

    n: int

    @property
    def F(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def G(self) -> np.ndarray:
        return 1.0 - self.F

    def delta_F_pow(self, p: int) -> np.ndarray:
        """``F_j^p - F_{j-1}^p`` for ``j = 1..n`` (so ``F_0^p = 0`` when ``p >= 1``)."""
        Fp = self.F ** p
        return Fp[1:] - Fp[:-1]

    def delta_G_pow(self, s: int) -> np.ndarray:
        """``G_i^s - G_{i-1}^s`` for ``i = 1..n``, with ``G_0 = 1``."""
        Gs = self.G ** s
        return Gs[1:] - Gs[:-1]


@dataclass(frozen=True)
class TriangularSystem:
    M: np.ndarray
    u: np.ndarray
    values: np.ndarray = None


@dataclass(frozen=True)
class EmpiricalBidFunction:
    grid_values: np.ndarray
    grid_bids: np.ndarray
    diagnostics: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.grid_values, dtype=float)
        b = np.asarray(self.grid_bids, dtype=float)
        if v.shape != b.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("grid_values and grid_bids must be equal-length non-empty vectors")
        object.__setattr__(self, "grid_values", v)
        object.__setattr__(self, "grid_bids", b)

    def __len__(self):
        return self.grid_values.shape[0]

    def __call__(self, v):
        return bid_at(self, v)


def multinomial(n: int, *ks: int) -> float:
    """``n! / (k_1! ... k_m!)`` evaluated through log-gamma."""
    if sum(ks) != n or min(ks) < 0:
        raise ValueError(f"parts {ks} do not partition {n}")
    return float(np.exp(gammaln(n + 1) - sum(gammaln(k + 1) for k in ks)))


def _check_slot(s: int, N: int) -> None:
    if not 1 <= s <= N:
        raise ValueError(f"slot index must lie in 1..{N}, got {s}")


def z_continuous(s: int, v: float, F_of_v: float, config: AuctionConfig) -> float:
    """Probability that a bidder whose value has CDF level ``F_of_v`` wins slot ``s``.

    ``v`` itself does not enter the formula; it is kept so the signature
    mirrors ``z_s(v)``.
    """
    N = config.n_bidders
    _check_slot(s, N)
    if not 0.0 <= F_of_v <= 1.0:
        raise ValueError(f"F(v) must lie in [0, 1], got {F_of_v}")
    return math.comb(N - 1, s - 1) * (1 - F_of_v) ** (s - 1) * F_of_v ** (N - s)


def _tie_sum(s, F_prev, G_cur, n, N, j_max):
    """Double sum over j lower, k higher and N-1-j-k tied opponents."""
    F_prev = np.asarray(F_prev, dtype=float)
    G_cur = np.asarray(G_cur, dtype=float)
    total = np.zeros(np.broadcast(F_prev, G_cur).shape)
    log_n = math.log(n)
    for j in range(j_max + 1):
        for k in range(s):
            m = N - 1 - j - k
            log_w = gammaln(N) - gammaln(j + 1) - gammaln(k + 1) - gammaln(m + 1)
            log_w -= math.log(N - j - k) + m * log_n
            total = total + math.exp(log_w) * F_prev ** j * G_cur ** k
    return total


def z_hat(s: int, i, n: int, config: AuctionConfig):
    """Discrete probability of winning slot ``s`` at the sample point ``v_i``."""
    N = config.n_bidders
    _check_slot(s, N)
    i = np.asarray(i)
    if np.any(i < 1) or np.any(i > n):
        raise ValueError(f"sample index must lie in 1..{n}")
    out = _tie_sum(s, (i - 1) / n, 1 - i / n, n, N, N - s)
    return float(out) if out.ndim == 0 else out


def z_hat_minus(s: int, i, n: int, config: AuctionConfig):
    """Left limit of the discrete slot probability at ``v_i``."""
    N = config.n_bidders
    _check_slot(s, N)
    i = np.asarray(i)
    out = math.comb(N - 1, s - 1) * ((i - 1) / n) ** (N - s) * (1 - (i - 1) / n) ** (s - 1)
    return float(out) if np.ndim(out) == 0 else out


def _diag_term(s, n, N):
    """``M_ii(s)`` for ``i = 1..n``: the tie sum restricted to ``j <= N-s-1``."""
    i = np.arange(1, n + 1)
    if N - s - 1 < 0:
        return np.zeros(n)
    return _tie_sum(s, (i - 1) / n, 1 - i / n, n, N, N - s - 1)


def build_system(sample, config: AuctionConfig) -> TriangularSystem:
    """Assemble ``M = sum_s c_s M(s)`` and ``u`` for the sample.

    Below the diagonal ``M(s)`` is the rank-one product
    ``-C(N-1, s-1) * n * dG_i^s / s * dF_j^p``; on the diagonal it is the
    probability of winning slot ``s`` while paying the bid of a tied opponent.
    """
    if not isinstance(sample, ValuationSample):
        sample = ValuationSample(sample)
    n, N = sample.n, config.n_bidders
    if n < 2:
        raise ValueError("need at least two valuations")
    if N < 2:
        raise ConfigError("the equilibrium system needs at least two bidders")
    if config.position_factors[-1] <= 0:
        raise ConfigError("the last position factor must be positive")

    v = sample.values
    dv = sample.increments
    grids = EmpiricalGrids(n)
    idx = np.arange(1, n + 1)
    M = np.zeros((n, n))
    u = np.zeros(n)
    for s, c_s in enumerate(config.position_factors, start=1):
        p = N - s
        binom = math.comb(N - 1, s - 1)
        col = grids.delta_F_pow(p)
        row = -binom * n * grids.delta_G_pow(s) / s
        M += c_s * np.tril(np.outer(row, col), k=-1)
        M[idx - 1, idx - 1] += c_s * _diag_term(s, n, N)
        zh = z_hat(s, idx, n, config)
        zm = z_hat_minus(s, idx, n, config)
        u += c_s * (zh * v - np.cumsum(zm * dv))
    return TriangularSystem(M=M, u=u, values=v)


def solve(system: TriangularSystem) -> EmpiricalBidFunction:
    """Forward substitution on the lower triangular system."""
    M, u = system.M, system.u
    n = u.shape[0]
    diag = np.diag(M)
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise SingularDiagonalError(int(bad[0]), float(diag[bad[0]]))
    beta = np.zeros(n)
    for i in range(n):
        beta[i] = (u[i] - M[i, :i] @ beta[:i]) / M[i, i]

    values = system.values if system.values is not None else np.arange(1, n + 1, dtype=float)
    diagnostics = []
    if np.any(beta < 0):
        diagnostics.append(f"negative bids at {np.count_nonzero(beta < 0)} grid points (min {beta.min():.3g})")
    drops = np.diff(beta)
    if np.any(drops < -MONOTONE_TOL):
        diagnostics.append(
            f"bid function decreases at {np.count_nonzero(drops < -MONOTONE_TOL)} grid points "
            f"(largest drop {-drops.min():.3g})"
        )
    for msg in diagnostics:
        log.warning("equilibrium solve: %s", msg)
    return EmpiricalBidFunction(values, beta, tuple(diagnostics))


def solve_equilibrium(sample, config: AuctionConfig) -> EmpiricalBidFunction:
    return solve(build_system(sample, config))


def bid_at(f: EmpiricalBidFunction, v):
    """Linear interpolation of the bid grid, clamped at both ends."""
    out = np.interp(v, f.grid_values, f.grid_bids)
    return float(out) if np.ndim(out) == 0 else out


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _sup_error(sampler, n, config, reference, seed, rep):
    values = sampler(rng_mod.generator(seed, "convergence", n, rep), n)
    f = solve_equilibrium(values, config)
    # the reference is only defined on its own grid; clamped extrapolation
    # beyond it would measure the reference's tail, not convergence
    ref_v = reference.grid_values
    inside = (f.grid_values >= ref_v[0]) & (f.grid_values <= ref_v[-1])
    if not inside.any():
        return math.nan
    diff = f.grid_bids[inside] - bid_at(reference, f.grid_values[inside])
    return float(np.max(np.abs(diff)))


def convergence_sweep(
    sampler: Sampler,
    n_list: Sequence[int],
    reps: int,
    config: AuctionConfig,
    reference_n: int = 2000,
    seed: int = 0,
    workers: int = 1,
    reference: EmpiricalBidFunction | None = None,
):
    """Sup-norm distance between small-sample solutions and a reference.

    The distance is taken over the grid points of each small-sample
    solution that fall inside the reference grid's range.

    Returns ``(rows, reference)`` where ``rows`` is a list of
    ``(n, rep, sup_error)`` ordered by ``(n, rep)``. Each repetition draws
    from its own stream ``(seed, "convergence", n, rep)`` so the table does
    not depend on ``workers``.
    """
    n_list = [int(n) for n in n_list]
    if reference_n < max(n_list):
        raise ValueError("reference_n must be at least max(n_list)")
    if reference is None:
        ref_values = sampler(rng_mod.generator(seed, "convergence", "reference"), reference_n)
        reference = solve_equilibrium(ref_values, config)
    jobs = [(n, rep) for n in sorted(n_list) for rep in range(reps)]
    args = [(sampler, n, config, reference, seed, rep) for n, rep in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(_sup_error, *zip(*args)))
    else:
        errors = [_sup_error(*a) for a in args]
    rows = [(n, rep, err) for (n, rep), err in zip(jobs, errors)]
    return rows, reference


def summarize_sweep(rows):
    """Per-``n`` mean, median, min and max of the sup errors."""
    out = {}
    for n in sorted({r[0] for r in rows}):
        errs = np.array([r[2] for r in rows if r[0] == n])
        out[n] = {
            "mean": float(errs.mean()),
            "median": float(np.median(errs)),
            "min": float(errs.min()),
            "max": float(errs.max()),
        }
    return out
