"""Reserve price from estimated valuation densities.

Pipeline:

1. fit the bid CDF ``G`` (empirical) and density ``g`` (triangular KDE);
2. map every observed bid back to a valuation by inverting the
   equilibrium first-order condition;
3. fit ``F`` and ``f`` on the recovered valuations;
4. solve ``r = (1 - F(r)) / f(r)`` for the reserve.

Under rank-by-revenue the pipeline works on scores ``e_i * b_i``; the
per-bidder reserves are then ``r / e_i``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .auction_model import AuctionConfig, ReserveVector
from .exceptions import NumericalError

__all__ = [
    "Kernel",
    "EmpiricalCdf",
    "Kde",
    "RecoveredValuations",
    "ReserveEstimate",
    "bandwidth",
    "kde_eval",
    "invert_bid",
    "invert_bids",
    "recover_valuations",
    "fixed_point_reserve",
    "solve_reserve",
    "reserve_vector",
    "histogram",
]

log = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8
MIN_EFFECTIVE = 10
GRID_POINTS = 2000
BISECT_TOL = 1e-6


class Kernel(str, enum.Enum):
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class EmpiricalCdf:
    points: np.ndarray

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=float).ravel())
        if pts.size == 0:
            raise ValueError("empty sample")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __call__(self, x):
        out = np.searchsorted(self.points, x, side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out


def bandwidth(sample) -> float:
    """Rule-of-thumb bandwidth ``1.06 * sd * n**(-1/5)``."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("bandwidth needs at least two points")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise ValueError("bandwidth is undefined for a constant sample")
    return 1.06 * sd * x.size ** (-0.2)


@dataclass(frozen=True)
class Kde:
    points: np.ndarray
    h: float
    kernel: Kernel = Kernel.TRIANGULAR

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=float).ravel())
        if pts.size == 0:
            raise ValueError("empty sample")
        if not self.h > 0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    @classmethod
    def fit(cls, sample) -> "Kde":
        return cls(sample, bandwidth(sample))

    def __call__(self, x):
        return kde_eval(self, x)


def kde_eval(kde: Kde, x, chunk: int = 1024):
    """Density estimate ``(1/(n h)) sum_i K((x - b_i)/h)`` with ``K(u) = (1 - |u|)+``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    pts, h = kde.points, kde.h
    out = np.empty(xs.shape)
    flat_in, flat_out = xs.ravel(), out.reshape(-1)
    for start in range(0, flat_in.size, chunk):
        block = flat_in[start : start + chunk]
        # only points within one bandwidth contribute
        lo = np.searchsorted(pts, block.min() - h, side="left")
        hi = np.searchsorted(pts, block.max() + h, side="right")
        u = np.abs(block[:, None] - pts[None, lo:hi]) / h
        flat_out[start : start + chunk] = np.clip(1.0 - u, 0.0, None).sum(axis=1)
    out /= pts.size * h
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class RecoveredValuations:
    """Valuations inferred from bids.

    ``flagged[k]`` is true when the denominator of the inversion fell below
    :data:`DENOMINATOR_FLOOR` for ``bids[k]``; such entries are ignored when
    fitting the valuation distribution.
    """

    values: np.ndarray
    bids: np.ndarray
    flagged: np.ndarray

    @property
    def usable(self) -> np.ndarray:
        return self.values[~self.flagged & np.isfinite(self.values)]

    def __len__(self):
        return self.values.shape[0]


def _power(x, k):
    """``x**k`` with the convention that a zero coefficient kills negative powers."""
    return np.power(x, k) if k >= 0 else np.zeros_like(x)


def invert_bids(bids, ghat: EmpiricalCdf, gdens: Kde, config: AuctionConfig, sample=None):
    """Vectorized bid-to-valuation inversion.

    ``sample`` is the bid sample behind ``ghat``; it defaults to
    ``ghat.points`` and is used for the running estimate of
    ``int_0^b p G(u)^(p-1) u g(u) du``.

    Returns ``(values, flagged)``.
    """
    b = np.asarray(bids, dtype=float)
    sample = ghat.points if sample is None else np.sort(np.asarray(sample, dtype=float))
    G = ghat(b)
    g = gdens(b)
    G_sample = ghat(sample)
    below = np.searchsorted(sample, b, side="right")
    N = config.n_bidders

    numer_a = np.zeros_like(b)
    numer_b = np.zeros_like(b)
    denom = np.zeros_like(b)
    for s, c_s in enumerate(config.position_factors, start=1):
        p = N - s
        binom = math.comb(N - 1, s - 1)
        tail = 1.0 - G
        numer_a += c_s * binom * _power(tail, s - 1) * b * p * _power(G, p - 1) * g
        if s > 1 and p > 0:
            integrand = p * _power(G_sample, p - 1) * sample
            running = np.concatenate([[0.0], np.cumsum(integrand)]) / sample.size
            numer_b += c_s * binom * (s - 1) * _power(tail, s - 2) * g * running[below]
        slope = p * _power(G, p - 1) * _power(tail, s - 1)
        if s > 1:
            slope = slope - (s - 1) * _power(tail, s - 2) * _power(G, p)
        denom += c_s * binom * g * slope

    flagged = ~(denom >= DENOMINATOR_FLOOR)
    values = (numer_a - numer_b) / np.where(flagged, DENOMINATOR_FLOOR, denom)
    return values, flagged


def invert_bid(b: float, ghat: EmpiricalCdf, gdens: Kde, config: AuctionConfig, sorted_bids=None) -> float:
    values, flagged = invert_bids(np.array([b], dtype=float), ghat, gdens, config, sorted_bids)
    if flagged[0]:
        log.debug("inversion denominator floored at bid %r", b)
    return float(values[0])


def recover_valuations(dataset, config: AuctionConfig) -> RecoveredValuations:
    """Pool all observed scores and invert each one."""
    bids = np.atleast_2d(np.asarray(dataset, dtype=float))
    scores = (bids * config.effective_ctr).ravel()
    if scores.size < MIN_EFFECTIVE:
        raise ValueError(f"need at least {MIN_EFFECTIVE} bids, got {scores.size}")
    ghat = EmpiricalCdf(scores)
    gdens = Kde.fit(scores)
    values, flagged = invert_bids(scores, ghat, gdens, config)
    if flagged.any():
        log.info("%d of %d inversions hit the denominator floor", flagged.sum(), flagged.size)
    return RecoveredValuations(values=values, bids=scores, flagged=flagged)


@dataclass(frozen=True)
class ReserveEstimate:
    """Outcome of the fixed-point search.

    ``is_root`` is false when no sign change was found and ``reserve`` is
    only the grid point with the smallest residual.
    """

    reserve: float
    is_root: bool
    roots: tuple

    def __float__(self):
        return self.reserve


def _bisect(h, lo, hi, tol):
    h_lo = h(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if (h_mid > 0) == (h_lo > 0):
            lo, h_lo = mid, h_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fixed_point_reserve(
    cdf: Callable,
    pdf: Callable,
    lo: float,
    hi: float,
    select: Callable | None = None,
    grid_points: int = GRID_POINTS,
    tol: float = BISECT_TOL,
) -> ReserveEstimate:
    """Roots of ``r f(r) - (1 - F(r))`` on ``[lo, hi]``.

    A sign scan on ``grid_points`` equally spaced points brackets every root,
    then bisection refines each to ``tol``. ``select`` maps the list of roots
    to the one returned; the default keeps the root with the largest
    posted-price revenue ``r (1 - F(r))``.
    """

    def h(r):
        return r * pdf(r) - (1.0 - cdf(r))

    grid = np.linspace(lo, hi, grid_points)
    try:
        values = np.broadcast_to(h(grid), grid.shape)
    except (TypeError, ValueError):
        # scalar-only callables
        values = np.array([h(r) for r in grid])
    positive = values > 0
    crossings = np.flatnonzero(positive[1:] != positive[:-1])
    if crossings.size == 0:
        k = int(np.argmin(np.abs(values)))
        return ReserveEstimate(float(grid[k]), False, ())
    roots = tuple(_bisect(h, grid[k], grid[k + 1], tol) for k in crossings)
    if len(roots) == 1:
        return ReserveEstimate(roots[0], True, roots)
    if select is None:
        chosen = max(roots, key=lambda r: r * (1.0 - cdf(r)))
    else:
        chosen = select(roots)
    return ReserveEstimate(float(chosen), True, roots)


def solve_reserve(values, dataset=None, config: AuctionConfig | None = None) -> ReserveEstimate:
    """Fixed-point reserve from recovered valuations.

    ``values`` is a :class:`RecoveredValuations` or a plain array of
    valuations. When several roots exist and ``dataset``/``config`` are
    given, the root with the lowest mean training loss wins.
    """
    if isinstance(values, RecoveredValuations):
        v = values.usable
    else:
        v = np.asarray(values, dtype=float).ravel()
        v = v[np.isfinite(v)]
    if v.size < MIN_EFFECTIVE:
        raise ValueError(f"need at least {MIN_EFFECTIVE} usable valuations, got {v.size}")
    F = EmpiricalCdf(v)
    f = Kde.fit(v)
    select = None
    if dataset is not None and config is not None:
        from .reserve_discriminative import evaluate_reserve

        def select(roots):
            return min(roots, key=lambda r: evaluate_reserve(r, dataset, config))

    est = fixed_point_reserve(F, f, float(v.min()), float(v.max()), select=select)
    if not est.is_root:
        log.warning("no sign change of r f(r) - (1 - F(r)); returning the smallest residual")
    return est


def reserve_vector(r_bar: float, config: AuctionConfig) -> ReserveVector:
    return ReserveVector(tuple(float(r_bar) / config.effective_ctr))


def histogram(values, bins=30, range=None):
    """Bin edges and counts, the payload of the histogram CSVs."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=range)
    return edges, counts


def require_root(est: ReserveEstimate) -> float:
    if not est.is_root:
        raise NumericalError(f"fixed-point search found no root (best residual at {est.reserve})")
    return est.reserve
