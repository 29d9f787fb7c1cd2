"""Exact empirical-risk minimization of the scalar reserve price.

Every (auction, slot) pair contributes a "broken V" shaped loss

    l(r) = -w * (p2 * 1{p2 >= r} + r * 1{p2 < r <= p1})

with ``p1 >= p2`` the scores at the slot and the slot below and
``w = c_s / e^(s)``. The sum over the sample is piecewise linear with knots
at the ``p1``/``p2`` values and non-increasing on every piece, so its
minimum is attained at a knot. :func:`minimize` sweeps the sorted knots
once, carrying the offset and slope of the current piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .auction_model import AuctionConfig, simplified_loss
from .exceptions import DimensionError, UnsupportedVFunctionError

__all__ = [
    "VFunctionParams",
    "VBreakpoints",
    "ReserveSolution",
    "extract_breakpoints",
    "breakpoints_from_v_functions",
    "sweep_coefficients",
    "empirical_loss",
    "minimize",
    "brute_force",
    "generalization_bound",
    "evaluate_reserve",
]

# Candidates whose swept loss lies this close to the best one are re-scored
# by exact summation before the final pick.
_REFINE_RTOL = 1e-9


@dataclass(frozen=True)
class VFunctionParams:
    """Parameters of a v-function ``V(r, q1, q2)``.

    Only ``eta == 0`` is supported downstream, in which case ``a3`` is unused.
    """

    a1: float
    a2: float
    a3: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "eta"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def for_slot(cls, weight: float, q2: float) -> "VFunctionParams":
        return cls(a1=weight * q2, a2=weight)


@dataclass(frozen=True)
class VBreakpoints:
    """One ``(p1, p2, weight)`` triple per (auction, slot)."""

    p1: np.ndarray
    p2: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.p1, dtype=float).ravel()
        p2 = np.asarray(self.p2, dtype=float).ravel()
        w = np.asarray(self.weight, dtype=float).ravel()
        if not p1.shape == p2.shape == w.shape:
            raise DimensionError("p1, p2 and weight must have the same length")
        if np.any(p2 < 0) or np.any(p1 < p2):
            raise ValueError("breakpoints must satisfy p1 >= p2 >= 0")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)
        object.__setattr__(self, "weight", w)

    def __len__(self):
        return self.p1.shape[0]

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]]) -> "VBreakpoints":
        arr = np.asarray(list(triples), dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def triples(self):
        return list(zip(self.p1.tolist(), self.p2.tolist(), self.weight.tolist()))


@dataclass(frozen=True)
class ReserveSolution:
    reserve: float
    loss_value: float
    candidates_evaluated: int


def extract_breakpoints(dataset, config: AuctionConfig) -> VBreakpoints:
    """Scores at each slot and the slot below, for every auction.

    ``dataset`` is an ``(n, N)`` array of bids (or a sequence of bid
    profiles). Scores are sorted in descending order with ties broken by
    bidder index.
    """
    bids = np.asarray(dataset, dtype=float)
    if bids.ndim == 1:
        bids = bids[None, :]
    n, N = bids.shape
    if N != config.n_bidders:
        raise DimensionError(f"expected {config.n_bidders} bids per auction, got {N}")
    if n < 1:
        raise ValueError("need at least one auction")
    S = config.n_slots
    e = config.effective_ctr
    scores = bids * e
    order = np.argsort(-scores, axis=1, kind="stable")
    sorted_scores = np.take_along_axis(scores, order, axis=1)
    sorted_scores = np.concatenate([sorted_scores, np.zeros((n, 1))], axis=1)
    p1 = sorted_scores[:, :S]
    p2 = sorted_scores[:, 1 : S + 1]
    weight = config.c[None, :] / e[order[:, :S]]
    return VBreakpoints(p1.ravel(), p2.ravel(), weight.ravel())


def breakpoints_from_v_functions(params, q1, q2) -> VBreakpoints:
    """Build breakpoints from explicit v-function parameters.

    Raises :class:`UnsupportedVFunctionError` for ``eta > 0``.
    """
    params = list(params)
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if not len(params) == q1.size == q2.size:
        raise DimensionError("params, q1 and q2 must have the same length")
    for k, prm in enumerate(params):
        if prm.eta > 0:
            raise UnsupportedVFunctionError(f"v-function {k} has eta={prm.eta}; only eta == 0 is supported")
        if not math.isclose(prm.a1, prm.a2 * q2[k], rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"v-function {k} violates a1 == a2 * q2")
    return VBreakpoints(q1, q2, np.array([prm.a2 for prm in params]))


def _pair_losses(bp: VBreakpoints, r: float) -> np.ndarray:
    active = (bp.p2 < r) & (r <= bp.p1)
    return -bp.weight * np.where(bp.p2 >= r, bp.p2, np.where(active, r, 0.0))


def empirical_loss(bp: VBreakpoints, r: float) -> float:
    """Total loss at ``r`` by direct, correctly rounded summation."""
    return math.fsum(_pair_losses(bp, float(r)).tolist())


def sweep_coefficients(bp: VBreakpoints):
    """Offset and slope of the loss on each piece.

    Returns ``(knots, d1, d2)`` with ``knots`` the sorted distinct values of
    ``{0} U p1 U p2``. On ``(knots[k-1], knots[k]]`` (and at ``knots[0]``)
    the total loss equals ``d1[k] - r * d2[k]`` where

    * ``d1 = -sum w * p2`` over pairs with ``p2 >= r``,
    * ``d2 = sum w`` over pairs with ``p2 < r <= p1``.
    """
    if len(bp) == 0:
        raise ValueError("no breakpoints")
    knots = np.unique(np.concatenate([[0.0], bp.p1, bp.p2]))

    by_p2 = np.argsort(bp.p2, kind="stable")
    p2_sorted = bp.p2[by_p2]
    w_by_p2 = bp.weight[by_p2]
    wp2_cum = np.concatenate([[0.0], np.cumsum(w_by_p2 * p2_sorted)])
    w2_cum = np.concatenate([[0.0], np.cumsum(w_by_p2)])

    by_p1 = np.argsort(bp.p1, kind="stable")
    p1_sorted = bp.p1[by_p1]
    w1_cum = np.concatenate([[0.0], np.cumsum(bp.weight[by_p1])])

    # pairs leave the "p2 >= r" set once the sweep passes their p2 value and
    # leave the active set once it passes their p1 value
    below_p2 = np.searchsorted(p2_sorted, knots, side="left")
    below_p1 = np.searchsorted(p1_sorted, knots, side="left")
    d1 = -(wp2_cum[-1] - wp2_cum[below_p2])
    d2 = w2_cum[below_p2] - w1_cum[below_p1]
    return knots, d1, d2


def _best(candidates: np.ndarray, values: Sequence[float]) -> int:
    """Index of the smallest value; ties go to the smallest candidate."""
    best = 0
    for k in range(1, len(candidates)):
        if values[k] < values[best] or (values[k] == values[best] and candidates[k] < candidates[best]):
            best = k
    return best


def minimize(bp: VBreakpoints) -> ReserveSolution:
    """Global minimizer of the empirical loss in ``O(m log m)`` for ``m`` pairs."""
    if len(bp) == 0:
        raise ValueError("no breakpoints")
    knots, d1, d2 = sweep_coefficients(bp)
    swept = d1 - knots * d2
    lowest = swept.min()
    slack = _REFINE_RTOL * max(1.0, abs(lowest))
    near = np.flatnonzero(swept <= lowest + slack)
    exact = [empirical_loss(bp, knots[k]) for k in near]
    b = _best(knots[near], exact)
    return ReserveSolution(float(knots[near[b]]), exact[b], int(knots.size))


def brute_force(bp: VBreakpoints) -> ReserveSolution:
    """Evaluate the loss at 0 and at every breakpoint value; ``O(m^2)``."""
    if len(bp) == 0:
        raise ValueError("no breakpoints")
    candidates = np.unique(np.concatenate([[0.0], bp.p1, bp.p2]))
    values = [empirical_loss(bp, r) for r in candidates]
    k = _best(candidates, values)
    return ReserveSolution(float(candidates[k]), values[k], int(candidates.size))


def generalization_bound(M_sum_c: float, m_min_e: float, n: int, delta: float) -> float:
    """Uniform deviation between empirical and expected loss at confidence ``1 - delta``.

    ``M_sum_c`` is the sum of the position factors and ``m_min_e`` the
    smallest click-through rate.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if m_min_e <= 0:
        raise ValueError("the minimum click-through rate must be positive")
    if M_sum_c < 0:
        raise ValueError("the sum of position factors must be non-negative")
    return (
        1 / math.sqrt(n)
        + math.sqrt(math.log(math.e * n) / n)
        + math.sqrt(M_sum_c * math.log(1 / delta) / (2 * m_min_e * n))
    )


def evaluate_reserve(r: float, dataset, config: AuctionConfig) -> float:
    """Mean simplified loss of the scalar reserve ``r`` over the auctions."""
    bids = np.atleast_2d(np.asarray(dataset, dtype=float))
    return math.fsum(simplified_loss(r, config, b) for b in bids) / bids.shape[0]
