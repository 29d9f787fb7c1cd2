"""GSP auction mechanics: configuration, ranking, revenue and loss.

Conventions
-----------
Bidders and slots are indexed from 0 in code. The sorted score sequence is
padded with a trailing zero so that the payment of the last slot is always
well defined, i.e. ``q^(N+1) = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, DimensionError

__all__ = [
    "RankingRule",
    "AuctionConfig",
    "BidProfile",
    "ReserveVector",
    "Allocation",
    "quality_scores",
    "rank",
    "revenue",
    "loss",
    "simplified_loss",
]


class RankingRule(str, enum.Enum):
    RANK_BY_BID = "rank_by_bid"
    RANK_BY_REVENUE = "rank_by_revenue"


@dataclass(frozen=True)
class AuctionConfig:
    """Static description of a GSP auction.

    Parameters
    ----------
    n_bidders : int
        Number of advertisers ``N``.
    n_slots : int
        Number of ad slots ``S``, ``1 <= S <= N``.
    position_factors : sequence of float
        ``c_1 > c_2 > ... > c_S > 0``, each in ``[0, 1]``.
    ctr : sequence of float, optional
        Click-through rates ``e_i`` in ``(0, 1]``. Defaults to all ones.
    ranking_rule : RankingRule
        Under rank-by-bid the click-through rates are ignored when scoring.
    """

    n_bidders: int
    n_slots: int
    position_factors: tuple
    ctr: tuple = None
    ranking_rule: RankingRule = RankingRule.RANK_BY_REVENUE

    def __post_init__(self):
        N, S = self.n_bidders, self.n_slots
        if int(N) != N or N < 1:
            raise ConfigError(f"n_bidders must be a positive integer, got {N!r}")
        if int(S) != S or not 1 <= S <= N:
            raise ConfigError(f"n_slots must satisfy 1 <= S <= N={N}, got {S!r}")
        c = tuple(float(x) for x in self.position_factors)
        if len(c) != S:
            raise ConfigError(f"expected {S} position factors, got {len(c)}")
        if any(not 0.0 <= x <= 1.0 for x in c):
            raise ConfigError(f"position factors must lie in [0, 1], got {c}")
        if any(c[s] <= c[s + 1] for s in range(S - 1)):
            raise ConfigError(f"position factors must be strictly decreasing, got {c}")
        if c[-1] <= 0.0:
            raise ConfigError("the last position factor must be positive")
        e = (1.0,) * N if self.ctr is None else tuple(float(x) for x in self.ctr)
        if len(e) != N:
            raise ConfigError(f"expected {N} click-through rates, got {len(e)}")
        if any(not 0.0 < x <= 1.0 for x in e):
            raise ConfigError(f"click-through rates must lie in (0, 1], got {e}")
        object.__setattr__(self, "n_bidders", int(N))
        object.__setattr__(self, "n_slots", int(S))
        object.__setattr__(self, "position_factors", c)
        object.__setattr__(self, "ctr", e)
        object.__setattr__(self, "ranking_rule", RankingRule(self.ranking_rule))

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.position_factors)

    @property
    def effective_ctr(self) -> np.ndarray:
        """CTRs used for scoring; all ones under rank-by-bid."""
        if self.ranking_rule is RankingRule.RANK_BY_BID:
            return np.ones(self.n_bidders)
        return np.asarray(self.ctr)

    @property
    def min_ctr(self) -> float:
        return float(self.effective_ctr.min())

    @property
    def sum_position_factors(self) -> float:
        return float(sum(self.position_factors))

    def to_dict(self) -> dict:
        return {
            "n_bidders": self.n_bidders,
            "n_slots": self.n_slots,
            "position_factors": list(self.position_factors),
            "ctr": list(self.ctr),
            "ranking_rule": self.ranking_rule.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuctionConfig":
        try:
            return cls(
                n_bidders=d["n_bidders"],
                n_slots=d["n_slots"],
                position_factors=tuple(d["position_factors"]),
                ctr=None if d.get("ctr") is None else tuple(d["ctr"]),
                ranking_rule=RankingRule(d.get("ranking_rule", RankingRule.RANK_BY_REVENUE)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed auction config: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def _vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DimensionError(f"{name} must have length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class BidProfile:
    bids: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.bids)
        if any(not x >= 0.0 for x in b):
            raise ValueError(f"bids must be non-negative, got {b}")
        object.__setattr__(self, "bids", b)

    def __len__(self):
        return len(self.bids)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.bids, dtype=dtype)


@dataclass(frozen=True)
class ReserveVector:
    reserves: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.reserves)
        if any(not x >= 0.0 for x in r):
            raise ValueError(f"reserves must be non-negative, got {r}")
        object.__setattr__(self, "reserves", r)

    def __len__(self):
        return len(self.reserves)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.reserves, dtype=dtype)


@dataclass(frozen=True)
class Allocation:
    """Outcome of ranking.

    ``order`` is the full descending ranking of all bidders; ``slot_to_bidder``
    is its first ``S`` entries. ``scores`` has length ``N + 1`` with the
    padding zero at the end.
    """

    order: np.ndarray
    scores: np.ndarray
    n_slots: int

    @property
    def slot_to_bidder(self) -> np.ndarray:
        return self.order[: self.n_slots]


def quality_scores(config: AuctionConfig, reserves, bids) -> np.ndarray:
    """Scores ``e_i * b_i * 1{b_i >= r_i}`` (``e_i = 1`` under rank-by-bid)."""
    N = config.n_bidders
    b = _vector(bids, N, "bids")
    r = _vector(reserves, N, "reserves")
    return np.where(b >= r, config.effective_ctr * b, 0.0)


def rank(scores, tie_seed: int = 0, n_slots: int | None = None) -> Allocation:
    """Sort bidders by score, breaking ties with a seeded uniform shuffle."""
    q = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("scores must be finite")
    keys = np.random.default_rng(tie_seed).random(q.shape[0])
    # lexsort sorts by the last key first
    order = np.lexsort((keys, -q))
    padded = np.append(q[order], 0.0)
    S = q.shape[0] if n_slots is None else n_slots
    return Allocation(order=order, scores=padded, n_slots=S)


def revenue(config: AuctionConfig, reserves, bids, tie_seed: int = 0) -> float:
    """Seller revenue of one auction under per-bidder reserves."""
    r = _vector(reserves, config.n_bidders, "reserves")
    q = quality_scores(config, r, bids)
    alloc = rank(q, tie_seed, config.n_slots)
    e = config.effective_ctr
    total = 0.0
    for s in range(config.n_slots):
        winner = alloc.order[s]
        q_here, q_next = alloc.scores[s], alloc.scores[s + 1]
        e_s, r_s = e[winner], r[winner]
        if q_next >= e_s * r_s:
            pay = q_next / e_s
        elif e_s * r_s <= q_here:
            pay = r_s
        else:
            pay = 0.0
        total += config.position_factors[s] * pay
    return total


def loss(config: AuctionConfig, reserves, bids, tie_seed: int = 0) -> float:
    return -revenue(config, reserves, bids, tie_seed)


def simplified_loss(r: float, config: AuctionConfig, bids) -> float:
    """Loss under the scalar reserve ``r`` applied to scores ``e_i * b_i``.

    Unlike :func:`loss` there is no participation filter on the scores and
    ties are broken by bidder index.
    """
    if r < 0:
        raise ValueError(f"reserve must be non-negative, got {r}")
    b = _vector(bids, config.n_bidders, "bids")
    e = config.effective_ctr
    q = e * b
    order = np.argsort(-q, kind="stable")
    q_sorted = np.append(q[order], 0.0)
    total = 0.0
    for s in range(config.n_slots):
        hi, lo = q_sorted[s], q_sorted[s + 1]
        weight = config.position_factors[s] / e[order[s]]
        if lo >= r:
            total += weight * lo
        elif r <= hi:
            total += weight * r
    return -total
