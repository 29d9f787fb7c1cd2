"""On-disk formats for datasets and results.

A dataset is a CSV with header ``auction_id,bidder_id,bid`` (one row per
bid, floats written with ``repr`` so they round-trip exactly) plus a JSON
sidecar at ``<csv>.json`` carrying the provenance record and the SHA-256
of the CSV bytes. Results are single JSON documents.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..auction_model import AuctionConfig, simplified_loss
from ..exceptions import DimensionError, ProvenanceError

__all__ = ["Dataset", "ResultRecord", "sha256_bytes", "dump_json", "score_reserve"]

CSV_HEADER = ("auction_id", "bidder_id", "bid")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dump_json(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


@dataclass(frozen=True)
class Dataset:
    """``n`` auctions of ``N`` bids each.

    ``valuations`` holds the true valuations behind simulated bids. It is
    kept in memory for diagnostics and never written to disk.
    """

    bids: np.ndarray
    provenance: dict = field(default_factory=dict)
    valuations: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.bids, dtype=float)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise DimensionError(f"bids must be an (n, N) matrix, got shape {b.shape}")
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            raise ValueError("bids must be finite and non-negative")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bids", b)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def n_auctions(self) -> int:
        return self.bids.shape[0]

    @property
    def n_bidders(self) -> int:
        return self.bids.shape[1]

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for a, row in enumerate(self.bids):
            for i, bid in enumerate(row):
                writer.writerow((a, i, repr(float(bid))))
        return buf.getvalue().encode("utf-8")

    def save(self, path) -> Path:
        """Write the CSV and its sidecar; returns the CSV path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = self.to_csv_bytes()
        path.write_bytes(payload)
        meta = {
            "n_auctions": self.n_auctions,
            "n_bidders": self.n_bidders,
            "provenance": self.provenance,
            "sha256": sha256_bytes(payload),
        }
        _sidecar(path).write_text(dump_json(meta))
        return path

    @classmethod
    def load(cls, path) -> "Dataset":
        """Read a dataset, rejecting it if the CSV does not match its sidecar."""
        path = Path(path)
        side = _sidecar(path)
        if not side.exists():
            raise ProvenanceError(f"missing provenance sidecar {side}")
        meta = json.loads(side.read_text())
        payload = path.read_bytes()
        if sha256_bytes(payload) != meta.get("sha256"):
            raise ProvenanceError(f"{path} does not match the hash recorded in {side.name}")
        rows = list(csv.reader(io.StringIO(payload.decode("utf-8"))))
        if tuple(rows[0]) != CSV_HEADER:
            raise ProvenanceError(f"unexpected header {rows[0]}")
        n, N = int(meta["n_auctions"]), int(meta["n_bidders"])
        bids = np.full((n, N), np.nan)
        for a, i, bid in rows[1:]:
            bids[int(a), int(i)] = float(bid)
        if np.isnan(bids).any():
            raise ProvenanceError(f"{path} is missing bids")
        return cls(bids, meta.get("provenance", {}))


def score_reserve(r: float, bids, config: AuctionConfig):
    """Per-auction revenues of the scalar reserve ``r``.

    Returns ``(mean, std_error, std_dev)``; the mean is a correctly rounded
    sum, and the spreads use ``ddof=1``.
    """
    revs = [-simplified_loss(r, config, b) for b in np.atleast_2d(bids)]
    n = len(revs)
    mean = math.fsum(revs) / n
    sd = float(np.std(revs, ddof=1)) if n > 1 else 0.0
    return mean, sd / math.sqrt(n), sd


@dataclass(frozen=True)
class ResultRecord:
    """Test-set performance of one learned reserve.

    ``runtime`` is wall-clock seconds of training. It is excluded from
    :meth:`to_dict` so that result files are a pure function of the inputs.
    """

    method: str
    reserve: float
    reserves: tuple
    mean_revenue: float
    std_error: float
    std_dev: float
    n_test: int
    runtime: float = field(default=0.0, compare=False)

    @classmethod
    def evaluate(cls, method: str, r: float, test, config: AuctionConfig, runtime: float = 0.0):
        bids = test.bids if isinstance(test, Dataset) else np.atleast_2d(test)
        mean, se, sd = score_reserve(r, bids, config)
        reserves = tuple(float(r) / float(e) for e in config.effective_ctr)
        return cls(method, float(r), reserves, mean, se, sd, int(bids.shape[0]), float(runtime))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "reserve": self.reserve,
            "reserves": list(self.reserves),
            "mean_revenue": self.mean_revenue,
            "std_error": self.std_error,
            "std_dev": self.std_dev,
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(
            d["method"],
            float(d["reserve"]),
            tuple(float(x) for x in d["reserves"]),
            float(d["mean_revenue"]),
            float(d["std_error"]),
            float(d["std_dev"]),
            int(d["n_test"]),
        )

    def verify(self, test, config: AuctionConfig, tol: float = 1e-9) -> None:
        """Recompute the mean revenue on ``test``; raise if it disagrees."""
        bids = test.bids if isinstance(test, Dataset) else np.atleast_2d(test)
        if bids.shape[0] != self.n_test:
            raise ProvenanceError(f"record covers {self.n_test} auctions, test set has {bids.shape[0]}")
        mean, _, _ = score_reserve(self.reserve, bids, config)
        if not abs(mean - self.mean_revenue) <= tol:
            raise ProvenanceError(
                f"{self.method}: stored revenue {self.mean_revenue!r} but re-evaluation gives {mean!r}"
            )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_json(self.to_dict()))
        return path

    @classmethod
    def load(cls, path, test=None, config: AuctionConfig | None = None) -> "ResultRecord":
        """Read a record; when ``test`` and ``config`` are given, re-verify it."""
        rec = cls.from_dict(json.loads(Path(path).read_text()))
        if test is not None and config is not None:
            rec.verify(test, config)
        return rec
