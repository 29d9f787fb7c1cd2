"""Reserve-price learning for generalized second-price auctions.

Submodules
----------
auction_model
    Configuration, ranking, revenue and the scalar-reserve loss.
equilibrium
    Symmetric equilibrium bids of the discrete auction.
reserve_discriminative
    Exact empirical-loss minimization over the scalar reserve.
reserve_density
    Reserve from valuations recovered by inverting equilibrium bids.
harness
    Simulation, experiment drivers, file formats and the command line.
"""

__version__ = "0.1.0"

from .auction_model import AuctionConfig, RankingRule, revenue, loss, simplified_loss  # noqa: E402
from .exceptions import (  # noqa: E402
    ConfigError,
    DimensionError,
    GSPError,
    NumericalError,
    ProvenanceError,
    SingularDiagonalError,
    UnsupportedVFunctionError,
)

__all__ = [
    "__version__",
    "AuctionConfig",
    "RankingRule",
    "revenue",
    "loss",
    "simplified_loss",
    "GSPError",
    "ConfigError",
    "DimensionError",
    "NumericalError",
    "ProvenanceError",
    "SingularDiagonalError",
    "UnsupportedVFunctionError",
]
