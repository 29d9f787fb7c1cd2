"""Exception hierarchy shared by all modules."""


class GSPError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GSPError, ValueError):
    """Invalid auction or experiment configuration."""


class DimensionError(GSPError, ValueError):
    """Array lengths disagree with the auction configuration."""


class NumericalError(GSPError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


class SingularDiagonalError(NumericalError):
    """Forward substitution hit a zero or negative diagonal entry."""

    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"diagonal entry M[{index}, {index}] = {value!r} is not positive")


class UnsupportedVFunctionError(GSPError, ValueError):
    """The breakpoint sweep only handles v-functions with eta == 0."""


class ProvenanceError(GSPError):
    """A stored dataset or result failed its integrity check."""
