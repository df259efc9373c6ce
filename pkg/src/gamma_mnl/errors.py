"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Inputs violate a documented precondition (shape, finiteness, range)."""


class NumericalRangeError(ArithmeticError):
    """A quantity left the representable floating-point range."""


class UnsupportedConfigurationError(ValueError):
    """The requested sampler/prior combination is not supported."""


class DataLoadError(ValueError):
    """A dataset or draws file could not be parsed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class SamplerError(RuntimeError):
    """The chain produced an unusable state (e.g. a non-finite draw)."""

    def __init__(self, message: str, scan: int | None = None):
        self.scan = scan
        super().__init__(message if scan is None else f"scan {scan}: {message}")


class DegenerateChainWarning(UserWarning):
    """A chain has zero variance; ESS is reported as the chain length."""
