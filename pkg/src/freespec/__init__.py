"""Random matrix spectra, free probability transforms and their limit laws."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BranchError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    FreespecError,
    NumericError,
    SingularityError,
)

__all__ = [
    "__version__",
    "BranchError",
    "ConfigError",
    "ConvergenceError",
    "DivergenceError",
    "FreespecError",
    "NumericError",
    "SingularityError",
]
