"""Design, composition and stress-testing of fast trapped-ion phase gates."""

from fastgate.errors import (
    ConfigurationUnstable,
    InvalidArgument,
    NumericalFailure,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationUnstable",
    "InvalidArgument",
    "NumericalFailure",
    "TruncationError",
    "__version__",
]
