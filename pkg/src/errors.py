"""error hierarchy for the lattice laboratory"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """base class for every error raised by the laboratory"""

    exit_code = 1


class UsageError(LabError):
    """unknown experiment or inconsistent command line"""

    exit_code = 2


class InvalidInputError(LabError, ValueError):
    """malformed input: non-finite entries, wrong shapes, determinant off one"""

    exit_code = 3


class DomainError(LabError, ValueError):
    """input outside the region where an operation is defined"""

    exit_code = 3


class ResourceLimitError(LabError):
    """requested work exceeds a configured hard cap"""

    exit_code = 4


class MissingCacheError(LabError):
    """a factor orbit needed for streaming is absent or too short"""

    exit_code = 5


class MissingDecorationError(LabError):
    """orbit lacks the boundary decoration an experiment needs"""

    exit_code = 5


class CacheError(LabError):
    """orbit cache file cannot be trusted"""

    exit_code = 6


class CacheFormatError(CacheError):
    """bad magic or malformed header"""


class CacheVersionError(CacheError):
    """format version not understood by this build"""


class CacheChecksumError(CacheError):
    """body digest does not match the header"""


class CacheTruncatedError(CacheError):
    """file shorter than its header claims"""


class CacheValidationError(CacheError):
    """sampled distances disagree with recomputation"""


class NumericError(LabError, RuntimeError):
    """numerical procedure failed to converge"""

    exit_code = 7

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        """
        initialize numeric error

        args:
            message: human readable description
            diagnostics: values describing the failed attempt
        """
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
