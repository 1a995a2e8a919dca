"""
Errors - Exception hierarchy for the gait toolkit

Every error raised on purpose by the package derives from GaitError, which
is a ValueError so callers that only know the builtin contract keep working.
The class attribute ``exit_code`` is what the CLI exits with.
"""

from typing import Optional


class GaitError(ValueError):
    """Base class for all toolkit errors"""

    exit_code = 1


# --- configuration (exit 2) ---

class ConfigurationError(GaitError):
    exit_code = 2


class TopologyError(ConfigurationError):
    """Skeleton topology or hypergraph preset violates its invariants"""


class UnsupportedTopologyError(TopologyError):
    """Operation only defined for the canonical 17-joint skeleton"""


class BatchCompositionError(ConfigurationError):
    """Contrastive batch lacks positives or negatives"""


class ProtocolError(ConfigurationError):
    """Evaluation protocol cannot be applied to the given embeddings"""


class ArtifactError(ConfigurationError):
    """Upstream artifact is missing or incompatible"""


# --- data (exit 3) ---

class DataError(GaitError):
    exit_code = 3


class ParseError(DataError):
    """Malformed dataset line"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    """Malformed keypoint row in an imported dump"""


class ContractError(DataError):
    """Array shapes do not match what an operation expects"""


# --- numeric (exit 4) ---

class NumericError(GaitError):
    exit_code = 4


class DegenerateDepthError(NumericError):
    """A homogeneous coordinate is too close to zero to normalize"""

    def __init__(self, frame: int, joint: int, w: float):
        self.frame = frame
        self.joint = joint
        self.w = w
        super().__init__(
            f"degenerate depth at frame {frame}, joint {joint} (w={w:.3e})"
        )


class DegenerateCameraError(NumericError):
    pass


class DegeneratePairError(NumericError):
    pass


class IsolatedElementError(NumericError):
    """Hypergraph has a node or hyperedge with zero degree"""


class NormalizationError(NumericError):
    """Zero-length feature cannot be L2-normalized"""


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the documented CLI exit code

    Args:
        error: Raised exception

    Returns:
        Process exit code
    """
    if isinstance(error, GaitError):
        return error.exit_code
    if isinstance(error, (FileNotFoundError, OSError)):
        return DataError.exit_code
    return 1
