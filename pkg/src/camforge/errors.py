"""Exception types shared across the engine."""


class CamforgeError(Exception):
    """Base class for all engine errors."""


class NonFiniteInput(CamforgeError):
    """A map or image contains NaN or infinite values."""


class InvalidK(CamforgeError):
    """Retention level outside (0, 100]."""


class EmptyInput(CamforgeError):
    """An operation received no maps / no scores."""


class DimensionMismatch(CamforgeError):
    """Maps or images with incompatible shapes."""


class AllPixelsMasked(CamforgeError):
    """Imputation mask covers the whole image; the linear system is singular."""


class SolverDivergence(CamforgeError):
    """Iterative solver failed to reach the configured tolerance."""


class ClassOutOfRange(CamforgeError):
    """Requested class id not covered by the oracle."""


class TooManyGroups(CamforgeError):
    """More CAM groups than the enumeration supports."""


class MissingMap(CamforgeError):
    """A group member has no map in the experiment bundle."""


class GroupTableMismatch(CamforgeError):
    """Aggregating CRE reports with different group tables."""


class ManifestError(CamforgeError):
    """Malformed or incomplete manifest / bundle file."""
