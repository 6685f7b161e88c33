"""
Error types raised across the corridor pipeline.

Every error carries a stable ``code`` (used in the CLI's JSON error line) and an
optional ``details`` mapping with the values that caused it.
"""

from typing import Any, Dict, Optional


class CorridorError(Exception):
    """Base class for all pipeline errors."""

    code: str = "CorridorError"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Serializable form, mirrors the error-response shape."""
        return {"error": self.code, "message": self.message, "details": self.details}


# Camera geometry


class GeometryError(CorridorError):
    code = "GeometryError"


class DistanceBehindCameraError(GeometryError):
    code = "DistanceBehindCamera"


class RowOutOfImageError(GeometryError):
    code = "RowOutOfImage"


class AboveHorizonError(GeometryError):
    code = "AboveHorizon"


# Scene generation


class SpriteNotFoundError(CorridorError):
    code = "SpriteNotFound"


class PlacementOffImageError(CorridorError):
    code = "PlacementOffImage"


class EmptySpriteError(CorridorError):
    code = "EmptySprite"


class InfeasibleConstraintsError(CorridorError):
    code = "InfeasibleConstraints"


class InsufficientSpritesError(CorridorError):
    code = "InsufficientSprites"


# Segmentation / fusion


class IncompatibleDimensionsError(CorridorError):
    code = "IncompatibleDimensions"


class NonFiniteLogitsError(CorridorError):
    code = "NonFiniteLogits"


class DegenerateProfileError(CorridorError):
    """Width profile shorter than the smoothing window; reported as a status."""

    code = "DegenerateProfile"


# Evaluation


class NoObstacleInSceneError(CorridorError):
    code = "NoObstacleInScene"


class EmptyBinError(CorridorError):
    code = "EmptyBin"


# Files and configuration


class ConfigParseError(CorridorError):
    code = "ConfigParseError"


class IoFailureError(CorridorError):
    code = "IoFailure"


class FormatMismatchError(CorridorError):
    code = "FormatMismatch"


class BadMagicError(FormatMismatchError):
    code = "BadMagic"


class TruncatedFileError(FormatMismatchError):
    code = "TruncatedFile"


class DimensionMismatchError(FormatMismatchError):
    code = "DimensionMismatch"
