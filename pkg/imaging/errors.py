"""
Exception types shared by the pipeline.

Bad inputs subclass ValueError, failed collaborators subclass RuntimeError.
"""

from typing import Optional


class ConfigError(ValueError):
    """A configuration value violates its invariant."""


class DimensionMismatch(ValueError):
    """Two rasters, masks or flows that must agree in size do not."""


class FlowSizeMismatch(DimensionMismatch):
    """A predicted flow does not match the image it was predicted for."""


class ImageFormatError(ValueError):
    """Unreadable, truncated or unsupported image file."""


class FlowFormatError(ValueError):
    """Malformed flow file (short file, oversized header)."""


class BadMagic(FlowFormatError):
    """Flow file does not start with the 202021.25 tag."""


class DegenerateMask(ValueError):
    """Mask has no usable document quadrilateral."""


class CornerNotOnContour(ValueError):
    """A corner could not be located on the traced contour."""


class SingularSystem(ValueError):
    """Thin-plate-spline system is singular (collinear or duplicated points)."""


class NoDocument(ValueError):
    """Segmenter found no document-sized component."""


class EmptyReference(ValueError):
    """CER was asked for against an empty reference text."""


class DegenerateHomography(ValueError):
    """Homography is not invertible within tolerance."""


class PredictorFailed(RuntimeError):
    """A flow predictor raised, exited non-zero or produced no usable flow."""

    def __init__(self, message: str, iteration: Optional[int] = None, status: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration
        self.status = status

    def __str__(self):
        text = super().__str__()
        if self.iteration is not None:
            text = f"iteration {self.iteration}: {text}"
        if self.status is not None:
            text = f"{text} (exit status {self.status})"
        return text
