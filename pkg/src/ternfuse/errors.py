"""Exception hierarchy shared by every ternfuse module."""

from __future__ import annotations


class TernaryError(Exception):
    """Base class for all library errors."""


class InvalidEncoding(TernaryError, ValueError):
    """A packed word contains the unused (1, 1) slot pattern."""


class DimensionError(TernaryError, ValueError):
    """A dimension violates a structural requirement (e.g. 16 must divide m)."""


class DimensionMismatch(DimensionError):
    """Operand shapes do not agree."""


class LayerFormatError(TernaryError, ValueError):
    """A layer file does not follow the on-disk layout."""


class TruncatedFile(LayerFormatError):
    """The byte source is shorter than its header promises."""


class MalformedHeader(LayerFormatError):
    """Zero dimensions or non-finite scales in a layer header."""


class SinkFailure(TernaryError, OSError):
    """Writing a layer to its destination failed."""


class EmptySamples(TernaryError, ValueError):
    """Statistics were requested over zero samples."""


class ClockUnavailable(TernaryError, RuntimeError):
    """No monotonic high-resolution clock is available."""


class AllocationFailure(TernaryError, MemoryError):
    """The cache-flush scratch buffer could not be allocated."""


class ScaleLossWarning(UserWarning):
    """Four distinct scales were squeezed into the two-scale file header."""
