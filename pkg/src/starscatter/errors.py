"""Exception hierarchy shared by all starscatter modules."""

from __future__ import annotations


class StarScatterError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(StarScatterError):
    """Invalid user-supplied configuration (bad family, tolerance, grid...)."""


class HypothesisViolation(StarScatterError):
    """A potential fails an integrability or decay requirement."""


class UnsupportedOrderError(StarScatterError):
    """A derivative or expansion order beyond the supported range was requested."""


class EvaluationDomainError(StarScatterError):
    """Evaluation requested outside the admissible region (e.g. Im zeta < 0)."""


class NumericFailure(StarScatterError):
    """An underlying numeric routine failed to converge or returned junk."""


class PoleInFactorError(StarScatterError):
    """A single edge factor vanished within tolerance; the caller should
    perturb the evaluation point instead of dividing through the pole."""


class GridTooCoarseError(StarScatterError):
    """The sampling grid cannot resolve the phase or the spectrum reliably."""


class IncompleteSpectrumError(StarScatterError):
    """Located zeros do not account for the winding of the determinant."""


class AmbiguousResonanceError(StarScatterError):
    """Singular values straddle the rank threshold; multiplicity undecidable.

    Carries both candidate multiplicities so the caller can retry with a
    tighter integration tolerance or report the ambiguity.
    """

    def __init__(self, message: str, candidates: tuple[int, int]):
        super().__init__(message)
        self.candidates = candidates


class ContourThroughZeroError(StarScatterError):
    """A winding contour passes through (or too close to) a zero."""


class TruncationError(StarScatterError):
    """Domain truncation cannot meet the requested tail accuracy."""
