"""Exception types raised across the package."""

from __future__ import annotations


class IconLayersError(Exception):
    """Base class for every error raised by this package."""


class MalformedXml(IconLayersError):
    pass


class UnsupportedFeature(IconLayersError):
    def __init__(self, feature: str, detail: str = "") -> None:
        self.feature = feature
        msg = f"unsupported SVG feature: {feature}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class OpenSubpathInFlattenedInput(IconLayersError):
    pass


class PathSyntaxError(IconLayersError):
    pass


class ParameterOutOfRange(IconLayersError, ValueError):
    pass


class DimensionMismatch(IconLayersError, ValueError):
    pass


class NoLabeledPixels(IconLayersError):
    pass


class EmptyVisibleMask(IconLayersError):
    pass


class EmptyMask(IconLayersError):
    pass


class EmptyPartSet(IconLayersError):
    pass


class InvalidRelation(IconLayersError):
    pass


class NotAPermutation(IconLayersError, ValueError):
    pass


class DegenerateBridge(IconLayersError):
    pass


class AmbiguousTopology(IconLayersError):
    pass


class DegeneratePlacement(IconLayersError):
    pass


class ExhaustedSampling(IconLayersError):
    pass


class TooManyColors(IconLayersError):
    pass


class PartCountMismatch(IconLayersError):
    pass


class ManifestError(IconLayersError):
    pass


class StageError(IconLayersError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
