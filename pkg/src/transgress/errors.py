"""Exception hierarchy shared by all transgress modules."""


class TransgressError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(TransgressError):
    pass


class PointOutsideChart(GeometryError):
    pass


class MetricNotPositiveDefinite(GeometryError):
    pass


class StepTooLargeNearChartEdge(GeometryError):
    pass


class NoBoundaryChart(GeometryError):
    pass


class FormError(TransgressError):
    pass


class DimensionMismatch(FormError):
    pass


class ArityMismatch(FormError):
    pass


class DegreeMismatch(FormError):
    pass


class StencilOutsideDomain(FormError):
    pass


class BundleError(TransgressError):
    pass


class ZeroVector(BundleError):
    pass


class AtPole(BundleError):
    """Point is inside the excluded band around the outward/inward normals."""


class KOutOfRange(BundleError):
    pass


class PhiOutOfRange(BundleError):
    pass


class FieldError(TransgressError):
    pass


class NonGenericField(FieldError):
    pass


class DegenerateZero(FieldError):
    pass


class SamplingTooCoarse(FieldError):
    pass


class ZeroOnSphere(FieldError):
    pass


class ConfigError(TransgressError):
    """Bad run configuration; message carries the offending line/field."""
