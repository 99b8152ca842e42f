"""Shared exception types."""


class SphereMapError(Exception):
    """Base class for all library errors."""


class EmptyInput(SphereMapError):
    pass


class ShapeError(SphereMapError):
    pass


class RoiTooSmall(SphereMapError):
    pass


class DatasetTooSmall(SphereMapError):
    pass


class DivergedError(SphereMapError):
    pass


class MissingGradient(SphereMapError):
    pass


class ZeroGroundTruth(SphereMapError):
    pass


class PackingError(SphereMapError):
    pass


class ConfigError(SphereMapError):
    pass
