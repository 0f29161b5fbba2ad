"""Exception hierarchy shared by the library and mapped to CLI exit codes."""


class GyoloError(Exception):
    """Base class for all domain errors (CLI exit code 1)."""


class ShapeError(GyoloError):
    """Tensor or parameter shape inconsistent with the operation contract."""


class FormatError(GyoloError):
    """Malformed file content (weights, labels, images, manifests)."""
