"""Exception types raised across the package."""


class HosynthError(Exception):
    pass


class InvalidArgument(HosynthError, ValueError):
    pass


class MeshError(HosynthError):
    pass


class RegionError(HosynthError):
    """No object vertex is reachable from a wrist site."""


class PairingError(HosynthError):
    pass


class GenerationError(HosynthError):
    def __init__(self, message, rejections=None):
        super().__init__(message)
        self.rejections = dict(rejections or {})


class AlignmentError(HosynthError):
    pass


class SynthError(HosynthError):
    pass


class ConfigError(HosynthError):
    pass


class FormatError(HosynthError):
    """A persisted file failed validation on load."""
