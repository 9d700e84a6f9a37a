"""Exception types raised across the package."""


class SubspaceAmgError(Exception):
    """Base class for all package errors."""


class DimensionError(SubspaceAmgError, ValueError):
    pass


class RankDeficientError(SubspaceAmgError, ValueError):
    pass


class NotSPDError(SubspaceAmgError, ValueError):
    pass


class NotOrthonormalError(SubspaceAmgError, ValueError):
    pass


class ConvergenceError(SubspaceAmgError, RuntimeError):
    """An iteration exhausted its budget. ``info`` carries diagnostics."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class MeshError(SubspaceAmgError, RuntimeError):
    pass


class ConfigError(SubspaceAmgError, ValueError):
    pass


class DivergenceError(SubspaceAmgError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
