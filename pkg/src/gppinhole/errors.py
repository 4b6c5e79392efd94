"""Exception types raised across the package."""


class PinholeError(Exception):
    """Base class for all errors raised by gppinhole."""


class FactorizationFailure(PinholeError):
    pass


class OptimizationDiverged(PinholeError):
    pass


class InsufficientCorners(PinholeError, ValueError):
    pass


class DegenerateGrid(PinholeError, ValueError):
    pass


class DegenerateConfiguration(PinholeError):
    pass


class PointAtInfinity(PinholeError):
    pass


class DegeneratePoints(PinholeError, ValueError):
    pass


class NoConsensus(PinholeError):
    pass


class InsufficientBoards(PinholeError, ValueError):
    pass


class NotPositiveDefinite(PinholeError):
    pass


class NonPhysicalSolution(PinholeError):
    pass


class BehindCamera(PinholeError):
    pass


class EmptyOutput(PinholeError):
    pass


class NonInjectiveWarp(PinholeError, ValueError):
    pass


class DatasetError(PinholeError, ValueError):
    """A dataset or result file is malformed or inconsistent."""
