"""Exception hierarchy shared across the package.

Everything raised on bad input derives from ``LidarBGError`` so the CLI can map
it to the data-error exit code in one place.
"""


class LidarBGError(Exception):
    pass


class ConfigError(LidarBGError):
    pass


class IoError(LidarBGError, OSError):
    pass


class FormatError(LidarBGError):
    def __init__(self, row, reason):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class NonMonotonicFrameId(LidarBGError):
    pass


class DomainError(LidarBGError, ValueError):
    pass


class OriginPoint(DomainError):
    pass


class BeamOutOfRange(LidarBGError, IndexError):
    pass


class EmptyInput(LidarBGError, ValueError):
    pass


class InvalidSamplingRate(LidarBGError, ValueError):
    pass


class NonFiniteObservation(LidarBGError, ValueError):
    pass


class EmptyModel(LidarBGError):
    pass


class NoHistory(LidarBGError):
    pass


class InvalidPolygon(LidarBGError, ValueError):
    pass


class DegenerateCluster(LidarBGError, ValueError):
    pass


class LengthMismatch(LidarBGError, ValueError):
    pass


class ZeroReference(LidarBGError, ValueError):
    pass


class ModelFileError(LidarBGError):
    pass
