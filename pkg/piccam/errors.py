"""
Exception hierarchy. Each family carries the CLI exit code it maps to:
2=IO, 3=format, 4=digest, 5=config.
"""


class PiccamError(Exception):
    exit_code = 1


###############
## IO family ##
###############
class PiccamIOError(PiccamError):
    exit_code = 2


class MissingPath(PiccamIOError):
    pass


class BinaryNotFound(PiccamIOError):
    pass


class NonZeroExit(PiccamIOError):
    def __init__(self, command: str, returncode: int, stderr: str):
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(
            f"Command '{command}' exited with status {returncode}: {stderr.strip()}"
        )


class TimedOut(PiccamIOError):
    pass


###################
## Format family ##
###################
class FormatError(PiccamError, ValueError):
    exit_code = 3


class MalformedHeader(FormatError):
    pass


class UnsupportedChroma(FormatError):
    pass


class TruncatedFrame(FormatError):
    pass


class EmptyClip(FormatError):
    pass


class ClipTooShort(FormatError):
    pass


class OddGeometry(FormatError):
    pass


class OutOfBounds(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class GeometryMismatch(FormatError):
    pass


class ZeroDenominator(FormatError):
    pass


class BadRDPoint(FormatError):
    pass


class InfinitePsnrPoint(BadRDPoint):
    pass


class TooFewPoints(FormatError):
    pass


class NonMonotoneCurve(FormatError):
    pass


class CurveNotMonotone(NonMonotoneCurve):
    """
    Raised when measured points cannot form an RD curve; the raw points are kept
    on the exception for inspection.
    """

    def __init__(self, message: str, points):
        self.points = points
        super().__init__(message)


class NoOverlap(FormatError):
    pass


class OutOfRange(FormatError):
    pass


class SymbolOutOfAlphabet(FormatError):
    pass


class BadParameter(FormatError):
    pass


class TruncatedStream(FormatError):
    pass


class CorruptStream(FormatError):
    pass


class TruncatedPayload(TruncatedStream):
    pass


class BadBitstream(FormatError):
    pass


class EmptyWarmup(FormatError):
    pass


class EmptyDataset(FormatError):
    pass


###################
## Digest family ##
###################
class DigestError(PiccamError, ValueError):
    exit_code = 4


class DigestMismatch(DigestError):
    pass


###################
## Config family ##
###################
class ConfigError(PiccamError, ValueError):
    exit_code = 5


class QpOutOfRange(ConfigError):
    pass


class UnknownConfigKey(ConfigError):
    pass


class BadConfigValue(ConfigError):
    pass


class TemplateError(ConfigError):
    pass


class EmptyInput(ConfigError):
    pass
