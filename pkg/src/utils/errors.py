from typing import Optional, Union
from pathlib import Path


class M3RError(Exception):
    """Base class for every pipeline error surfaced by the CLI.

    `exit_code` is the process exit status for the error's category; `path`
    and `line` are optional file context attached on the way up.
    """

    exit_code = 1

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None, line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = str(path) if path is not None else None
        self.line = line

    def with_context(self, path: Union[str, Path], line: Optional[int] = None) -> "M3RError":
        if self.path is None:
            self.path = str(path)
        if self.line is None and line is not None:
            self.line = line
        return self

    def __str__(self) -> str:
        if self.path is None:
            return self.message
        if self.line is None:
            return f"{self.message} [{self.path}]"
        return f"{self.message} [{self.path}:{self.line}]"


class InputError(M3RError, ValueError):
    exit_code = 2


class DataError(M3RError):
    exit_code = 3


class ModelError(M3RError):
    exit_code = 4


class ConfigError(M3RError, ValueError):
    exit_code = 5


# gridproc
class TargetOutsideGrid(InputError):
    pass


class RoiOutOfBounds(InputError):
    pass


class FormatError(InputError):
    pass


class InsufficientFrames(DataError):
    pass


# stationproc
class TooFewKnots(DataError):
    pass


class NegativeSpeed(InputError):
    pass


# aligner
class InvalidCode(InputError):
    pass


class SeriesTooShort(DataError):
    pass


class NoMatchWithinWindow(DataError):
    pass


class EmptyDataset(DataError):
    pass


# m3rnet
class ShapeMismatch(ModelError, ValueError):
    pass


class NoCache(ModelError):
    pass


# evalkit
class LengthMismatch(InputError):
    pass


class EmptyInput(InputError):
    pass


# synth
class CellOutOfBounds(InputError):
    pass
