"""Exception hierarchy shared by all epivisit modules."""

from __future__ import annotations


class EpivisitError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EpivisitError):
    pass


class ParseError(ConfigError):
    def __init__(self, path, line: int, column: int, msg: str):
        self.path = path
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}:{column}: {msg}")


class ValidationError(ConfigError):
    """A configuration value is missing or out of range.

    ``key`` is the dotted path of the offending entry (e.g. ``disease.progressions[1].probability``).
    """

    def __init__(self, key: str, msg: str):
        self.key = key
        super().__init__(f"{key}: {msg}")


class SchemaParseError(ConfigError):
    pass


class PopulationError(EpivisitError):
    def __init__(self, msg: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + msg)


class HeaderMismatch(PopulationError):
    pass


class RowParseError(PopulationError):
    pass


class DuplicatePid(PopulationError):
    pass


class UnknownPid(PopulationError):
    pass


class NegativeDuration(PopulationError):
    pass


class DurationMismatch(PopulationError):
    pass


class UnknownModel(EpivisitError):
    pass


class BadParameter(EpivisitError):
    pass


class TooManyExposed(EpivisitError):
    pass


class SimulationError(EpivisitError):
    """Wraps a failure inside the step loop with the step and phase it occurred in."""

    def __init__(self, step: int, phase: str, cause: BaseException):
        self.step = step
        self.phase = phase
        super().__init__(f"step {step}, phase {phase!r}: {cause}")
        self.__cause__ = cause


class OutputError(EpivisitError):
    def __init__(self, path, cause: BaseException):
        self.path = path
        super().__init__(f"cannot write {path}: {cause}")
        self.__cause__ = cause
