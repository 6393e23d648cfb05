"""Exception hierarchy shared by every wallprobe module.

Each class maps onto one CLI exit code (see :mod:`wallprobe.cli`).
"""


class WallprobeError(Exception):
    exit_code = 1


class InvalidArgument(WallprobeError, ValueError):
    exit_code = 2


class ConfigError(WallprobeError, ValueError):
    exit_code = 2


class GeometryError(InvalidArgument):
    pass


class ShapeError(InvalidArgument):
    pass


class StateError(WallprobeError, RuntimeError):
    exit_code = 2


class StabilityError(WallprobeError, ArithmeticError):
    exit_code = 3


class DivergenceError(WallprobeError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SolverError(WallprobeError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ParseError(WallprobeError, ValueError):
    """Malformed input file; ``line``/``offset`` locate the problem when known."""

    exit_code = 4

    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset


class UnsupportedVersion(ParseError):
    pass
