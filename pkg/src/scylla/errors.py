from __future__ import annotations


class ScyllaError(Exception):
    pass


class InstanceError(ScyllaError):
    """The instance breaks a structural invariant."""


class InfeasibleInstanceError(InstanceError):
    """Infeasibility detected before the heuristic starts (e.g. lower > upper)."""


class MpsError(ScyllaError, ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnsupportedFeatureError(MpsError):
    pass


class NumericalError(ScyllaError, ArithmeticError):
    """Non-finite values appeared in a first-order iterate."""
