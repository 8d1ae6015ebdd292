"""Typed errors raised across the package.

Errors derived from :class:`ConfigError` are input problems (CLI exit code 2);
everything else derived from :class:`CycleDegError` is a computational
failure (exit code 1).
"""


class CycleDegError(Exception):
    """Base class for all package errors."""


class ConfigError(CycleDegError):
    """Malformed configuration or expression input."""


class ExprSyntaxError(ConfigError):
    def __init__(self, position, message):
        self.position = position
        self.message = message
        super().__init__(f"at position {position}: {message}")


class UnknownVariable(ConfigError):
    pass


class UnknownFunction(ConfigError):
    pass


class NonFiniteValue(CycleDegError):
    def __init__(self, subexpression, message="non-finite value"):
        self.subexpression = subexpression
        super().__init__(f"{message} in subexpression {subexpression}")


# odeflow
class StepSizeUnderflow(CycleDegError):
    pass


class NonFiniteState(CycleDegError):
    pass


class GrazingContact(CycleDegError):
    def __init__(self, time, message="tangential contact with boundary"):
        self.time = time
        super().__init__(f"{message} near t={time!r}")


# cyclefind / adjointcycle
class NoConvergence(CycleDegError):
    pass


class DegenerateCycle(CycleDegError):
    pass


class SectionMiss(CycleDegError):
    pass


# malkinfn
class SingularVariationalMatrix(CycleDegError):
    pass


class BoundaryZero(CycleDegError):
    pass


# degreecalc
class DegenerateEquilibrium(CycleDegError):
    pass


class BoundaryZeroOfPsi(CycleDegError):
    pass


class DimensionTooLarge(CycleDegError):
    pass


class UnderResolved(CycleDegError):
    pass


class ZeroOnBoundary(CycleDegError):
    pass


class HypothesisViolation(CycleDegError):
    def __init__(self, phase, endpoint, value):
        self.phase = phase
        self.endpoint = endpoint
        self.value = value
        super().__init__(
            f"bifurcation function vanishes at {endpoint} endpoint "
            f"for contact phase s={phase!r} (value {value!r})"
        )


# verifykit
class SingularJacobian(CycleDegError):
    pass


class PartialSweep(CycleDegError):
    def __init__(self, report, cause):
        self.report = report
        self.cause = cause
        super().__init__(
            f"sweep stopped after {len(report.eps)} values: "
            f"{type(cause).__name__}: {cause}"
        )
