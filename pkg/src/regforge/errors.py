"""Exception types raised by regforge.

Every error derives from :class:`RegforgeError`. Errors that reflect an
infeasible design problem (as opposed to malformed input) also derive from
:class:`DesignError` so callers can map them to a domain-failure status.
"""


class RegforgeError(Exception):
    """Base class for all regforge errors."""


class DesignError(RegforgeError):
    """A well-formed problem that has no acceptable solution."""


# numerics
class NotHurwitz(DesignError):
    pass


class IllConditioned(DesignError):
    pass


class SpectrumOverlap(DesignError):
    pass


class NotStabilizable(DesignError):
    pass


class NotDetectable(DesignError):
    pass


class NoStabilizingSolution(DesignError):
    pass


# model / problem files
class ParseError(RegforgeError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DimensionMismatch(ParseError):
    pass


class InvariantViolation(ParseError):
    pass


# regulation
class Unsolvable(DesignError):
    pass


class ModeRequirementMissing(DesignError):
    pass


class SingularNoise(DesignError):
    pass


# hinf
class RankDeficient(DesignError):
    pass


class GammaTooSmall(DesignError):
    pass


class SingularScaling(DesignError):
    pass


class HiInfeasible(DesignError):
    pass


class XiUnstable(DesignError):
    pass


class XiNormTooLarge(DesignError):
    pass


# sim
class WiringError(RegforgeError):
    pass


class Diverged(DesignError):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


class EmptyWindow(RegforgeError):
    pass


class SynthesisFailed(DesignError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"synthesis failed at {stage}: {cause}")
