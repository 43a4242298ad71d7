"""Exception hierarchy for mpg_lab."""


class MPGLabError(ValueError):
    """Base class for every error raised by this package."""


class GameSpecError(MPGLabError):
    """Malformed game tuple (shapes, discount, payoff finiteness, size cap)."""


class StochasticityError(GameSpecError):
    """A transition row is not a probability distribution."""


class SupportError(GameSpecError):
    """The initial distribution is not a full-support distribution."""


class IrreducibilityError(GameSpecError):
    """No joint action induces an irreducible aperiodic chain."""


class PolicyError(MPGLabError):
    """A policy profile has the wrong shape or a row off the simplex."""


class DeviatorMismatch(MPGLabError):
    pass


class PayoffMismatch(MPGLabError):
    pass


class EnumerationTooLarge(MPGLabError):
    pass


class ScheduleError(MPGLabError):
    """Step-size schedule violates the stochastic-approximation conditions."""


class TimescaleError(ScheduleError):
    pass


class DivergenceError(ScheduleError):
    pass


class SummabilityError(ScheduleError):
    pass


class HeterogeneityError(ScheduleError):
    pass


class ConfigError(MPGLabError):
    pass
