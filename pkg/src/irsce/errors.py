"""Exception types shared across the package.

All inherit from ValueError so generic callers can catch bad inputs with a
single except clause while tests can distinguish the failure modes.
"""


class DegenerateChannelError(ValueError):
    """A reference (typical antenna / typical user) coefficient is zero, so a
    scaling ratio is undefined for this realization."""


class InsufficientDurationError(ValueError):
    """A training phase (or total pilot budget) is shorter than the minimum
    required for the requested construction."""


class WrongRegimeError(ValueError):
    """A schedule constructor was called outside its antenna/element regime."""


class RankDeficientError(ValueError):
    """A linear operator that must have full column rank does not."""


class IdentifiabilityError(ValueError):
    """The stacked training system does not determine the unknowns uniquely
    (rank below the number of unknowns)."""
