"""Exception types raised by rsskit."""


class RSSError(Exception):
    """Base class for all rsskit errors."""


class InfeasibleDesignError(RSSError, ValueError):
    """The design cannot be executed on a population of the given size."""


class DegenerateStandardizationError(RSSError, ValueError):
    """The study variable has zero spread, so it cannot be standardized."""


class EnumerationBudgetError(RSSError):
    """An exact computation would exceed its configured state budget."""


class MissingInclusionError(RSSError, ValueError):
    """A sampled unit (or pair) has no positive inclusion probability."""


class MissingAuxiliaryError(RSSError, ValueError):
    """Judgment ranking was requested but the population has no auxiliary values."""
