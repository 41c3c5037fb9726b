"""Exception types shared across the library."""


class NoclabError(Exception):
    pass


class SizeMismatch(NoclabError):
    """Operand shapes are incompatible for the requested operation."""


class InvalidValue(NoclabError):
    """A value violates an operation's precondition (range, finiteness, ...)."""


class NoTrace(NoclabError):
    """Backward was requested on a tensor that is not part of a graph."""


class ArchMismatch(NoclabError):
    """Two models do not share the same architecture/parameter structure."""


class InvalidPlan(NoclabError):
    """A partition plan is malformed (empty partition, uncovered samples)."""


class ConfigError(NoclabError):
    """An experiment config file or override is invalid."""
