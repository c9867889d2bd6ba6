"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes or channel counts do not match an operation's contract."""


class ContractError(RuntimeError):
    """A precondition or usage rule was violated (stale tape, bad position, ...)."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
