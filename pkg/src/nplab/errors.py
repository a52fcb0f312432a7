"""Exception types shared across the lab."""


class InputError(ValueError):
    """Caller violated an operation's precondition."""


class NumericError(RuntimeError):
    """A numerical routine failed to meet its tolerance or budget.

    Carries optional diagnostic attributes (``residual``, ``lambda_min``,
    ``bracket``) so callers can report what went wrong.
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        for key, value in diagnostics.items():
            setattr(self, key, value)


class DegenerateConfigurationError(InputError):
    """Point configuration is degenerate (duplicated locations etc.)."""


class ContractError(RuntimeError):
    """An internal contract between modules was violated."""


class UsageError(ValueError):
    """Bad CLI or config usage (unknown experiment, bad parameter key)."""
