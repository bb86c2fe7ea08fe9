"""Exception hierarchy shared by the solver, the functionals and the CLI."""


class FuzzyLandauError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FuzzyLandauError, ValueError):
    """Input outside the mathematical domain of an operation (non-finite, out of range)."""


class ConfigError(FuzzyLandauError):
    """Invalid configuration key or value."""

    def __init__(self, message: str, key: str | None = None, accepted: list[str] | None = None):
        self.key = key
        self.accepted = accepted or []
        if key is not None:
            message = f"{key}: {message}"
        if self.accepted:
            message = f"{message} (accepted: {', '.join(self.accepted)})"
        super().__init__(message)


class NumericError(FuzzyLandauError):
    """A quadrature failed to converge or a density vanished."""


class ContractError(FuzzyLandauError):
    """An operation was called outside its precondition."""


class IntegrationBlowupError(FuzzyLandauError):
    """The particle state became non-finite during a step."""

    def __init__(self, message: str, dump: dict | None = None):
        self.dump = dump or {}
        super().__init__(message)


class BudgetViolationError(FuzzyLandauError, RuntimeError):
    """A conserved quantity drifted beyond its abort threshold."""

    def __init__(self, quantity: str, drift: float, limit: float, t: float):
        self.quantity = quantity
        self.drift = drift
        self.limit = limit
        self.t = t
        super().__init__(
            f"{quantity} drift {drift:.3e} exceeds abort limit {limit:.3e} at t={t:.6g}"
        )


class SnapshotError(FuzzyLandauError):
    """A trajectory directory is missing files or holds corrupt snapshots."""


class UsageError(FuzzyLandauError):
    """The command line asked for something that cannot be run (exit status 2)."""
