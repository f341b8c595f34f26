"""Exception hierarchy shared across the package.

Plain ``ValueError`` is used for ordinary argument validation (bad shapes,
out-of-range probabilities, odd sample sizes). The classes below mark
conditions that callers are expected to branch on: the CLI maps them to
distinct exit codes (data errors vs. numerical failures).
"""


class TargetBalanceError(Exception):
    """Base class for package-specific failures."""


class DataFormatError(TargetBalanceError):
    """A CSV or scenario file could not be parsed."""


class ScenarioError(TargetBalanceError):
    """A scenario configuration is structurally invalid."""


class SingularCovarianceError(TargetBalanceError):
    """The balance covariance is too ill-conditioned to invert.

    Carries the offending condition number so diagnostics can report it.
    """

    def __init__(self, condition_number: float, detail: str = ""):
        self.condition_number = float(condition_number)
        msg = (
            "balance covariance is numerically singular "
            f"(condition number {self.condition_number:.6e} exceeds 1e12)"
        )
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class AcceptanceFailureError(TargetBalanceError):
    """Rejection sampling exhausted its draw budget without an acceptance."""

    def __init__(self, max_draws: int):
        self.max_draws = int(max_draws)
        super().__init__(
            f"no assignment accepted: empirical acceptance rate 0 over "
            f"{self.max_draws} draws"
        )


class DegenerateOutcomeError(TargetBalanceError):
    """The centered outcome vector is (numerically) zero, so R^2 is undefined."""


class InsufficientSamplesError(TargetBalanceError):
    """A Monte Carlo routine accepted too few samples to report a result."""
