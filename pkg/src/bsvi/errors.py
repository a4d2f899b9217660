"""Exception hierarchy shared by every module of the package."""


class BSVIError(Exception):
    """Base class for all errors raised by :mod:`bsvi`."""


class InvalidSpec(BSVIError, ValueError):
    """A grid, clock, convex function or solver option is malformed."""


class IndexOutOfRange(BSVIError, IndexError):
    pass


class NonConvergence(BSVIError):
    """An iterative scalar routine failed to bracket or converge."""


class InnerNonConvergence(NonConvergence):
    def __init__(self, step, message="implicit step did not converge"):
        self.step = step
        super().__init__(f"{message} (step {step})")


class StepTooLarge(BSVIError):
    """The monotonicity guard mu^+ * dQ < 1 of the implicit scheme fails."""


class NonFinite(BSVIError, FloatingPointError):
    pass


class IllConditioned(BSVIError):
    """Regression design matrix is rank deficient beyond the ridge guard."""


class InvalidTestFunction(BSVIError, ValueError):
    pass


class ValidationFailure(BSVIError):
    """One or more standing assumptions fail on a problem instance."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class ConfigError(BSVIError):
    pass
