"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, flags, or input data. CLI exit code 2."""


class NumericalError(RuntimeError):
    """Optimization produced non-finite values. CLI exit code 3.

    When raised from the optimizer, ``iteration`` holds the failing step
    and ``last_state`` the most recent finite coordinates.
    """

    def __init__(self, message, iteration=None, last_state=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_state = last_state
