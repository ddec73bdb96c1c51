"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending dotted path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class CostDomainError(ValueError):
    """A cost was evaluated outside its domain (e.g. nonpositive Poisson counts)."""


class DivergenceError(FloatingPointError):
    """A conjugate argument or loss left the numerically safe range."""


class TrainingDiverged(RuntimeError):
    """Training aborted. ``state`` holds the last good snapshot."""

    def __init__(self, step, reason, state=None):
        self.step = step
        self.reason = reason
        self.state = state
        super().__init__(f"training diverged at step {step}: {reason}")
