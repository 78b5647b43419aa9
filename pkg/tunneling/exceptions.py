class SimulationError(Exception):
    """Base class for every failure the simulator reports."""


class ConfigError(SimulationError):
    """
    Invalid run configuration.
    `messages` holds one human-readable, line-numbered entry per problem.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


class ConvergenceError(SimulationError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (achieved residual {residual:.3e})")


class QuadratureError(SimulationError):
    def __init__(self, message, error_estimate):
        self.error_estimate = error_estimate
        super().__init__(f"{message} (error estimate {error_estimate:.3e})")


class PropagationError(SimulationError):
    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic or {}
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostic.items())
        super().__init__(f"{message} [{details}]" if details else message)


class RateError(SimulationError):
    pass
