"""
Exception hierarchy for the risk-sharing engine.

Every error carries the process exit code the command scripts return for it.
"""


class EngineError(Exception):
    """Base class for all engine failures"""
    exit_code = 3


class ConfigError(EngineError):
    """Scenario document failed validation; message names the field path"""
    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(EngineError):
    """Closed-form evaluated outside its domain (t > T, r <= 0, ...)"""


class SimulationError(EngineError):
    """Path batch produced NaN values"""


class IntegrabilityError(EngineError):
    """Too many paths needed exponent clamping to be trusted"""


class LogDomainError(EngineError):
    """Appendix collateral rule hit a non-positive logarithm argument"""

    def __init__(self, term: str, value: float):
        self.term = term
        self.value = value
        super().__init__(f"log argument '{term}' is not positive ({value!r})")


class NotBracketedError(EngineError):
    """Golden-section oracle could not bracket an interior optimum"""


class SolverError(EngineError):
    """Agreement-cost solver failed (no sign change, non-monotone residual, too many kink nodes)"""
