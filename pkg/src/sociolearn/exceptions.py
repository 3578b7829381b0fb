"""Exception hierarchy shared by the numerical modules and the CLI."""


class SocialLearningError(Exception):
    """Base class for all errors raised by the package."""


class NetworkError(SocialLearningError, ValueError):
    """Invalid network construction or malformed network file."""


class ConfigError(SocialLearningError, ValueError):
    """Invalid experiment configuration."""


class NumericalError(SocialLearningError, ArithmeticError):
    """Base class for failures of the numerical routines."""


class IllConditionedNeighborhood(NumericalError):
    def __init__(self, agent: int, condition: float):
        self.agent = agent
        self.condition = condition
        super().__init__(
            f"ill-conditioned neighborhood: agent {agent} "
            f"(condition estimate {condition:.3e})"
        )


class DivergenceError(NumericalError):
    """Non-finite covariance entries appeared during iteration."""


class NonContractiveWeights(NumericalError):
    """Fixed-weight iteration failed to contract."""


class IdentificationError(NumericalError):
    """Regression or structural inversion failed."""
