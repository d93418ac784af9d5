"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a requested configuration is inconsistent or unreachable."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite.

    Carries the iteration index and the sample ids of the offending batch so
    the failure can be reproduced.
    """

    def __init__(self, iteration: int, sample_ids):
        self.iteration = iteration
        self.sample_ids = list(sample_ids)
        super().__init__(
            f"non-finite loss at iteration {iteration} (batch sample ids: {self.sample_ids})"
        )
