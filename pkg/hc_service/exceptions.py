"""Define service errors raised by the Heat Conduction experiment service."""

from hc_influence.exceptions import (
    CAPACITY_ERROR,
    CONFIG_ERROR,
    DATA_ERROR,
    HeatConductionError,
)

SERVICE_NAME = 'hc-influence'

EXIT_SUCCESS = 0
EXIT_CODES = {CONFIG_ERROR: 2, DATA_ERROR: 3, CAPACITY_ERROR: 4}


class ExperimentServiceError(Exception):
    """Base service exception.

    `category` selects the process exit code and `stage` names the part of
    the run that failed, for example "load network" or "maximize".

    """

    def __init__(
        self, message: str, category: str = DATA_ERROR, stage: str | None = None
    ):
        """All service errors carry a category and an optional stage."""
        super().__init__(message)
        self.message = message
        self.category = category
        self.stage = stage

    @property
    def exit_code(self) -> int:
        """Process exit code for this error."""
        return EXIT_CODES.get(self.category, EXIT_CODES[DATA_ERROR])

    @classmethod
    def from_library_error(
        cls, error: HeatConductionError, stage: str
    ) -> 'ExperimentServiceError':
        """Wrap a library error raised while running `stage`."""
        return cls(f'{stage} failed: {error.message}', error.category, stage)


class InvalidConfiguration(ExperimentServiceError):
    """Raised when the experiment configuration document is invalid."""

    def __init__(self, reason: str):
        """Initialize the exception with what is wrong with the configuration."""
        super().__init__(
            f'Invalid configuration: {reason}', CONFIG_ERROR, 'configuration'
        )
