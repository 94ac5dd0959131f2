"""Exception hierarchy shared by every stage.

The CLI maps ``ValidationError`` to exit code 2 and ``EstimationError`` to
exit code 3.
"""


class EpiflowError(Exception):
    """Base class for all package errors."""


class ValidationError(EpiflowError, ValueError):
    """Malformed input: bad schema, missing values, inconsistent windows."""


class EstimationError(EpiflowError, ArithmeticError):
    """A model could not be estimated (rank deficiency, no variation, ...)."""


class StageError(EpiflowError):
    """Wraps an error raised inside a pipeline stage with its provenance."""

    def __init__(self, stage, cause, city=None, row=None):
        self.stage = stage
        self.cause = cause
        self.city = city
        self.row = row
        where = f"stage={stage}"
        if city is not None:
            where += f" city={city}"
        if row is not None:
            where += f" row={row}"
        super().__init__(f"[{where}] {cause}")
