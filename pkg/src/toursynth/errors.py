"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ValidationError -> 1, InputError -> 2,
BackendExhausted -> 3.
"""


class TourSynthError(Exception):
    """Base class for all package errors."""


class ValidationError(TourSynthError):
    """A value, distribution, or data structure violates its contract."""


class InputError(TourSynthError):
    """A required input file is missing, unreadable, or malformed."""


class BackendExhausted(TourSynthError):
    """The remote generation backend failed past its retry budget."""
