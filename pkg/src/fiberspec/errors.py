"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """A query fell outside the interval on which a model is valid."""


class ModelError(ValueError):
    """A model or parameter set violates one of its invariants."""


class CalibrationError(ValueError):
    pass


class NonMonotonicCalibrationError(CalibrationError):
    pass


class SingularMappingError(ValueError):
    """The time-to-wavelength mapping has a vanishing derivative."""


class OffsetSearchError(RuntimeError):
    pass


class OffsetBoundaryError(OffsetSearchError):
    """The offset objective is minimal at an end of the search interval."""


class AliasingWarning(UserWarning):
    pass


class CalibrationWarning(UserWarning):
    pass
