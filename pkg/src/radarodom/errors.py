"""Exception types shared across the package."""


class MissingDataError(ValueError):
    """A sensor stream does not cover a requested time interval."""


class DegenerateScanError(ValueError):
    """A scan has too few usable returns to be registered."""


class CalibrationError(ValueError):
    """A calibration could not be computed from the provided samples."""


class DatasetFormatError(ValueError):
    """An on-disk dataset file is malformed."""
