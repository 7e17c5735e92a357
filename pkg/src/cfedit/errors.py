"""Exception types shared across the package."""


class CfeditError(Exception):
    """Base class for all package-specific errors."""


class FormatError(CfeditError, ValueError):
    """A tensor file, head file, manifest, or keypoint file is malformed."""


class DegenerateInputError(CfeditError, ValueError):
    """An input is all-zero where at least one non-zero entry is required."""


class DegenerateMaskError(CfeditError, ValueError):
    """A segmentation mask is empty after resizing and binarization.

    Carries the grid cell count so the caller can decide on a fallback.
    """

    def __init__(self, message: str, total_cells: int):
        super().__init__(message)
        self.total_cells = total_cells


class NoCandidatesError(CfeditError, ValueError):
    """The edit universe contains no candidate combinations."""


class UndefinedMetricError(CfeditError, ValueError):
    """A metric is requested on data for which it is not defined."""
