"""Exception hierarchy shared by every pipeline stage."""


class RutfinderError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised, when known."""

    stage: str | None = None


class DisparityIOError(RutfinderError, OSError):
    """Unreadable, malformed or unwritable disparity/mask file."""


class AllInvalidError(RutfinderError, ValueError):
    """A disparity map without a single valid pixel."""


class DegenerateInputError(RutfinderError, ValueError):
    """Input geometry or statistics too degenerate for a stage to proceed."""


class DegenerateGeometryError(DegenerateInputError):
    """Rank-deficient least-squares system (too few distinct coordinates)."""


class NegativeTransformError(DegenerateInputError):
    """Transformed disparities below zero; retry with a larger offset."""

    def __init__(self, count: int, minimum: float):
        super().__init__(
            f"{count} transformed disparities are negative (min {minimum:.4f}); "
            "increase delta"
        )
        self.count = count
        self.minimum = minimum


class NoThresholdError(DegenerateInputError):
    """Otsu segmentation of a constant map."""


class DegenerateFieldError(DegenerateInputError):
    """Normal field whose resultant vanishes or whose optimum is ambiguous."""
