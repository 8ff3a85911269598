"""Exception types shared across the toolkit."""


class ArrayDiarError(Exception):
    """Base class for all toolkit errors."""


class DuplicateConstraintAngle(ArrayDiarError):
    """Two constraint angles coincide (within 1e-9 rad modulo 2*pi)."""


class DimensionMismatch(ArrayDiarError):
    """Array shapes disagree with the geometry or frequency grid."""


class DegenerateInput(ArrayDiarError):
    """Input carries no usable mass (e.g. an all-zero weight vector)."""


class NoSecondPeak(ArrayDiarError):
    """No secondary spectral peak clears the separation and level rules."""


class DegenerateTrainingSet(ArrayDiarError):
    """Training pairs contain only one class label."""


class UnknownSpeakerId(ArrayDiarError):
    """Decision references a speaker id absent from the state."""


class ScheduleOverlap(ArrayDiarError):
    """Scene schedule intervals overlap without the overlap flag."""


class EmptyReference(ArrayDiarError):
    """Reference annotation contains no speech."""
