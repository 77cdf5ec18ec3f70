"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError exits 2, any DataError
subclass exits 3, and anything unexpected exits 4.
"""


class GazeAlignError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GazeAlignError):
    """Invalid configuration or flag combination."""


class DataError(GazeAlignError):
    """Base class for problems with input data or data files."""


# model / dataset loading

class ParseError(DataError):
    """Malformed manifest, CSV row, or image file."""


class MissingFile(DataError):
    """A referenced path does not resolve to an existing file."""


class DuplicateKey(DataError):
    """Repeated subject x stimulus pair, or repeated stimulus id."""


class OrderError(DataError):
    """Fixation indices are not consecutive from 0."""


class EmptyScanpath(DataError):
    """A scanpath has no fixations where at least one is required."""


# patch extraction

class OutOfBounds(DataError):
    """Fixation coordinate lies outside the stimulus image."""


class BadPatchSize(DataError):
    """Patch dimensions unsupported by the descriptor or config."""


# embedding

class MissingEmbedding(DataError):
    """No embedding file found for a scanpath."""


class HeaderMismatch(DataError):
    """Embedding file row count does not match the fixation count."""


class CorruptFile(DataError):
    """Embedding file is truncated, has a bad header, or bad values."""


class MixedDim(DataError):
    """Embedded scanpaths in one dataset disagree on dimension."""


# alignment

class DimMismatch(DataError):
    """Feature vectors of unequal dimension were compared."""


class ZeroVector(DataError):
    """Cosine distance requested against an all-zero vector."""


class TooFewScanpaths(DataError):
    """Calibration needs at least two scanpaths on the stimulus."""


# pairwise / aggregation

class NoSharedStimuli(DataError):
    """Two subjects have no stimulus in common to average over."""


# analysis

class BadMatrix(DataError):
    """Distance matrix is asymmetric, has negative entries, or a nonzero diagonal."""


class DegenerateClustering(DataError):
    """A two-cluster expertise readout received an empty cluster."""


class DegenerateMarginals(DataError):
    """Cohen's kappa is undefined because expected agreement is 1."""


class TooFewCandidates(DataError):
    """Fewer leave-one-out candidates than requested neighbors."""
