"""Exception types raised across the toolkit.

Everything derives from MinderError so callers can catch the whole family;
file-not-found conditions use the builtin FileNotFoundError.
"""


class MinderError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MinderError):
    """Run configuration is malformed or inconsistent."""


# --- image ingestion ---

class DecodeError(MinderError):
    """File exists but is not a decodable raster image."""


class DegenerateImage(MinderError):
    """Source image smaller than the 3x3 minimum."""


class EncodeError(MinderError):
    """JPEG re-encoding failed."""


class EmptyCorpus(MinderError):
    """A labeled corpus split contains zero usable images."""


# --- perturbations ---

class InvalidSigma(MinderError):
    """Perturbation strength must be a positive finite real."""


# --- encoder backends ---

class ModelLoadError(MinderError):
    """Model graph file missing, corrupt, or unloadable."""


class ShapeMismatch(MinderError):
    """Image or tensor shape does not match what the consumer expects."""


class BackendError(MinderError):
    """Inference backend failed at run time."""


# --- scoring ---

class ZeroVector(MinderError):
    """Cosine distance is undefined for an all-zero embedding."""


class DimensionMismatch(MinderError):
    """Embeddings of different dimension cannot be compared."""


class MissingChannel(MinderError):
    """Combiner references a channel absent from the score record."""


class RankDeficient(MinderError):
    """Regression design matrix does not have full column rank."""


# --- calibration / evaluation ---

class TooFewSamples(MinderError):
    """Calibration requires at least 20 scores."""


class EmptySplit(MinderError):
    """AUROC needs at least one score on each side."""


class SizeMismatch(MinderError):
    """Images in a spectrum stream must share one size."""


class MissingThreshold(MinderError):
    """Decision requested but no calibrated threshold is available."""
