"""Exception types shared across the package."""


class NavContrastError(Exception):
    """Base class for package errors."""


class ConfigError(NavContrastError):
    """A configuration value is invalid or inconsistent."""


class PlacementError(NavContrastError):
    """Object or agent placement failed after the bounded retry budget."""


class OutOfBoundsError(NavContrastError):
    """A pose or query point lies outside the scene bounds."""


class DatasetError(NavContrastError):
    """A dataset artifact is missing or inconsistent with its scene."""


class NumericError(NavContrastError):
    """A non-finite value appeared during network evaluation or training."""


class DegenerateBatchError(NavContrastError):
    """A training query ended up with no usable negatives."""


class MissingClassError(NavContrastError):
    """A class required by the probe is absent from the training split."""
