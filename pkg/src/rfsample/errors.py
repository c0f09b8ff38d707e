"""Exception hierarchy.

Usage problems (bad shapes, bad configuration) derive from ``ValueError``;
numerical failures derive from :class:`NumericalError` so the CLI can map
them to their own exit code.
"""


class InvalidDimensionError(ValueError):
    """Dimension is zero or does not match between arguments."""


class EmptyInputError(ValueError):
    pass


class DegenerateWeightsError(ValueError):
    pass


class SizeCapError(ValueError):
    pass


class PhaseRangeError(ValueError):
    pass


class GridDimensionError(ValueError):
    """A grid was requested over more than two omega coordinates."""


class ConfigError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class FeatureOverflowError(NumericalError):
    def __init__(self, message, norm_ratio=None, index=None):
        super().__init__(message)
        self.norm_ratio = norm_ratio
        self.index = index


class DegenerateQError(NumericalError):
    """Every evaluated q-hat value was zero, so the optimal proposal is undefined."""


class EnvelopeError(NumericalError):
    """Rejection sampling exceeded the consecutive-rejection budget."""


class OutsideSupportError(NumericalError):
    pass
