"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError -> 3. Anything else escaping is a bug.
"""


class SiamError(Exception):
    pass


class UsageError(SiamError):
    """Bad flags, unknown/missing config keys, invalid configuration."""


class DataError(SiamError):
    """Malformed files, shape mismatches at data boundaries."""


class NumericError(SiamError):
    """Non-finite values, failed numeric checks."""


class ShapeError(DataError):
    """Tensor operand extents do not line up; message names the axis."""


class DivisibilityError(ShapeError):
    """A grouping constraint (conv groups, norm groups, channel split) fails."""


class TapeError(SiamError):
    """Autodiff misuse: non-scalar loss, reusing a consumed tape."""
