"""Exception types shared across the package."""


class MppdeError(Exception):
    """Base class for all errors raised by this package."""


class GridTooSmall(MppdeError):
    """The grid has too few cells for the requested stencil or graph."""


class SolutionBlowup(MppdeError):
    """A solve or rollout produced non-finite values."""


class StepLimitExceeded(MppdeError):
    """The adaptive stepper hit its step budget before reaching t_end."""


class ShapeMismatch(MppdeError):
    """Tensor operands have incompatible shapes."""


class IndexOutOfBounds(MppdeError):
    """A gather/scatter index lies outside the target dimension."""


class NotScalar(MppdeError):
    """backward() was called on a non-scalar or untracked tensor."""


class InsufficientHorizon(MppdeError):
    """A trajectory is too short to cut the requested training windows."""


class MissingCheckpoint(MppdeError):
    """A neural solver was requested but no checkpoint was supplied."""


class FormatError(MppdeError):
    """A persisted artifact has the wrong version or structure."""
