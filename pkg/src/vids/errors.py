"""Exception types shared across the package."""


class VidsError(Exception):
    """Base class for package errors."""


class GraphError(VidsError):
    """A layer stack is inconsistent or an input does not fit it."""


class TrainingDiverged(VidsError):
    """A loss became NaN/inf during training."""


class ContainerError(VidsError):
    """A weight container file is malformed, truncated, or corrupt."""
