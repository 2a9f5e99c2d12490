"""Exception types shared across the package."""


class TreemartError(Exception):
    """Base class for all package errors."""


class HorizonError(TreemartError, ValueError):
    """A query falls beyond the time up to which a path is realized."""


class ResourceError(TreemartError, RuntimeError):
    """A depth or node-count cap would be exceeded."""


class DomainError(TreemartError, ValueError):
    """A parameter lies outside the domain where an operation is defined."""


class ConvergenceError(TreemartError, RuntimeError):
    """An iterative solver did not reach its tolerance."""


class ExtrapolationError(TreemartError, ValueError):
    """A tabulated function was evaluated outside its grid."""


class TruncationError(TreemartError, ValueError):
    """A truncated series was evaluated where its error bound is too large."""
