"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateSourceError(ValueError):
    """The data carry no information to model (e.g. every sample is zero)."""


class RangeError(ValueError):
    """A requested rate or distortion lies outside a curve's computed range."""


class ParseError(ValueError):
    """A serialized side-info record or container could not be decoded."""


class NonConvergenceError(RuntimeError):
    """An iterative computation stopped before meeting its tolerance."""
