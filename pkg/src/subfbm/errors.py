"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Model or call parameters violate a validity constraint."""


class DomainError(ValueError):
    """A kernel or path was evaluated outside its domain."""


class SingularityError(ValueError):
    """A requested integral crosses a non-integrable singularity."""


class VerificationError(AssertionError):
    """A deterministic verification suite reported violations."""
