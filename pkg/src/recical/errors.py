"""Exception types shared across the package."""


class IdentifiabilityError(ValueError):
    """The measurement set cannot pin down the requested parameters."""


class DegeneracyError(RuntimeError):
    """An estimator collapsed onto a degenerate solution (e.g. all-zero)."""


class SingularSystemError(RuntimeError):
    """A linear system that should be well conditioned turned out singular."""


class AliasingError(ValueError):
    """A phase slope too steep to unwrap at the given sampling of the axis."""
