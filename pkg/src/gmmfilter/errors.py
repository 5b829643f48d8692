"""Exception types raised by the filtering pipeline."""


class GmmFilterError(Exception):
    """Base class for all errors raised by :mod:`gmmfilter`.

    ``step`` is filled in by the filter drivers when an error escapes a
    particular time step, so callers can report where a run broke down.
    """

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.message = message


class SingularFactorError(GmmFilterError, ValueError):
    """A triangular factor has a diagonal entry at or below the singularity floor."""


class SingularInnovationError(SingularFactorError):
    """The innovation covariance factor of a measurement update is singular."""


class DegenerateWeightsError(GmmFilterError, ValueError):
    """Mixture weights sum to zero (or are otherwise unusable)."""


class LinearizationError(GmmFilterError):
    """A supplied Jacobian or function value is not finite."""


class ModelMismatchError(GmmFilterError):
    """The measurement has zero density under every predicted component."""


class CovarianceBreakdownError(GmmFilterError):
    """A covariance-form update lost positive definiteness."""


class ParticleDegeneracyError(GmmFilterError):
    """All particle weights vanished at a step."""


def with_step(err, step):
    """Return a copy of ``err`` tagged with the time step it escaped from."""
    if getattr(err, "step", None) is not None:
        return err
    new = type(err)(str(err), step=step)
    new.__cause__ = err
    return new
