"""Exception types shared across the package."""


class KineticHarrisError(Exception):
    """Base class for all package errors."""


class NonConvergedQuadrature(KineticHarrisError):
    """An adaptive quadrature failed to reach the requested tolerance."""


class EnvelopeRejected(KineticHarrisError):
    """A rejection sampler fell below its configured acceptance floor."""


class ThinningBoundViolated(KineticHarrisError):
    """The state-dependent jump rate exceeded its certified dominating bound.

    This signals a bug in the bound computation (or integrator energy drift
    beyond the configured padding), never a recoverable condition.
    """


class StepUnderflow(KineticHarrisError):
    """The flow integrator was asked for a step below resolution."""


class NoContraction(KineticHarrisError):
    """The shooting fixed-point iteration stopped contracting.

    Raised when successive-iterate ratios exceed 0.5, which indicates the
    requested flight time is beyond the validity bound of the solver.
    """


class MaxIterations(KineticHarrisError):
    """An iterative solver hit its iteration cap before converging."""


class DriftParamsMissing(KineticHarrisError):
    """The potential does not declare drift parameters for the needed growth."""


class ConstraintViolated(KineticHarrisError):
    """An explicit certificate constraint is violated by the given inputs."""


class PreconditionViolated(KineticHarrisError):
    """A certificate precondition fails; the message names the inequality."""


class ShootingHorizonExceeded(KineticHarrisError):
    """No feasible flight window fits inside the requested minorisation time."""


class BoxCoverageInsufficient(KineticHarrisError):
    """The binning box misses too much equilibrium mass for a TV estimate."""


class InsufficientSignal(KineticHarrisError):
    """Too few data points above the noise floor to fit a decay model."""


class ConfigError(KineticHarrisError):
    """An experiment configuration failed validation."""
