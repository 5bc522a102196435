"""Exception hierarchy.

Every error carries a CLI exit code:

* 2 -- configuration / usage errors (bad config file, unresolvable names,
  invalid arguments, insufficient inputs),
* 3 -- assumption violations (jump-count arithmetic sits on an integer
  boundary, so rate constants are ill-defined),
* 4 -- numerical failures (non-finite states, singular systems, unstable
  truncation, all-censored studies, degenerate landscapes).
"""


class MlabError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(MlabError):
    """Malformed or unresolvable experiment configuration."""

    exit_code = 2


class UnsupportedKind(ConfigError):
    """Operation undefined for this noise kind (e.g. tail of a Gaussian)."""


class InsufficientSamples(ConfigError):
    """Not enough (or degenerate) samples for an estimator."""


class InsufficientPoints(ConfigError):
    """Too few data points for a fit."""


class BatchTooLarge(ConfigError):
    """Requested batch size exceeds the number of examples."""


class Assumption3Violation(MlabError):
    """A field width divided by ``b`` is within tolerance of an integer.

    Jump counts are ceilings, so rate constants are discontinuous here
    and estimation refuses to proceed.
    """

    exit_code = 3


class NumericalError(MlabError):
    """Base class for numerical failures."""

    exit_code = 4


class InterleavingViolation(NumericalError):
    """Detected critical points do not alternate minimum/saddle."""


class DegenerateCritical(NumericalError):
    """A critical point has curvature below tolerance."""


class NoConvergence(NumericalError):
    """Gradient descent flow failed to settle within the iteration cap."""


class NonFiniteGradient(NumericalError):
    """The gradient evaluated to NaN or infinity."""


class IntegratorFailure(NumericalError):
    """The flow integrator produced a non-finite state."""


class TruncationUnstable(NumericalError):
    """Rate estimates kept changing while doubling the time horizon."""


class ZeroExitRate(NumericalError):
    """A field produced no sampled escapes, so q_i = 0 and P rows are undefined."""


class SingularSystem(NumericalError):
    """The absorbing-chain linear system is singular."""


class AllCensored(NumericalError):
    """Every replication at every learning rate hit the step cap."""
