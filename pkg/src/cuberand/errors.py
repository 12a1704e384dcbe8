"""Exception hierarchy for cuberand.

Every error raised by the library derives from :class:`CuberandError`, so
callers (notably the CLI) can map failures onto exit codes without matching
on message strings.
"""


class CuberandError(Exception):
    """Base class for all cuberand errors."""


class DimensionMismatch(CuberandError):
    """Input array shapes are inconsistent."""


class DomainError(CuberandError):
    """Scalar argument outside its mathematical domain (e.g. p not in (0,1))."""


class NoKernel(CuberandError):
    """The matrix has full column rank: its null space is trivial."""


class Infeasible(CuberandError):
    """Linear program constraints are inconsistent beyond tolerance."""


class Unbounded(CuberandError):
    """Linear program objective decreases without bound."""


class InvalidProbability(CuberandError):
    """Assignment probability outside (0, 1)."""


class InvalidGroupSize(CuberandError):
    """Requested treated-group size is not strictly between 0 and n."""


class OddSampleSize(CuberandError):
    """Matched-pairs design needs an even number of units."""


class PropensityOutOfRange(CuberandError):
    """Assignment probability violates the common-support bounds [c, 1-c]."""


class NumericalBreakdown(CuberandError):
    """An iterative routine stopped making progress within tolerance."""


class TooManyUnresolved(CuberandError):
    """Too many units left for the enumeration-based landing step."""


class HeterogeneousPi(CuberandError):
    """Metric defined only for the homogeneous pi = 1/2 benchmark."""


class EmptyGroup(CuberandError):
    """Estimator needs at least one treated and one control unit."""


class NoIdentifiedStrata(CuberandError):
    """No stratum contains both a treated and a control unit."""


class InsufficientData(CuberandError):
    """Not enough observations to fit the requested regression."""
