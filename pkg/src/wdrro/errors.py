"""Exception hierarchy shared by all solvers."""


class DRROError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(DRROError, ValueError):
    """Inputs fail validation (shapes, signs, empty data, bad radius)."""


class Infeasible(DRROError):
    """An optimization problem has an empty feasible set."""


class Unbounded(DRROError):
    """An optimization problem has an unbounded objective."""


class NumericalFailure(DRROError):
    """The backend solver stopped without a usable solution."""


class UnsupportedConfiguration(DRROError):
    """The requested combination of options is not implemented."""


class InvalidCertificate(DRROError):
    """A solver returned a certificate that cannot be turned into a distribution."""
