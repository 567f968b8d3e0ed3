"""Exception hierarchy shared across the package."""


class UnidmError(Exception):
    """Base class for all errors raised by unidm."""


class CutoffTooSmallError(UnidmError):
    """The Fock cutoff cannot represent a state to the requested accuracy."""


class NotPSDError(UnidmError):
    pass


class DimensionError(UnidmError, ValueError):
    pass


class BasisConstructionError(UnidmError):
    pass


class QBlockUnphysicalError(UnidmError):
    """V*W <= C_q**2: the q-quadrature block is not positive definite."""


class EmptyRegionError(UnidmError):
    """No value of C_p makes the covariance summary physical."""


class UnphysicalConditionalError(UnidmError):
    pass


class NumericalInconsistencyError(UnidmError):
    pass


class QuadratureError(UnidmError):
    """Numerical integration over the homodyne outcome did not converge."""


class SdpInfeasibleError(UnidmError):
    pass


class SdpNumericalError(UnidmError):
    pass


class ConvergenceError(UnidmError):
    """The truncation convergence gate failed."""


class ConfigError(UnidmError, ValueError):
    pass
