"""Exception hierarchy shared by every module of the package."""


class WSobolevError(Exception):
    """Base class for all package errors."""


class InvalidArgument(WSobolevError, ValueError):
    pass


class EmptyDomain(WSobolevError):
    pass


class EmptySlice(WSobolevError):
    pass


class FiberEscape(WSobolevError):
    """A fiber quadrature point left the support of the source measure."""


class DegenerateJacobian(WSobolevError):
    pass


class AllZeroWeight(WSobolevError):
    pass


class EmptySupport(WSobolevError):
    pass


class NonFiniteValue(WSobolevError):
    pass


class StencilUnderflow(WSobolevError):
    """A lattice line is too short to carry a difference formula of the requested order."""


class SingularOperator(WSobolevError):
    pass


class NotInSupport(WSobolevError):
    pass


class OutOfDomain(WSobolevError):
    pass


class NoFitFound(WSobolevError):
    pass


class DegenerateFit(WSobolevError):
    pass


class ConfigError(WSobolevError):
    """Invalid run configuration; ``key`` names the offending key path."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
