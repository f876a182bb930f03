"""Exception types shared across the package."""


class MMSDEError(Exception):
    """Base class for all library errors."""


class NoResolvent(MMSDEError, ValueError):
    """The operator description does not admit a computable resolvent."""


class OutsideDomain(MMSDEError, ValueError):
    pass


class GridMismatch(MMSDEError, ValueError):
    pass


class StabilityViolation(MMSDEError, ValueError):
    pass


class NotInGraph(MMSDEError, ValueError):
    pass


class OptimizerDiverged(MMSDEError, RuntimeError):
    pass


class SingularDiffusion(MMSDEError, ValueError):
    pass


class NotInterior(MMSDEError, ValueError):
    pass


class BadEta(MMSDEError, ValueError):
    pass


class BadG0(MMSDEError, ValueError):
    pass


class UnsupportedContraction(MMSDEError, NotImplementedError):
    pass


class HorizonTooShort(MMSDEError, ValueError):
    pass


class EmptyNet(MMSDEError, ValueError):
    pass


class MissingInput(MMSDEError, FileNotFoundError):
    pass


class ConfigError(MMSDEError, ValueError):
    """Raised when an experiment configuration fails validation."""


class ZeroHits(MMSDEError, ArithmeticError):
    """No Monte Carlo replica hit the event, so log p is undefined."""
