"""Exception hierarchy for the spatial MMSE enhancement library"""


class EnhancementError(Exception):
    """Base class for all library errors"""


class ConfigError(EnhancementError, ValueError):
    """Invalid framing, geometry or experiment configuration"""


class DomainError(EnhancementError, ValueError):
    """Argument outside the domain of a special function"""


class InsufficientData(EnhancementError, ValueError):
    """Too few observations for the requested fit or statistic"""


class NotPositiveDefinite(EnhancementError):
    """Hermitian factorization failed even after maximum diagonal loading"""


class NoConvergence(EnhancementError):
    """Iterative routine did not converge within its iteration budget"""


class DegenerateComponent(EnhancementError):
    """Mixture component collapsed and could not be recovered"""


class NumericalOverflow(EnhancementError, ArithmeticError):
    """Log-domain combination still produced a non-finite value"""


class DegenerateSegment(EnhancementError):
    """Metric segment without target energy"""
