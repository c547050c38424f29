"""
Shared exception hierarchy

Every error carries the process exit code the gateway reports for it.
"""


class GibbsQuadError(Exception):
    """Base error for the quadrature toolkit"""
    exit_code = 1


class ConfigError(GibbsQuadError, ValueError):
    """Invalid input, spec string or configuration"""
    exit_code = 2


class NumericalError(GibbsQuadError, ArithmeticError):
    """Numerical failure while sampling or evaluating energies"""
    exit_code = 3


class EmptySampleError(ConfigError):
    def __init__(self, message='empty sample'):
        super().__init__(message)


class DimensionMismatchError(ConfigError):
    def __init__(self, message='dimension mismatch'):
        super().__init__(message)


class AnalyticFormError(ConfigError):
    def __init__(self, message='analytic form unavailable'):
        super().__init__(message)


class SupportError(ConfigError):
    def __init__(self, message='target escapes equilibrium support'):
        super().__init__(message)


class SingularKernelError(NumericalError):
    """Operation needs a bounded (non-singular) kernel or distinct points"""


class DegenerateWeightsError(NumericalError):
    def __init__(self, message='degenerate weights'):
        super().__init__(message)


class InvalidConfigurationError(NumericalError):
    def __init__(self, message='invalid initial configuration'):
        super().__init__(message)


class ExperimentError(GibbsQuadError):
    """Wraps a failure with the experiment context, keeping the cause's exit code"""

    def __init__(self, context, cause):
        super().__init__(f"{context}: {cause}")
        self.context = context
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
