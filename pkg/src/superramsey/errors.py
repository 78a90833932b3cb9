"""Exception hierarchy shared by the simulator modules."""


class SuperRamseyError(Exception):
    """Base class for all package errors."""


class NumericError(SuperRamseyError):
    """Raised for failures of the numerical machinery (CLI exit status 3)."""


class StepLimitExceeded(NumericError):
    def __init__(self, t, max_steps):
        self.t = t
        self.max_steps = max_steps
        super().__init__(f"integrator hit max_steps={max_steps} at t={t:.6e} s")


class NonFiniteState(NumericError):
    def __init__(self, t, index):
        self.t = t
        self.index = index
        super().__init__(f"non-finite state component {index} at t={t:.6e} s")


class HermiticityViolation(NumericError):
    pass


class NegativeCasimir(NumericError):
    """Closure pushed sum_i <J_i^2> below zero; reported instead of clamped."""


class OutOfRange(SuperRamseyError):
    pass


class ZeroDrive(SuperRamseyError):
    pass


class DimensionCap(SuperRamseyError):
    pass


class TraceDrift(NumericError):
    pass


class CutoffInadequate(NumericError):
    pass


class FitError(SuperRamseyError):
    """Base class for pulse-fit failures (CLI exit status 4)."""


class NoPeak(FitError):
    pass


class FitDiverged(FitError):
    def __init__(self, message, best_effort=None):
        super().__init__(message)
        self.best_effort = best_effort


class SingularDesign(FitError):
    pass


class ConfigError(SuperRamseyError):
    """Invalid run configuration (CLI exit status 2)."""
