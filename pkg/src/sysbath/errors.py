"""Exception types raised across the package."""


class SysbathError(Exception):
    """Base class for all package errors."""


class NonHermitianInput(SysbathError, ValueError):
    pass


class OddDimension(SysbathError, ValueError):
    pass


class DimensionMismatch(SysbathError, ValueError):
    pass


class TooManyModes(SysbathError, ValueError):
    pass


class NonCommutingTerms(SysbathError, ValueError):
    def __init__(self, i: int, j: int, labels=None):
        self.pair = (i, j)
        msg = f"terms {i} and {j} do not commute"
        if labels is not None:
            msg += f" ({labels[i]!r}, {labels[j]!r})"
        super().__init__(msg)


class ZeroModePresent(SysbathError, ValueError):
    pass


class DegenerateGroundState(SysbathError, ValueError):
    pass


class NoConvergence(SysbathError, RuntimeError):
    pass


class QuadratureNoConvergence(NoConvergence):
    pass


class DimensionTooLarge(SysbathError, ValueError):
    pass


class SingularGibbsState(SysbathError, ValueError):
    pass


class NonUniqueFixedPoint(SysbathError, RuntimeError):
    pass


class Timeout(SysbathError, RuntimeError):
    pass


class ConfigError(SysbathError, ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
