"""Exception types raised by the numerical modules and mapped to CLI exit codes."""


class DickeLMGError(Exception):
    """Base class for all package errors."""


class ConfigError(DickeLMGError, ValueError):
    """Invalid run configuration (CLI exit code 2)."""


class DimensionMismatch(DickeLMGError, ValueError):
    pass


class NumericalError(DickeLMGError, RuntimeError):
    """Numerical non-convergence family (CLI exit code 3)."""


class CutoffInsufficient(NumericalError):
    """Boson truncation is biasing the result: too much weight in the top Fock layers."""

    def __init__(self, tail_population: float, threshold: float):
        self.tail_population = tail_population
        self.threshold = threshold
        super().__init__(
            f"top-10% Fock layers hold population {tail_population:.3e} > {threshold:.0e}; "
            "increase boson_cutoff"
        )

    def __reduce__(self):
        # picklable across process pools
        return type(self), (self.tail_population, self.threshold)


class NonConverged(NumericalError):
    pass


class StepNonConverged(NonConverged):
    pass


class DegenerateDenominator(NumericalError):
    pass


class GridTooSmall(NumericalError):
    pass


class NoPeak(NumericalError):
    pass


class NonHermitianInput(DickeLMGError, ValueError):
    pass
