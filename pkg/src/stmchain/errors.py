"""Exception hierarchy.

Config/validation problems derive from ``ValidationError``; everything that
goes wrong inside a numerical routine derives from ``NumericalError``. The CLI
maps the two families to distinct exit codes.
"""


class StmChainError(Exception):
    pass


class ValidationError(StmChainError, ValueError):
    pass


class NumericalError(StmChainError, ArithmeticError):
    pass


class EnergyConservationViolated(ValidationError):
    def __init__(self, site, residual):
        self.site = site
        self.residual = residual
        super().__init__(
            f"{site}: 2*gamma != k_a^2 + k_b^2 + kappa (residual {residual:.3e} MHz)"
        )


class NonPositiveParameter(ValidationError):
    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__(f"{name} must be positive, got {value!r}")


class DegenerateSquid(NumericalError):
    pass


class SingularLevel(NumericalError):
    """A nested 2x2 sideband level is numerically singular.

    ``p`` is the signed sideband index (negative on the lower ladder).
    """

    def __init__(self, p, cond):
        self.p = p
        self.cond = cond
        super().__init__(f"sideband level p={p} is singular (cond={cond:.3e})")


class SingularSystem(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class ZeroTransmission(NumericalError):
    def __init__(self, which, surviving):
        self.which = which
        self.surviving = surviving
        super().__init__(f"|{which}| underflowed; surviving magnitude {surviving:.3e}")


class BracketInvalid(NumericalError):
    pass


class ImagGuardViolated(NumericalError):
    pass


class NotSettled(NumericalError):
    pass


class ParseError(ValidationError):
    def __init__(self, path, lineno, msg):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {msg}")


class NonMonotonicAxis(ValidationError):
    pass


class AxisMismatch(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class AmbiguousMinimum(NumericalError):
    pass
