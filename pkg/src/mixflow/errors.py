"""Exception hierarchy shared by all mixflow modules."""


class MixflowError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameters(MixflowError, ValueError):
    pass


class NonPositiveDensity(MixflowError, ValueError):
    def __init__(self, species, index, value=None):
        self.species = species
        self.index = index
        self.value = value
        msg = f"species {species} density {value!r} below admissibility floor at grid index {index}"
        super().__init__(msg)


class NoConvergence(MixflowError, RuntimeError):
    def __init__(self, index, residual):
        self.index = index
        self.residual = residual
        super().__init__(f"root solve failed at grid index {index} (residual {residual:.3e})")


class InvalidFractions(MixflowError, ValueError):
    pass


class InvalidFluxMatrix(MixflowError, ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"flux matrix violates the structural identities: {report}")


class NotExemplary(MixflowError, ValueError):
    pass


class DeltaBudgetExceeded(MixflowError, RuntimeError):
    def __init__(self, t, budget, delta):
        self.t = t
        self.budget = budget
        self.delta = delta
        super().__init__(f"displacement-gradient budget {budget:.4g} exceeds delta={delta} at t={t:.6g}")


class BoundsViolated(MixflowError, ValueError):
    def __init__(self, a1, a2, lo, hi):
        self.a1, self.a2, self.lo, self.hi = a1, a2, lo, hi
        super().__init__(f"initial densities span [{lo:.6g}, {hi:.6g}], outside [{a1}, {a2}]")


class SingularSystem(MixflowError, RuntimeError):
    pass


class BallEscape(MixflowError, RuntimeError):
    def __init__(self, radius, norm):
        self.radius = radius
        self.norm = norm
        super().__init__(f"iterate norm {norm:.6g} left the ball of radius {radius:.6g}")


class NoContraction(MixflowError, RuntimeError):
    def __init__(self, report, message="Picard iteration did not contract"):
        self.report = report
        super().__init__(message)


class CompatibilityError(MixflowError, ValueError):
    pass


class ParseError(MixflowError, ValueError):
    def __init__(self, line, message="could not parse scenario file"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ValidationError(MixflowError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class IoError(MixflowError, OSError):
    pass
