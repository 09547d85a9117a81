"""Exceptions raised while validating, solving, simulating and analysing models.

All errors derive from :class:`sphinx.errors.SphinxError` so that a failing
``regime-table`` directive is reported by Sphinx with its category, exactly
like any other extension error. The command line maps
:class:`ValidationError` to exit code 1 and :class:`SolverError` to exit code 2.
"""

from typing import Optional, Sequence

from sphinx.errors import SphinxError


class RegimeInsuranceError(SphinxError):
    category = "Regime insurance error"


class ValidationError(RegimeInsuranceError):
    """Raised when a model, a config document or a grid is not admissible."""

    category = "Validation error"


class SolverError(RegimeInsuranceError):
    """Raised when a numerical procedure fails to deliver a certified result."""

    category = "Solver error"


# Validation failures


class InvalidGenerator(ValidationError):
    category = "Invalid generator"

    def __init__(self, row: Optional[int], reason: str):
        self.row = row
        self.reason = reason
        where = "matrix" if row is None else f"row {row}"
        super().__init__(f"{where}: {reason}")


class InvalidParameter(ValidationError):
    category = "Invalid parameter"

    def __init__(self, name: str, value: object, reason: str):
        self.name = name
        self.value = value
        super().__init__(f"{name}={value!r}: {reason}")


class ConfigError(ValidationError):
    category = "Config error"

    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"{key}: {reason}")


class UnknownParameterSet(ValidationError):
    category = "Unknown parameter set"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no published parameter set named {name!r} (expected 'I' or 'II')")


class ConditionViolated(ValidationError):
    category = "Technical condition violated"

    def __init__(self, regime: int, lhs: float, rhs: float):
        self.regime = regime
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"regime {regime}: delta={lhs:.10g} does not exceed {rhs:.10g}")


class DivergentExpectation(ValidationError):
    category = "Divergent expectation"


class UnboundedTail(ValidationError):
    category = "Unbounded tail"

    def __init__(self, growth: float, delta: float):
        self.growth = growth
        self.delta = delta
        super().__init__(f"discount rate {delta:.10g} does not dominate growth rate {growth:.10g}")


class DegenerateDenominator(ValidationError):
    category = "Degenerate denominator"

    def __init__(self, regime: int):
        self.regime = regime
        super().__init__(f"constrained coefficient vanishes in regime {regime}")


class InactiveInsurance(ValidationError):
    category = "Inactive insurance"

    def __init__(self, theta: float, alpha: float):
        self.theta = theta
        self.alpha = alpha
        super().__init__(f"insurance is not bought at theta={theta:.10g}, alpha={alpha:.10g}")


class ConstraintViolated(ValidationError):
    category = "Constraint violated"

    def __init__(self, theta: float, eta: float, floor: float):
        self.theta = theta
        self.eta = eta
        self.floor = floor
        super().__init__(f"eta={eta:.10g} is below theta/(1+theta)={floor:.10g}")


class RegimeOrderingViolated(ValidationError):
    category = "Regime ordering violated"

    def __init__(self, alpha: float, boundary: float):
        self.alpha = alpha
        self.boundary = boundary
        super().__init__(f"alpha={alpha:.10g} lies outside (0, {boundary:.10g}]")


# Solver failures


class SingularChain(SolverError):
    category = "Singular chain"


class SingularSystem(SolverError):
    category = "Singular system"


class NonConvergent(SolverError):
    category = "Quadrature did not converge"

    def __init__(self, estimate: float, error: float):
        self.estimate = estimate
        self.error = error
        super().__init__(f"estimate {estimate:.10g} with error bound {error:.3g}")


class NoConvergence(SolverError):
    category = "No convergence"

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"residual {residual:.3g} after {iterations} iterations")


class NoRealRoot(SolverError):
    category = "No real root"

    def __init__(self, discriminant: float):
        self.discriminant = discriminant
        super().__init__(f"discriminant {discriminant:.10g} is not positive")


class RootSelectionAmbiguous(SolverError):
    category = "Ambiguous root"

    def __init__(self, roots: Sequence[float]):
        self.roots = tuple(roots)
        listed = ", ".join(f"{root:.10g}" for root in self.roots)
        super().__init__(f"more than one admissible root: {listed}")


class NonpositiveWealth(SolverError):
    category = "Nonpositive wealth"

    def __init__(self, path: int, time: float):
        self.path = path
        self.time = time
        super().__init__(f"wealth reached zero on path {path} at t={time:.10g}")
