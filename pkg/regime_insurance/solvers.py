"""Coefficient systems behind the closed-form value functions.

Each solver returns a :class:`CoefficientSet` whose ``values`` are the
per-regime constants ``A_i`` of the value function: additive for log
utility, multiplicative (through ``A_i^(1-alpha)``) for the power families.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import (
    InvalidParameter,
    NoConvergence,
    NoRealRoot,
    RootSelectionAmbiguous,
    SingularSystem,
)
from .market import MarketModel, UtilitySpec, validate_technical_condition

RESIDUAL_TARGET = 1e-12
RESIDUAL_ACCEPT = 1e-10
MAX_SWEEPS = 100_000
DAMPING = 0.5
UNDAMPED_BELOW = 1e-4
STALL_SWEEPS = 2_000


@dataclass(frozen=True)
class CoefficientSet:
    """Solved per-regime constants of a value function.

    ``expectations`` are the loss terms the system was solved with, and
    ``residual`` the maximum absolute residual of that system.
    """

    utility: UtilitySpec
    values: Tuple[float, ...]
    constrained: bool
    residual: float
    expectations: Tuple[float, ...]
    delta: float
    iterations: int = 0

    @property
    def size(self) -> int:
        return len(self.values)

    def as_array(self) -> NDArray[np.float64]:
        return np.array(self.values, dtype=float)

    def scale(self, regime: int) -> float:
        """Multiplier ``A_i^(1-alpha)`` of ``x^alpha`` (power families only)."""
        return float(self.values[regime] ** (1.0 - self.utility.alpha))


# Log utility


def _log_rhs(model: MarketModel, expectations: ArrayLike) -> NDArray[np.float64]:
    terms = np.asarray(expectations, dtype=float)
    return (model.r + model.gammas + model.lam * terms - model.delta) / model.delta


def solve_log(
    model: MarketModel,
    expectations: Sequence[float],
    *,
    utility: Optional[UtilitySpec] = None,
    constrained: bool = False,
) -> CoefficientSet:
    """Solve ``(delta I - Q) A = (r + gamma + lambda Lambda - delta) / delta``.

    Passing the uninsured terms gives the constrained coefficients.
    """
    system = model.delta * np.eye(model.size) - model.Q
    rhs = _log_rhs(model, expectations)
    try:
        values = scipy.linalg.solve(system, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as err:
        raise SingularSystem(f"delta*I - Q cannot be inverted: {err}") from err
    residual = float(np.max(np.abs(system @ values - rhs)))
    return CoefficientSet(
        utility=utility or UtilitySpec.log(),
        values=tuple(float(v) for v in values),
        constrained=constrained,
        residual=residual,
        expectations=tuple(float(e) for e in expectations),
        delta=model.delta,
    )


def log_two_regime_closed_form(
    model: MarketModel, expectations: Sequence[float]
) -> NDArray[np.float64]:
    """Explicit inverse of the two-regime log system, used to cross-check :func:`solve_log`."""
    if model.size != 2:
        raise InvalidParameter("regimes", model.size, "the closed form needs two regimes")
    delta = model.delta
    pi_1, pi_2 = model.generator.exit_rate(0), model.generator.exit_rate(1)
    b = model.r + model.gammas - delta + model.lam * np.asarray(expectations, dtype=float)
    denominator = delta**2 * (delta + pi_1 + pi_2)
    return np.array(
        [
            (pi_1 * b[1] + (delta + pi_2) * b[0]) / denominator,
            (pi_2 * b[0] + (delta + pi_1) * b[1]) / denominator,
        ]
    )


# Power utilities


def _power_constants(model: MarketModel, alpha: float, expectations: ArrayLike):
    terms = np.asarray(expectations, dtype=float)
    return (
        model.delta
        - alpha * model.r
        - alpha * model.gammas / (1.0 - alpha)
        + model.lam * (1.0 - terms)
    )


def power_residual(
    model: MarketModel, alpha: float, expectations: ArrayLike, scales: ArrayLike
) -> NDArray[np.float64]:
    """``C_i B_i - (1-alpha) B_i^(-alpha/(1-alpha)) - sum_j q_ij B_j`` for ``B = A^(1-alpha)``."""
    scales = np.asarray(scales, dtype=float)
    power = -alpha / (1.0 - alpha)
    return (
        _power_constants(model, alpha, expectations) * scales
        - (1.0 - alpha) * scales**power
        - model.Q @ scales
    )


def _scalar_root(slope: float, weight: float, power: float, offset: float, guess: float):
    """Positive root of ``slope*B - weight*B**power = offset`` by safeguarded Newton.

    The left-hand side is increasing once it turns positive, so the root is
    bracketed by doubling and halving around ``guess`` and then polished by
    Newton steps that fall back to bisection whenever they leave the bracket.
    """

    def f(b):
        return slope * b - weight * b**power - offset

    def df(b):
        return slope - weight * power * b ** (power - 1.0)

    hi = guess if guess > 0 and np.isfinite(guess) else max(1.0, offset / slope)
    start = hi
    while f(hi) <= 0:
        hi *= 2.0
        if not np.isfinite(hi):
            raise NoConvergence(0, float("inf"))
    lo = hi / 2.0
    while f(lo) >= 0:
        lo /= 2.0
        if lo == 0:
            return 0.0

    root = start if lo < start < hi else 0.5 * (lo + hi)
    step_old = step = hi - lo
    value, slope_at = f(root), df(root)
    for _ in range(500):
        outside = ((root - hi) * slope_at - value) * ((root - lo) * slope_at - value) > 0
        if outside or abs(2.0 * value) > abs(step_old * slope_at):
            step_old, step = step, 0.5 * (hi - lo)
            root = lo + step
        else:
            step_old, step = step, value / slope_at
            root -= step
        if abs(step) <= 1e-15 * max(1.0, root):
            return root
        value, slope_at = f(root), df(root)
        if value < 0:
            lo = root
        else:
            hi = root
    return root


def solve_power(
    model: MarketModel,
    alpha: float,
    expectations: Sequence[float],
    *,
    constrained: bool = False,
    initial: Optional[ArrayLike] = None,
    tol: float = RESIDUAL_TARGET,
    accept: float = RESIDUAL_ACCEPT,
    max_iterations: int = MAX_SWEEPS,
) -> CoefficientSet:
    """Positive solution of the power-utility system by damped Gauss-Seidel.

    Works on ``B_i = A_i^(1-alpha)``. Each sweep solves the scalar equation of
    every regime with the others held fixed; sweeps are damped by 0.5 until
    the residual drops below ``1e-4``. Starts from the decoupled solution
    ``A_i = (1-alpha)/C_i`` unless ``initial`` values of ``A`` are given.
    """
    from . import logger

    if not alpha < 1 or alpha == 0:
        raise InvalidParameter("alpha", alpha, "power utility needs alpha < 1, alpha != 0")

    weight = 1.0 - alpha
    power = -alpha / weight
    constants = _power_constants(model, alpha, expectations)
    slopes = constants - np.diag(model.Q)
    if np.any(slopes <= 0):
        raise NoConvergence(0, float("inf"))

    if initial is None:
        start = weight / constants
        if np.any(start <= 0):
            start = np.ones(model.size)
    else:
        start = np.asarray(initial, dtype=float)
        if start.shape != (model.size,) or np.any(start <= 0):
            raise InvalidParameter("initial", initial, "needs one positive value per regime")
    scales = start**weight

    off_diagonal = model.Q - np.diag(np.diag(model.Q))
    residual = float(np.max(np.abs(power_residual(model, alpha, expectations, scales))))
    best, best_sweep = residual, 0
    sweep = 0
    while residual > tol and sweep < max_iterations:
        sweep += 1
        omega = 1.0 if residual < UNDAMPED_BELOW else DAMPING
        for i in range(model.size):
            target = _scalar_root(slopes[i], weight, power, off_diagonal[i] @ scales, scales[i])
            scales[i] = (1.0 - omega) * scales[i] + omega * target
        residual = float(np.max(np.abs(power_residual(model, alpha, expectations, scales))))
        if residual < 0.5 * best:
            best, best_sweep = residual, sweep
        elif sweep - best_sweep > STALL_SWEEPS:
            break

    if not residual <= accept:
        raise NoConvergence(sweep, residual)

    logger.debug(
        "[regime-insurance] power system alpha=%g solved in %d sweeps (residual %.3g)",
        alpha,
        sweep,
        residual,
    )
    return CoefficientSet(
        utility=UtilitySpec.power(alpha),
        values=tuple(float(v) for v in scales ** (1.0 / weight)),
        constrained=constrained,
        residual=residual,
        expectations=tuple(float(e) for e in expectations),
        delta=model.delta,
        iterations=sweep,
    )


# Regime-dependent square-root utility


def sqrt_constants(model: MarketModel, betas: Sequence[float], expectations: Sequence[float]):
    """``(xi_i, b_i)`` with ``b_i = beta_i^2 / (2 Pi_i)`` for the two-regime system."""
    rates = np.array([model.generator.exit_rate(0), model.generator.exit_rate(1)])
    terms = np.asarray(expectations, dtype=float)
    xi = (
        model.delta
        + rates
        - model.r / 2.0
        - model.gammas
        + model.lam * (1.0 - terms)
    ) / rates
    b = np.asarray(betas, dtype=float) ** 2 / (2.0 * rates)
    return xi, b


def solve_sqrt_two_regime(
    model: MarketModel,
    betas: Sequence[float],
    expectations: Sequence[float],
    *,
    constrained: bool = False,
) -> CoefficientSet:
    """Solve ``xi_1 A_1 - b_1 = sqrt(A_1 A_2) = xi_2 A_2 - b_2``.

    Eliminating ``A_2`` leaves a quadratic in ``A_1``. Both of its roots are
    tried; a root is admissible when both coefficients are positive and the
    common value ``sqrt(A_1 A_2)`` is nonnegative, i.e. ``A_i >= b_i / xi_i``.
    """
    if model.size != 2:
        raise InvalidParameter("regimes", model.size, "square-root utility needs two regimes")
    if np.any(model.Q[[0, 1], [1, 0]] <= 0):
        raise SingularSystem("square-root system needs both switching rates positive")

    (xi_1, xi_2), (b_1, b_2) = sqrt_constants(model, betas, expectations)
    a = xi_1 / xi_2 - xi_1**2
    b = (b_2 - b_1) / xi_2 + 2.0 * xi_1 * b_1
    c = -(b_1**2)
    discriminant = (b_1 - b_2) ** 2 / xi_2**2 + 4.0 * xi_1 * b_1 * b_2 / xi_2
    if not discriminant > 0:
        raise NoRealRoot(discriminant)

    if a == 0:
        candidates = [-c / b]
    else:
        q = -0.5 * (b + np.copysign(np.sqrt(discriminant), b))
        candidates = [q / a, c / q]

    admissible = []
    for root in candidates:
        partner = (xi_1 * root - b_1 + b_2) / xi_2
        if root > 0 and partner > 0 and xi_1 * root - b_1 >= 0:
            admissible.append((float(root), float(partner)))
    if not admissible:
        raise NoRealRoot(discriminant)
    if len(admissible) > 1 and not np.allclose(admissible[0], admissible[1], rtol=1e-12):
        raise RootSelectionAmbiguous([pair[0] for pair in admissible])

    values = admissible[0]
    common = np.sqrt(values[0] * values[1])
    residual = float(
        max(abs(xi_1 * values[0] - b_1 - common), abs(xi_2 * values[1] - b_2 - common))
    )
    if residual > RESIDUAL_ACCEPT * max(1.0, common):
        raise NoConvergence(0, residual)

    return CoefficientSet(
        utility=UtilitySpec.regime_sqrt(*betas),
        values=values,
        constrained=constrained,
        residual=residual,
        expectations=tuple(float(e) for e in expectations),
        delta=model.delta,
    )


def solve(model: MarketModel, utility: UtilitySpec, constrained: bool = False) -> CoefficientSet:
    """Validate ``model`` for ``utility`` and solve its coefficient system."""
    from . import logger

    validated = validate_technical_condition(model, utility, constrained=constrained)
    expectations = validated.expectations
    if utility.is_log:
        coeffs = solve_log(model, expectations, utility=utility, constrained=constrained)
    elif utility.kind == "regime_sqrt":
        coeffs = solve_sqrt_two_regime(model, utility.beta, expectations, constrained=constrained)
    else:
        coeffs = solve_power(model, utility.alpha, expectations, constrained=constrained)

    logger.info(
        "[regime-insurance] solved %s%s: %s",
        utility.describe(),
        " (constrained)" if constrained else "",
        ", ".join(f"{value:.10g}" for value in coeffs.values),
    )
    return coeffs


def hjb_residual(
    model: MarketModel, utility: UtilitySpec, coeffs: CoefficientSet, x: float
) -> NDArray[np.float64]:
    """Left minus right side of the HJB equation at the closed-form maximisers.

    Investment uses ``pi* = (mu - r)/((1-alpha) sigma^2)``, consumption
    ``(U')^{-1}(v')`` and the deductible schedule (none when ``coeffs`` is
    constrained).
    """
    from .insurance import premium_fractions, retention_moments
    from .policy import ValueFunction

    if not x > 0:
        raise InvalidParameter("x", x, "wealth must be positive")

    vf = ValueFunction(model, coeffs)
    alpha = utility.alpha
    moments = retention_moments(model, utility, constrained=coeffs.constrained)
    premiums = premium_fractions(model, utility, constrained=coeffs.constrained)
    values = np.array([vf.value(x, i) for i in range(model.size)])

    residual = np.empty(model.size)
    for i, params in enumerate(model.regimes):
        v, dv, d2v = values[i], vf.derivative(x, i), vf.second_derivative(x, i)
        pi_star = (params.mu - params.r) / ((1.0 - alpha) * params.sigma**2)
        invest = (
            params.r * x * dv
            + (params.mu - params.r) * pi_star * x * dv
            + 0.5 * params.sigma**2 * pi_star**2 * x**2 * d2v
        )
        c = float(utility.inverse_marginal(dv, i))
        consume = float(utility.evaluate(c, i)) - c * dv
        if utility.is_log:
            post_loss = v + moments[i] / model.delta
        else:
            post_loss = v * moments[i]
        losses = params.lam * (post_loss - v) - premiums[i] * x * dv
        switching = model.Q[i] @ values
        residual[i] = invest + consume + losses + switching - model.delta * v
    return residual
