"""Deductible insurance: indemnity schedule and the loss expectations the solvers need.

Write ``m = min(eta*l, nu)`` for the fraction of wealth the insured investor
retains as loss. The insured loss term is ``E[g(1 - m)] - k (1+theta) E[I]``
where ``g`` is ``ln`` (``k = 1``) or ``y**alpha`` (``k = alpha``), and the
uninsured term replaces ``m`` by ``eta*l`` and drops the premium. Constant
and uniform loss fractions have closed forms; :func:`quadrature_oracle`
integrates the same quantities numerically. With ``k = alpha < 0`` the
insured term sits below the uninsured one.
"""

from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid, quad

from .errors import DivergentExpectation, InvalidParameter, NonConvergent
from .market import CONSTANT, LossModel, MarketModel, UtilitySpec

QUAD_TOL = 1e-10
QUAD_LIMIT = 200


def deductible_fraction(theta: float, utility: UtilitySpec) -> float:
    """Deductible as a fraction of wealth, ``nu = 1 - (1+theta)^(-1/(1-alpha))``.

    For log utility this is ``theta / (1 + theta)``; the square-root family
    goes through the power formula at ``alpha = 1/2``.
    """
    if theta <= 0:
        raise InvalidParameter("theta", theta, "must be positive")
    if utility.is_log:
        return theta / (1.0 + theta)
    return float(-np.expm1(-np.log1p(theta) / (1.0 - utility.alpha)))


def deductible_fractions(model: MarketModel, utility: UtilitySpec) -> NDArray[np.float64]:
    return np.array([deductible_fraction(p.theta, utility) for p in model.regimes])


def activation_threshold(regime: int, utility: UtilitySpec, model: MarketModel) -> float:
    """Loss fraction above which insurance is bought, ``nu / eta``."""
    params = model.regimes[regime]
    return deductible_fraction(params.theta, utility) / params.eta


def buy_insurance(regime: int, l: float, utility: UtilitySpec, model: MarketModel) -> bool:
    """Whether a loss fraction ``l`` triggers a payout; ties do not."""
    params = model.regimes[regime]
    if not params.insured:
        return False
    return bool(params.eta * l > deductible_fraction(params.theta, utility))


def optimal_indemnity(
    x: float, regime: int, l: ArrayLike, utility: UtilitySpec, model: MarketModel
):
    """Payout ``(eta*l - nu)^+ x`` for a loss fraction ``l`` at wealth ``x``."""
    params = model.regimes[regime]
    if not params.insured:
        return np.zeros_like(np.asarray(l, dtype=float)) if np.ndim(l) else 0.0
    nu = deductible_fraction(params.theta, utility)
    return np.maximum(params.eta * np.asarray(l, dtype=float) - nu, 0.0) * x


# Closed-form expectations over the loss fraction


def expected_indemnity(eta: float, nu: float, loss: LossModel) -> float:
    """``E[(eta*l - nu)^+]``."""
    if loss.kind == CONSTANT:
        return max(eta * loss.l - nu, 0.0)
    if eta <= nu:
        return 0.0
    return (eta - nu) ** 2 / (2.0 * eta)


def _power_integral(eta: float, upper: float, alpha: float) -> float:
    """``int_0^upper (1 - eta*l)^alpha dl`` for ``eta*upper < 1``."""
    log_end = np.log1p(-eta * upper)
    if alpha == -1:
        return float(-log_end / eta)
    return float(-np.expm1((1.0 + alpha) * log_end) / (eta * (1.0 + alpha)))


def log_retention_moment(eta: float, nu: float, loss: LossModel) -> float:
    """``E[ln(1 - min(eta*l, nu))]``; pass ``nu >= 1`` for the uninsured loss."""
    if loss.kind == CONSTANT:
        retained = min(eta * loss.l, nu)
        if retained >= 1:
            raise DivergentExpectation(f"total loss eta*l={eta * loss.l:.10g} under log utility")
        return float(np.log1p(-retained))
    if eta <= nu:
        if eta == 1:
            return -1.0
        return float((1.0 - 1.0 / eta) * np.log1p(-eta) - 1.0)
    return float(-nu / eta + (1.0 - 1.0 / eta) * np.log1p(-nu))


def power_retention_moment(eta: float, nu: float, alpha: float, loss: LossModel) -> float:
    """``E[(1 - min(eta*l, nu))^alpha]``; pass ``nu >= 1`` for the uninsured loss."""
    if loss.kind == CONSTANT:
        retained = min(eta * loss.l, nu)
        if retained >= 1:
            if alpha <= 0:
                raise DivergentExpectation(f"total loss eta*l={eta * loss.l:.10g}, alpha={alpha:g}")
            return 0.0
        return float(np.exp(alpha * np.log1p(-retained)))
    if eta <= nu:
        if eta == 1:
            if alpha <= -1:
                raise DivergentExpectation(
                    f"E[(1-l)^alpha] diverges for alpha={alpha:g} when eta*ess_sup(l)=1"
                )
            return 1.0 / (1.0 + alpha)
        return _power_integral(eta, 1.0, alpha)
    below = _power_integral(eta, nu / eta, alpha)
    return below + (1.0 - nu / eta) * float(np.exp(alpha * np.log1p(-nu)))


def _terms(regime: int, utility: UtilitySpec, model: MarketModel, insured: bool):
    params = model.regimes[regime]
    nu = deductible_fraction(params.theta, utility) if insured else 1.0
    if utility.is_log:
        moment = log_retention_moment(params.eta, nu, model.loss)
        weight = 1.0
    else:
        moment = power_retention_moment(params.eta, nu, utility.alpha, model.loss)
        weight = utility.alpha
    indemnity = expected_indemnity(params.eta, nu, model.loss) if insured else 0.0
    return moment - weight * (1.0 + params.theta) * indemnity


def lambda_term(regime: int, utility: UtilitySpec, model: MarketModel) -> float:
    """Loss term of the insured problem in ``regime``.

    Falls back to :func:`upsilon_term` when the regime has no insurance market.
    The premium enters with weight ``alpha``, so buying insurance raises the
    term for log utility and positive exponents and lowers it for negative
    exponents: ``sign(alpha) * (lambda_term - upsilon_term) >= 0``.
    """
    return _terms(regime, utility, model, insured=model.regimes[regime].insured)


def upsilon_term(regime: int, utility: UtilitySpec, model: MarketModel) -> float:
    """Loss term of the uninsured problem: ``E[ln(1-eta*l)]`` or ``E[(1-eta*l)^alpha]``."""
    return _terms(regime, utility, model, insured=False)


def expectation_terms(
    model: MarketModel, utility: UtilitySpec, constrained: bool = False
) -> NDArray[np.float64]:
    term = upsilon_term if constrained else lambda_term
    return np.array([term(i, utility, model) for i in range(model.size)])


def retention_moments(
    model: MarketModel, utility: UtilitySpec, constrained: bool = False
) -> NDArray[np.float64]:
    """Per-regime ``E[g(1 - m)]`` without the premium part."""
    moments = []
    for regime, params in enumerate(model.regimes):
        insured = params.insured and not constrained
        nu = deductible_fraction(params.theta, utility) if insured else 1.0
        if utility.is_log:
            moments.append(log_retention_moment(params.eta, nu, model.loss))
        else:
            moments.append(power_retention_moment(params.eta, nu, utility.alpha, model.loss))
    return np.array(moments)


def premium_fractions(
    model: MarketModel, utility: UtilitySpec, constrained: bool = False
) -> NDArray[np.float64]:
    """Premium rate per unit of wealth, ``lambda (1+theta) E[(eta*l - nu)^+]``."""
    fractions = np.zeros(model.size)
    if constrained:
        return fractions
    for regime, params in enumerate(model.regimes):
        if params.insured:
            nu = deductible_fraction(params.theta, utility)
            fractions[regime] = (
                params.lam * (1.0 + params.theta) * expected_indemnity(params.eta, nu, model.loss)
            )
    return fractions


# Numerical oracles


def quadrature_oracle(
    integrand: Callable[[float], float], loss: LossModel, breakpoints: Sequence[float] = ()
) -> float:
    """Expectation of ``integrand(l)`` under ``loss``.

    Uniform losses are integrated adaptively on ``(0, 1)`` to an absolute
    and relative tolerance of ``1e-10``, splitting at interior
    ``breakpoints`` (kinks such as ``nu / eta``). A constant loss evaluates
    the integrand at its single point.
    """
    if loss.kind == CONSTANT:
        return float(integrand(loss.l))

    points = sorted(p for p in breakpoints if 0 < p < 1)
    result = quad(
        integrand,
        0.0,
        1.0,
        points=points or None,
        epsabs=QUAD_TOL,
        epsrel=QUAD_TOL,
        limit=QUAD_LIMIT,
        full_output=1,
    )
    estimate, error = result[0], result[1]
    if len(result) == 4 or error > max(QUAD_TOL, QUAD_TOL * abs(estimate)):
        raise NonConvergent(estimate, error)
    return float(estimate)


def lambda_term_quadrature(
    regime: int, utility: UtilitySpec, model: MarketModel, constrained: bool = False
) -> float:
    """The loss term of :func:`lambda_term` (or :func:`upsilon_term`) by quadrature."""
    params = model.regimes[regime]
    insured = params.insured and not constrained
    nu = deductible_fraction(params.theta, utility) if insured else 1.0
    weight = 1.0 if utility.is_log else utility.alpha

    def integrand(l):
        paid = max(params.eta * l - nu, 0.0)
        kept = 1.0 - params.eta * l + paid
        value = np.log(kept) if utility.is_log else kept**utility.alpha
        return value - weight * (1.0 + params.theta) * paid

    return quadrature_oracle(integrand, model.loss, breakpoints=[nu / params.eta])


def brute_force_indemnity(
    wealth_grid: ArrayLike,
    marginal_value: ArrayLike,
    x: float,
    z: float,
    theta: float,
) -> float:
    """Grid search for the payout maximising ``v(x - z + I) - (1+theta) I v'(x)``.

    ``v`` is recovered up to a constant by trapezoid integration of the
    strictly decreasing ``marginal_value`` over ``wealth_grid``. Candidate
    post-loss wealth levels are ``x - z`` (no payout) and every grid point in
    ``(x - z, x]``.
    """
    grid = np.asarray(wealth_grid, dtype=float)
    slope = np.asarray(marginal_value, dtype=float)
    if not 0 < z < x:
        raise InvalidParameter("z", z, f"the loss must lie in (0, x={x:g})")
    if grid[0] > x - z or grid[-1] < x:
        raise InvalidParameter("wealth_grid", (grid[0], grid[-1]), f"must cover [{x - z:g}, {x:g}]")

    value = cumulative_trapezoid(slope, grid, initial=0.0)
    floor = x - z
    inside = grid[(grid > floor) & (grid <= x)]
    candidates = np.concatenate([[floor], inside])
    payouts = candidates - floor
    objective = np.interp(candidates, grid, value) - (1.0 + theta) * payouts * np.interp(
        x, grid, slope
    )
    return float(payouts[int(np.argmax(objective))])
