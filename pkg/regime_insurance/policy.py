"""Optimal policies and value functions assembled from solved coefficients."""

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidParameter
from .insurance import deductible_fraction, expected_indemnity, premium_fractions
from .market import NEGATIVE_POWER, REGIME_SQRT, MarketModel, UtilitySpec
from .solvers import CoefficientSet


@dataclass(frozen=True)
class PolicyBundle:
    """Per-regime investment fraction, consumption ratio and deductible fraction.

    ``insured`` marks regimes where a payout is possible; it is false
    everywhere for a constrained bundle. ``premium`` is the premium rate per
    unit of wealth.
    """

    utility: UtilitySpec
    constrained: bool
    pi_star: Tuple[float, ...]
    kappa: Tuple[float, ...]
    nu: Tuple[float, ...]
    eta: Tuple[float, ...]
    insured: Tuple[bool, ...]
    premium: Tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.kappa)

    def perturbed(self, pi_scale: float = 1.0, kappa_scale: float = 1.0) -> "PolicyBundle":
        """Same bundle with ``pi*`` and ``kappa`` scaled, for optimality checks."""
        if pi_scale <= 0 or kappa_scale <= 0:
            raise InvalidParameter("scale", (pi_scale, kappa_scale), "scales must be positive")
        return replace(
            self,
            pi_star=tuple(p * pi_scale for p in self.pi_star),
            kappa=tuple(k * kappa_scale for k in self.kappa),
        )

    def indemnity_fraction(self, regime: int, l: ArrayLike):
        """Payout per unit of wealth for loss fractions ``l``."""
        l = np.asarray(l, dtype=float)
        if not self.insured[regime]:
            return np.zeros_like(l)
        return np.maximum(self.eta[regime] * l - self.nu[regime], 0.0)


@dataclass(frozen=True)
class ValueFunction:
    model: MarketModel
    coefficients: CoefficientSet

    @property
    def utility(self) -> UtilitySpec:
        return self.coefficients.utility

    def _sign(self) -> float:
        return -1.0 if self.utility.kind == NEGATIVE_POWER else 1.0

    def value(self, x, regime: int):
        x = np.asarray(x, dtype=float)
        if self.utility.is_log:
            delta = self.model.delta
            return np.log(delta * x) / delta + self.coefficients.values[regime]
        alpha = self.utility.alpha
        return self._sign() * self.coefficients.scale(regime) * x**alpha

    def derivative(self, x, regime: int):
        x = np.asarray(x, dtype=float)
        if self.utility.is_log:
            return 1.0 / (self.model.delta * x)
        alpha = self.utility.alpha
        return self._sign() * alpha * self.coefficients.scale(regime) * x ** (alpha - 1.0)

    def second_derivative(self, x, regime: int):
        x = np.asarray(x, dtype=float)
        if self.utility.is_log:
            return -1.0 / (self.model.delta * x**2)
        alpha = self.utility.alpha
        return (
            self._sign()
            * alpha
            * (alpha - 1.0)
            * self.coefficients.scale(regime)
            * x ** (alpha - 2.0)
        )


@dataclass(frozen=True)
class WealthState:
    t: float
    x: float
    regime: int

    def __post_init__(self):
        if not self.x > 0:
            raise InvalidParameter("x", self.x, "wealth must be positive")


def optimal_investment(model: MarketModel, utility: UtilitySpec, regime: int) -> float:
    """Fraction of wealth held in the stock, ``(mu - r) / ((1 - alpha) sigma^2)``.

    No box constraint applies: values above 1 mean borrowing at ``r``.
    """
    params = model.regimes[regime]
    return (params.mu - params.r) / ((1.0 - utility.alpha) * params.sigma**2)


def consumption_ratio(coeffs: CoefficientSet, regime: int) -> float:
    utility = coeffs.utility
    if utility.is_log:
        return coeffs.delta
    if utility.kind == REGIME_SQRT:
        return utility.beta[regime] ** 2 / coeffs.values[regime]
    return 1.0 / coeffs.values[regime]


def policy_bundle(model: MarketModel, coeffs: CoefficientSet) -> PolicyBundle:
    utility = coeffs.utility
    constrained = coeffs.constrained
    return PolicyBundle(
        utility=utility,
        constrained=constrained,
        pi_star=tuple(optimal_investment(model, utility, i) for i in range(model.size)),
        kappa=tuple(consumption_ratio(coeffs, i) for i in range(model.size)),
        nu=tuple(deductible_fraction(p.theta, utility) for p in model.regimes),
        eta=tuple(p.eta for p in model.regimes),
        insured=tuple(p.insured and not constrained for p in model.regimes),
        premium=tuple(float(f) for f in premium_fractions(model, utility, constrained)),
    )


def policy_at(state: WealthState, bundle: PolicyBundle, l: float):
    """``(stock holding, consumption rate, indemnity)`` at ``state`` for a loss ``l``."""
    i = state.regime
    payout = float(bundle.indemnity_fraction(i, l)) * state.x
    return bundle.pi_star[i] * state.x, bundle.kappa[i] * state.x, payout


def value(vf: ValueFunction, x: float, regime: int) -> float:
    if not x > 0:
        raise InvalidParameter("x", x, "wealth must be positive")
    return float(vf.value(x, regime))


def premium_rate(state: WealthState, bundle: PolicyBundle, model: MarketModel) -> float:
    """Premium paid per year, ``lambda (1+theta) E[(eta l - nu)^+] x``."""
    i = state.regime
    if not bundle.insured[i]:
        return 0.0
    params = model.regimes[i]
    fair = expected_indemnity(params.eta, bundle.nu[i], model.loss)
    return params.lam * (1.0 + params.theta) * fair * state.x
