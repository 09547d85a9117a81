"""Market, loss and utility primitives, and the checks that run before any solve."""

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .chain import GeneratorMatrix
from .errors import ConditionViolated, InvalidParameter, UnknownParameterSet

LOG = "log"
NEGATIVE_POWER = "negative_power"
POSITIVE_POWER = "positive_power"
REGIME_SQRT = "regime_sqrt"
UTILITY_KINDS = (LOG, NEGATIVE_POWER, POSITIVE_POWER, REGIME_SQRT)

CONSTANT = "constant"
UNIFORM = "uniform"


@dataclass(frozen=True)
class RegimeParams:
    """Coefficients that hold while the chain sits in one regime.

    ``lam`` is the loss arrival intensity (``lambda`` in config documents).
    ``insured`` closes the insurance market in this regime when false.
    """

    r: float
    mu: float
    sigma: float
    lam: float
    theta: float
    eta: float
    insured: bool = True

    def __post_init__(self):
        for name in ("r", "mu", "sigma", "lam", "theta", "eta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameter(name, value, "must be a positive finite number")

    @property
    def gamma(self) -> float:
        return (self.mu - self.r) ** 2 / (2.0 * self.sigma**2)


@dataclass(frozen=True)
class LossModel:
    """Distribution of the loss fraction ``l``: a point mass or uniform on ``(0, 1)``."""

    kind: str
    l: Optional[float] = None

    def __post_init__(self):
        if self.kind == CONSTANT:
            if self.l is None or not 0 < self.l < 1:
                raise InvalidParameter("l", self.l, "a constant loss fraction must lie in (0, 1)")
        elif self.kind == UNIFORM:
            if self.l is not None:
                raise InvalidParameter("l", self.l, "a uniform loss takes no fraction")
        else:
            raise InvalidParameter("loss.kind", self.kind, f"expected {CONSTANT!r} or {UNIFORM!r}")

    @classmethod
    def constant(cls, l: float) -> "LossModel":
        return cls(CONSTANT, float(l))

    @classmethod
    def uniform(cls) -> "LossModel":
        return cls(UNIFORM)

    @property
    def ess_sup(self) -> float:
        return self.l if self.kind == CONSTANT else 1.0

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        if self.kind == CONSTANT:
            return np.full(size, self.l)
        return rng.random(size)

    def describe(self) -> str:
        return f"constant l={self.l:g}" if self.kind == CONSTANT else "uniform l on (0,1)"


@dataclass(frozen=True)
class UtilitySpec:
    """One of the four utility families the solvers know in closed form."""

    kind: str
    exponent: Optional[float] = None
    beta: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise InvalidParameter("utility.kind", self.kind, f"expected one of {UTILITY_KINDS}")
        if self.kind == NEGATIVE_POWER and not (self.exponent is not None and self.exponent < 0):
            raise InvalidParameter("alpha", self.exponent, "negative power utility needs alpha < 0")
        if self.kind == POSITIVE_POWER and not (
            self.exponent is not None and 0 < self.exponent < 1
        ):
            raise InvalidParameter("alpha", self.exponent, "positive power needs 0 < alpha < 1")
        if self.kind == REGIME_SQRT:
            if self.beta is None or len(self.beta) != 2 or min(self.beta) <= 0:
                raise InvalidParameter("beta", self.beta, "needs two positive weights")
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @classmethod
    def log(cls) -> "UtilitySpec":
        return cls(LOG)

    @classmethod
    def negative_power(cls, alpha: float) -> "UtilitySpec":
        return cls(NEGATIVE_POWER, float(alpha))

    @classmethod
    def positive_power(cls, alpha: float) -> "UtilitySpec":
        return cls(POSITIVE_POWER, float(alpha))

    @classmethod
    def power(cls, alpha: float) -> "UtilitySpec":
        """Negative or positive power utility depending on the sign of ``alpha``."""
        return cls.negative_power(alpha) if alpha < 0 else cls.positive_power(alpha)

    @classmethod
    def regime_sqrt(cls, beta_1: float, beta_2: float) -> "UtilitySpec":
        return cls(REGIME_SQRT, beta=(beta_1, beta_2))

    @property
    def alpha(self) -> float:
        if self.kind == LOG:
            return 0.0
        if self.kind == REGIME_SQRT:
            return 0.5
        return self.exponent

    @property
    def is_log(self) -> bool:
        return self.kind == LOG

    def weight(self, regime: int) -> float:
        return self.beta[regime] if self.kind == REGIME_SQRT else 1.0

    def evaluate(self, c: ArrayLike, regime: int = 0):
        c = np.asarray(c, dtype=float)
        if self.kind == LOG:
            return np.log(c)
        if self.kind == NEGATIVE_POWER:
            return -(c**self.exponent)
        if self.kind == POSITIVE_POWER:
            return c**self.exponent
        return self.beta[regime] * np.sqrt(c)

    def marginal(self, c: ArrayLike, regime: int = 0):
        c = np.asarray(c, dtype=float)
        if self.kind == LOG:
            return 1.0 / c
        if self.kind == NEGATIVE_POWER:
            return -self.exponent * c ** (self.exponent - 1)
        if self.kind == POSITIVE_POWER:
            return self.exponent * c ** (self.exponent - 1)
        return self.beta[regime] / (2.0 * np.sqrt(c))

    def inverse_marginal(self, y: ArrayLike, regime: int = 0):
        """``(U')^{-1}``: the consumption rate at which marginal utility equals ``y``."""
        y = np.asarray(y, dtype=float)
        if self.kind == LOG:
            return 1.0 / y
        if self.kind == REGIME_SQRT:
            return (self.beta[regime] / (2.0 * y)) ** 2
        return (y / abs(self.exponent)) ** (1.0 / (self.exponent - 1))

    def describe(self) -> str:
        if self.kind == REGIME_SQRT:
            return f"{self.kind}(beta={self.beta[0]:g},{self.beta[1]:g})"
        if self.kind == LOG:
            return LOG
        return f"{self.kind}(alpha={self.exponent:g})"


@dataclass(frozen=True)
class MarketModel:
    """Regime-switching market: chain, per-regime coefficients, discount rate, loss law."""

    generator: GeneratorMatrix
    regimes: Tuple[RegimeParams, ...]
    delta: float
    loss: LossModel

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if len(self.regimes) != self.generator.size:
            raise InvalidParameter(
                "regimes",
                len(self.regimes),
                f"the generator has {self.generator.size} regimes",
            )
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise InvalidParameter("delta", self.delta, "must be a positive finite number")
        for index, params in enumerate(self.regimes):
            # the post-loss multiplier 1 - eta*l must stay nonnegative
            if params.eta * self.loss.ess_sup > 1:
                raise InvalidParameter(
                    f"regimes[{index}].eta",
                    params.eta,
                    f"eta * ess_sup(l) = {params.eta * self.loss.ess_sup:.10g} exceeds 1",
                )

    @property
    def size(self) -> int:
        return self.generator.size

    @property
    def Q(self) -> NDArray[np.float64]:
        return self.generator.rates

    def _column(self, name: str) -> NDArray[np.float64]:
        return np.array([getattr(params, name) for params in self.regimes], dtype=float)

    @property
    def r(self):
        return self._column("r")

    @property
    def mu(self):
        return self._column("mu")

    @property
    def sigma(self):
        return self._column("sigma")

    @property
    def lam(self):
        return self._column("lam")

    @property
    def theta(self):
        return self._column("theta")

    @property
    def eta(self):
        return self._column("eta")

    @property
    def gammas(self) -> NDArray[np.float64]:
        return np.array([params.gamma for params in self.regimes])

    def gamma(self, regime: int) -> float:
        return self.regimes[regime].gamma

    def with_delta(self, delta: float) -> "MarketModel":
        return replace(self, delta=float(delta))

    def with_loss(self, loss: LossModel) -> "MarketModel":
        return replace(self, loss=loss)

    def with_insured(self, insured: Sequence[bool]) -> "MarketModel":
        if len(insured) != self.size:
            raise InvalidParameter("insured", insured, f"expected {self.size} flags")
        regimes = tuple(
            replace(params, insured=bool(flag)) for params, flag in zip(self.regimes, insured)
        )
        return replace(self, regimes=regimes)

    def with_regime(self, regime: int, **changes) -> "MarketModel":
        regimes = list(self.regimes)
        regimes[regime] = replace(regimes[regime], **changes)
        return replace(self, regimes=tuple(regimes))


def gamma(model: MarketModel, regime: int) -> float:
    """Market price of risk term ``(mu - r)^2 / (2 sigma^2)`` in ``regime``."""
    return model.gamma(regime)


@dataclass(frozen=True)
class ValidatedModel:
    """A model that passed the technical condition for ``utility``.

    ``expectations`` holds the loss terms the coefficient system needs:
    the insured term (Λ) per regime, or the uninsured one (Υ) when
    ``constrained`` is set or the regime has no insurance market.
    """

    model: MarketModel
    utility: UtilitySpec
    constrained: bool
    expectations: Tuple[float, ...]


def condition_bounds(
    model: MarketModel, utility: UtilitySpec, expectations: Sequence[float]
) -> NDArray[np.float64]:
    """Per-regime lower bounds that ``delta`` has to exceed (``-inf`` for log)."""
    if utility.is_log:
        return np.full(model.size, -np.inf)

    alpha = utility.alpha
    base = alpha * model.r + alpha * model.gammas / (1.0 - alpha)
    jumps = model.lam * (1.0 - np.asarray(expectations, dtype=float))
    if utility.kind == NEGATIVE_POWER:
        return base - jumps
    if utility.kind == POSITIVE_POWER:
        return base
    return np.maximum(base, base - jumps)


def validate_technical_condition(
    model: MarketModel, utility: UtilitySpec, constrained: bool = False
) -> ValidatedModel:
    """Evaluate the loss terms and check the discount rate dominates the growth bounds.

    The insurance kernel runs first because the negative-power and
    square-root conditions involve the loss terms.
    """
    from . import logger
    from .insurance import expectation_terms

    if utility.kind == REGIME_SQRT and model.size != 2:
        raise InvalidParameter("utility.kind", utility.kind, "square-root needs two regimes")

    expectations = expectation_terms(model, utility, constrained=constrained)
    bounds = condition_bounds(model, utility, expectations)
    for regime, bound in enumerate(bounds):
        if not model.delta > bound:
            raise ConditionViolated(regime, model.delta, float(bound))

    logger.debug(
        "[regime-insurance] %s validated (constrained=%s, slack %.6g)",
        utility.describe(),
        constrained,
        model.delta - float(np.max(bounds)),
    )
    return ValidatedModel(model, utility, constrained, tuple(float(e) for e in expectations))


# Published calibrations

_PARAMETER_SETS = {
    "I": dict(
        mu=(0.2, 0.15),
        r=(0.08, 0.03),
        sigma=(0.25, 0.6),
        theta=(0.15, 0.25),
        eta=(0.8, 1.0),
        lam=(0.1, 0.2),
        pi=(6.04, 6.4),
        delta=0.15,
    ),
    "II": dict(
        mu=(0.2, 0.15),
        r=(0.15, 0.1),
        sigma=(0.4, 0.6),
        theta=(0.15, 0.25),
        eta=(0.8, 1.0),
        lam=(0.1, 0.2),
        pi=(6.04, 6.4),
        delta=0.2,
    ),
}

DEFAULT_LOSS = LossModel.constant(0.3)


def parameter_set(
    name: str,
    *,
    delta: Optional[float] = None,
    loss: Optional[LossModel] = None,
    insured: Optional[Sequence[bool]] = None,
) -> MarketModel:
    """Build Parameter Set ``"I"`` or ``"II"``.

    Args:
        name: ``"I"`` or ``"II"``.
        delta: overrides the published discount rate.
        loss: loss law, a constant fraction of 0.3 unless given.
        insured: per-regime insurance market access, open everywhere by default.
    """
    try:
        values = _PARAMETER_SETS[name]
    except KeyError:
        raise UnknownParameterSet(name) from None

    regimes = tuple(
        RegimeParams(
            r=values["r"][i],
            mu=values["mu"][i],
            sigma=values["sigma"][i],
            lam=values["lam"][i],
            theta=values["theta"][i],
            eta=values["eta"][i],
            insured=True if insured is None else bool(insured[i]),
        )
        for i in range(2)
    )
    return MarketModel(
        generator=GeneratorMatrix.two_regime(*values["pi"]),
        regimes=regimes,
        delta=values["delta"] if delta is None else float(delta),
        loss=DEFAULT_LOSS if loss is None else loss,
    )
