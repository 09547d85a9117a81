"""Economic analysis built on the solvers: value gaps, ratios and figure data.

Every public function returns plain records or :class:`pandas.DataFrame`
grids; :func:`write_csv` fixes the on-disk format.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import brentq

from .errors import (
    ConstraintViolated,
    DegenerateDenominator,
    InactiveInsurance,
    InvalidParameter,
    RegimeOrderingViolated,
)
from .insurance import (
    deductible_fraction,
    expected_indemnity,
    log_retention_moment,
    power_retention_moment,
)
from .market import LossModel, MarketModel, UtilitySpec, parameter_set
from .policy import ValueFunction, consumption_ratio
from .solvers import solve

# Insurance is open in the first regime only for the published table and ratio curves.
PUBLISHED_INSURED = (True, False)

TABLE1_CELLS = (
    (-0.01, (0.30, 0.60, 0.90)),
    (-0.5, (0.15, 0.35, 0.50)),
    (-1.0, (0.20, 0.30, 0.40)),
    (-2.0, (0.08, 0.10, 0.12)),
)
TABLE1_DELTA = 0.25
FIGURE3_DELTA = 0.2
# Both increase ratios peak near l = 0.94 and fall towards total loss.
FIGURE3_LOSSES = np.linspace(0.17, 0.93, 77)
LOSS_LEVELS = (0.3, 0.5, 0.7)
THETA_VALUES = (0.01, 0.1, 0.2, 0.5, 0.8, 0.99)
L_MIN_OFFSET = 0.01


@dataclass(frozen=True)
class ValueGapReport:
    """``v - v1`` per regime at wealth ``x``.

    ``discrepancy`` is the gap between the log closed form and the direct
    difference of solved coefficients (zero for power utilities).
    """

    gaps: Tuple[float, ...]
    x: float
    utility: str
    loss: str
    delta: float
    insured: Tuple[bool, ...]
    discrepancy: float = 0.0


@dataclass(frozen=True)
class TableRow:
    alpha: float
    l: float
    gap_regime1: float
    gap_regime2: float


def _resolve(param_set: Union[str, MarketModel], delta: Optional[float] = None) -> MarketModel:
    model = parameter_set(param_set) if isinstance(param_set, str) else param_set
    return model if delta is None else model.with_delta(delta)


def _log_gap_closed_form(model: MarketModel, term_gap: np.ndarray) -> np.ndarray:
    delta = model.delta
    if model.size != 2:
        system = delta * np.eye(model.size) - model.Q
        return scipy.linalg.solve(system, model.lam * term_gap / delta)
    pi_1, pi_2 = model.generator.exit_rate(0), model.generator.exit_rate(1)
    weighted = model.lam * term_gap
    denominator = delta**2 * (delta + pi_1 + pi_2)
    return np.array(
        [
            (pi_1 * weighted[1] + (delta + pi_2) * weighted[0]) / denominator,
            (pi_2 * weighted[0] + (delta + pi_1) * weighted[1]) / denominator,
        ]
    )


def value_gap(model: MarketModel, utility: UtilitySpec, x: float = 1.0) -> ValueGapReport:
    """Value of insurance access, ``v(x, i) - v1(x, i)``, in every regime."""
    from . import logger

    if not x > 0:
        raise InvalidParameter("x", x, "wealth must be positive")
    free = solve(model, utility)
    constrained = solve(model, utility, constrained=True)
    direct = np.array(
        [
            float(ValueFunction(model, free).value(x, i))
            - float(ValueFunction(model, constrained).value(x, i))
            for i in range(model.size)
        ]
    )

    discrepancy = 0.0
    if utility.is_log:
        term_gap = np.asarray(free.expectations) - np.asarray(constrained.expectations)
        closed = _log_gap_closed_form(model, term_gap)
        discrepancy = float(np.max(np.abs(closed - direct)))
        if discrepancy > 1e-12 * max(1.0, float(np.max(np.abs(direct)))):
            logger.warning(
                "[regime-insurance] log value gap closed form differs by %.3g", discrepancy
            )

    return ValueGapReport(
        gaps=tuple(float(g) for g in direct),
        x=float(x),
        utility=utility.describe(),
        loss=model.loss.describe(),
        delta=model.delta,
        insured=tuple(p.insured for p in model.regimes),
        discrepancy=discrepancy,
    )


def increase_ratio(model: MarketModel, utility: Optional[UtilitySpec] = None) -> np.ndarray:
    """Relative value improvement ``|V - V1| / |V1|`` at ``x = 1/delta`` (log utility).

    At that wealth the log term vanishes and both values reduce to their
    coefficients.
    """
    utility = utility or UtilitySpec.log()
    if not utility.is_log:
        raise InvalidParameter("utility", utility.kind, "the increase ratio needs log utility")
    free = solve(model, utility).as_array()
    constrained = solve(model, utility, constrained=True).as_array()
    for regime, value in enumerate(constrained):
        if value == 0:
            raise DegenerateDenominator(regime)
    return np.abs(free - constrained) / np.abs(constrained)


def increase_ratio_curve(model: MarketModel, l_grid: Sequence[float]) -> pd.DataFrame:
    """Increase ratios over constant loss fractions."""
    rows = []
    for l in l_grid:
        ratios = increase_ratio(model.with_loss(LossModel.constant(l)))
        rows.append((float(l), *ratios))
    columns = ["l"] + [f"m_{i + 1}" for i in range(model.size)]
    return pd.DataFrame(rows, columns=columns)


def consumption_curves(
    param_set: Union[str, MarketModel],
    alpha_grid: Sequence[float],
    l_values: Sequence[float] = LOSS_LEVELS,
    delta: Optional[float] = None,
) -> pd.DataFrame:
    """Consumption-to-wealth ratios ``1/A_i`` over power exponents and constant losses."""
    base = _resolve(param_set, delta)
    rows = []
    for l in l_values:
        model = base.with_loss(LossModel.constant(l))
        for alpha in alpha_grid:
            coeffs = solve(model, UtilitySpec.power(float(alpha)))
            kappas = [consumption_ratio(coeffs, i) for i in range(model.size)]
            rows.append((float(alpha), float(l), *kappas))
    columns = ["alpha", "l"] + [f"kappa_{i + 1}" for i in range(base.size)]
    return pd.DataFrame(rows, columns=columns)


# Sensitivity of the indemnity to the loading and to risk aversion


def alpha_inflection(theta: float) -> float:
    """Exponent where the second ``alpha``-derivative of the indemnity changes sign.

    Found numerically; it coincides with ``1 - ln(1+theta)/2``.
    """
    log_loading = np.log1p(theta)

    def curvature(alpha):
        return indemnity_derivatives(theta, alpha, 1.0, 1.0)["d2_alpha"]

    return float(brentq(curvature, 1.0 - log_loading, 1.0 - log_loading / 4.0, xtol=1e-14))


def indemnity_derivatives(theta: float, alpha: float, eta: float, l: float):
    """``I*`` at ``x = 1`` and its first two derivatives in ``theta`` and ``alpha``."""
    u = 1.0 / (1.0 - alpha)
    log_loading = np.log1p(theta)
    nu = -np.expm1(-u * log_loading)
    decay = np.exp(-u * log_loading)
    return {
        "I_star": max(eta * l - nu, 0.0),
        "d_theta": -u * (1.0 + theta) ** (-u - 1.0),
        "d2_theta": (2.0 - alpha) * u**2 * (1.0 + theta) ** (-(3.0 - 2.0 * alpha) * u),
        "d_alpha": -log_loading * u**2 * decay,
        "d2_alpha": -log_loading * u**3 * decay * (2.0 - log_loading * u),
    }


def insurance_sensitivity(
    theta_grid: Sequence[float],
    alpha_grid: Sequence[float],
    model: Optional[MarketModel] = None,
    regime: int = 0,
    strict: bool = False,
) -> pd.DataFrame:
    """Indemnity derivatives over a ``(theta, alpha)`` grid at unit wealth.

    The loss intensity and the constant loss fraction come from ``regime`` of
    ``model`` (Parameter Set I by default). Grid points where insurance is
    not bought are kept with ``active`` false, or raise when ``strict``.
    """
    model = model or parameter_set("I")
    if model.loss.kind != "constant":
        raise InvalidParameter("loss", model.loss.kind, "sensitivities need a constant loss")
    eta, l = model.regimes[regime].eta, model.loss.l

    rows = []
    for theta in theta_grid:
        tilde = 1.0 - np.log1p(theta) / 2.0
        root = alpha_inflection(theta)
        for alpha in alpha_grid:
            utility = UtilitySpec.log() if alpha == 0 else UtilitySpec.power(float(alpha))
            active = eta * l > deductible_fraction(theta, utility)
            if strict and not active:
                raise InactiveInsurance(theta, alpha)
            values = indemnity_derivatives(theta, alpha, eta, l)
            rows.append(
                {
                    "theta": float(theta),
                    "alpha": float(alpha),
                    **values,
                    "alpha_tilde": tilde,
                    "alpha_root": root,
                    "active": bool(active),
                }
            )
    return pd.DataFrame(rows)


# Published table


def reproduce_table1(insured: Sequence[bool] = PUBLISHED_INSURED) -> list:
    """Value gaps at ``x = 1`` for the twelve ``(alpha, l)`` cells of the published table."""
    rows = []
    for alpha, losses in TABLE1_CELLS:
        for l in losses:
            model = parameter_set(
                "I", delta=TABLE1_DELTA, loss=LossModel.constant(l), insured=insured
            )
            report = value_gap(model, UtilitySpec.negative_power(alpha), x=1.0)
            rows.append(TableRow(alpha, l, *report.gaps))
    return rows


def table_frame(rows: Sequence[TableRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(row.alpha, row.l, row.gap_regime1, row.gap_regime2) for row in rows],
        columns=["alpha", "l", "gap_1", "gap_2"],
    )


# Loss-term gap


def loss_term_gap(theta: float, eta: float, utility: UtilitySpec, loss: LossModel) -> float:
    """Insured minus uninsured loss term for a single regime."""
    nu = deductible_fraction(theta, utility)
    if utility.is_log:
        insured = log_retention_moment(eta, nu, loss)
        uninsured = log_retention_moment(eta, 1.0, loss)
        weight = 1.0
    else:
        insured = power_retention_moment(eta, nu, utility.alpha, loss)
        uninsured = power_retention_moment(eta, 1.0, utility.alpha, loss)
        weight = utility.alpha
    return insured - weight * (1.0 + theta) * expected_indemnity(eta, nu, loss) - uninsured


def lambda_upsilon_curve(
    theta_values: Sequence[float] = THETA_VALUES,
    eta_grid: Optional[Sequence[float]] = None,
    utility: Optional[UtilitySpec] = None,
    loss: Optional[LossModel] = None,
) -> pd.DataFrame:
    """``Lambda - Upsilon`` over loss intensities ``eta`` above ``theta/(1+theta)``.

    Without ``eta_grid`` each loading gets 50 points in ``(theta/(1+theta), 1]``.
    """
    utility = utility or UtilitySpec.log()
    loss = loss or LossModel.uniform()
    rows = []
    for theta in theta_values:
        floor = theta / (1.0 + theta)
        grid = np.linspace(floor, 1.0, 51)[1:] if eta_grid is None else eta_grid
        for eta in grid:
            if eta < floor:
                raise ConstraintViolated(theta, eta, floor)
            rows.append((float(theta), float(eta), loss_term_gap(theta, eta, utility, loss)))
    return pd.DataFrame(rows, columns=["theta", "eta", "gap"])


# Power-utility value gaps


def _threshold_gap(model: MarketModel, alpha: float) -> float:
    utility = UtilitySpec.positive_power(alpha)
    first, second = model.regimes[0], model.regimes[1]
    return (
        deductible_fraction(first.theta, utility) / first.eta
        - deductible_fraction(second.theta, utility) / second.eta
    )


def regime_ordering_boundary(model: MarketModel) -> float:
    """Largest exponent in ``(0, 1)`` with ``nu_1/eta_1 <= nu_2/eta_2``."""
    return float(brentq(lambda a: _threshold_gap(model, a), 1e-6, 1.0 - 1e-9, xtol=1e-14))


def power_gap_curves(
    param_set: Union[str, MarketModel] = "II",
    alpha_grid: Optional[Sequence[float]] = None,
    l_choices: Sequence[str] = ("l_M", "l_m"),
) -> pd.DataFrame:
    """Positive-power value gaps at ``x = 1`` for loss fractions tied to the thresholds.

    ``l_M`` is the midpoint of the two activation thresholds ``nu_i/eta_i`` and
    ``l_m`` sits just below the second one, so only the first regime buys
    insurance.
    """
    model = _resolve(param_set)
    alpha_grid = np.linspace(0.05, 0.8, 16) if alpha_grid is None else alpha_grid
    boundary = regime_ordering_boundary(model)

    rows = []
    for alpha in alpha_grid:
        alpha = float(alpha)
        if not 0 < alpha <= boundary:
            raise RegimeOrderingViolated(alpha, boundary)
        utility = UtilitySpec.positive_power(alpha)
        thresholds = [
            deductible_fraction(p.theta, utility) / p.eta for p in model.regimes[:2]
        ]
        for choice in l_choices:
            if choice == "l_M":
                l = 0.5 * (thresholds[0] + thresholds[1])
            elif choice == "l_m":
                l = thresholds[1] - L_MIN_OFFSET
            else:
                raise InvalidParameter("l_choices", choice, "expected 'l_M' or 'l_m'")
            report = value_gap(model.with_loss(LossModel.constant(l)), utility, x=1.0)
            rows.append((alpha, choice, l, *report.gaps))
    return pd.DataFrame(rows, columns=["alpha", "choice", "l", "gap_1", "gap_2"])


# Output


def write_csv(frame: pd.DataFrame, path) -> Path:
    """Header row, comma separated, ten significant digits, ``\\n`` line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, float_format="%.10g", index=False, lineterminator="\n")
    return path


def figure_frames(insured: Sequence[bool] = PUBLISHED_INSURED):
    """Data behind the five published figures, keyed by file stem."""
    figure3 = parameter_set("I", delta=FIGURE3_DELTA, insured=insured)
    return {
        "figure1_consumption": consumption_curves("I", np.linspace(-0.98, -0.02, 49)),
        "figure2_consumption": consumption_curves("II", np.linspace(0.02, 0.88, 44)),
        "figure3_increase_ratio": increase_ratio_curve(figure3, FIGURE3_LOSSES),
        "figure4_lambda_upsilon": lambda_upsilon_curve(),
        "figure5_power_gap": power_gap_curves("II"),
    }


_KAPPAS = ("kappa_1", "kappa_2")
_PLOTS = (
    ("Consumption ratio, negative exponents", "figure1_consumption", "alpha", _KAPPAS),
    ("Consumption ratio, positive exponents", "figure2_consumption", "alpha", _KAPPAS),
    ("Increase ratio", "figure3_increase_ratio", "l", ("m_1", "m_2")),
    ("Loss term gap", "figure4_lambda_upsilon", "eta", ("gap",)),
    ("Power value gap", "figure5_power_gap", "alpha", ("gap_1", "gap_2")),
)


def reproduce_figures(outdir, notebook: bool = True):
    """Write the figure CSVs (and a plotting notebook) to ``outdir``."""
    from . import logger
    from .utils import figures_notebook, write_notebook_output

    outdir = Path(outdir)
    written = []
    for stem, frame in figure_frames().items():
        written.append(write_csv(frame, outdir / f"{stem}.csv"))
        logger.info("[regime-insurance] wrote %s (%d rows)", written[-1], len(frame))

    if notebook:
        tables = [(title, f"{stem}.csv", x, ys) for title, stem, x, ys in _PLOTS]
        written.extend(write_notebook_output(figures_notebook(tables), outdir, "figures"))
    return written
