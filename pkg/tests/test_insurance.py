import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from regime_insurance.errors import DivergentExpectation, InvalidParameter
from regime_insurance.insurance import (
    brute_force_indemnity,
    buy_insurance,
    deductible_fraction,
    expected_indemnity,
    lambda_term,
    lambda_term_quadrature,
    optimal_indemnity,
    power_retention_moment,
    premium_fractions,
    quadrature_oracle,
    upsilon_term,
)
from regime_insurance.market import LossModel, UtilitySpec, parameter_set

LOG = UtilitySpec.log()
UTILITIES = [LOG, UtilitySpec.power(-1.5), UtilitySpec.power(-0.5), UtilitySpec.power(0.3)]


def test_deductible_fraction():
    assert deductible_fraction(0.15, LOG) == pytest.approx(0.130435, abs=1e-6)
    assert deductible_fraction(0.25, UtilitySpec.power(-1)) == pytest.approx(0.105573, abs=1e-6)
    for utility in UTILITIES:
        assert deductible_fraction(1e-12, utility) == pytest.approx(0.0, abs=1e-11)


def test_sqrt_deductible_is_power_at_one_half():
    for theta in (0.05, 0.15, 0.25, 0.9):
        assert deductible_fraction(theta, UtilitySpec.regime_sqrt(1, 2)) == deductible_fraction(
            theta, UtilitySpec.positive_power(0.5)
        )


def test_deductible_needs_positive_loading():
    with pytest.raises(InvalidParameter):
        deductible_fraction(0.0, LOG)


def test_optimal_indemnity(set1):
    assert optimal_indemnity(1.0, 0, 0.3, LOG, set1) == pytest.approx(0.109565, abs=1e-6)
    assert optimal_indemnity(1.0, 0, 0.15, LOG, set1) == 0.0
    assert optimal_indemnity(2.0, 0, 0.3, LOG, set1) == pytest.approx(
        2 * optimal_indemnity(1.0, 0, 0.3, LOG, set1)
    )


def test_uninsured_regime_pays_nothing(set1):
    model = set1.with_insured((True, False))
    assert optimal_indemnity(1.0, 1, 0.9, LOG, model) == 0.0
    assert not buy_insurance(1, 0.9, LOG, model)


@pytest.mark.parametrize("utility", UTILITIES)
def test_indemnity_shape(set1, utility):
    losses = np.linspace(0.0, 0.99, 200)
    for regime in range(2):
        payout = optimal_indemnity(1.0, regime, losses, utility, set1)
        retained_loss = set1.regimes[regime].eta * losses
        assert payout[0] == 0.0
        assert np.all(payout >= 0)
        assert np.all(payout <= retained_loss)
        assert np.all(np.diff(payout) >= 0)


def test_buy_insurance(set1):
    assert buy_insurance(0, 0.2, LOG, set1)
    assert not buy_insurance(1, 0.19, LOG, set1)
    assert not buy_insurance(0, 1e-9, LOG, set1)


def test_lambda_log_uniform_active():
    model = parameter_set("I", loss=LossModel.uniform())
    assert lambda_term(1, LOG, model) == pytest.approx(-0.6, abs=1e-12)


def test_lambda_inactive_branch_equals_uninsured_term():
    model = parameter_set("I", loss=LossModel.constant(0.1)).with_regime(0, theta=0.5)
    utility = UtilitySpec.power(-1)
    assert lambda_term(0, utility, model) == pytest.approx(1 / 0.92, abs=1e-12)
    assert upsilon_term(0, utility, model) == pytest.approx(1.086957, abs=1e-6)


def test_prohibitive_loading_switches_insurance_off():
    model = parameter_set("I").with_regime(0, theta=1e6)
    for utility in UTILITIES:
        assert lambda_term(0, utility, model) == pytest.approx(upsilon_term(0, utility, model))


def test_upsilon_uniform():
    model = parameter_set("I", loss=LossModel.uniform())
    assert upsilon_term(1, LOG, model) == pytest.approx(-1.0, abs=1e-12)
    assert upsilon_term(0, UtilitySpec.power(-1), model) == pytest.approx(
        -np.log(0.2) / 0.8, abs=1e-12
    )


def test_upsilon_vanishing_loss():
    model = parameter_set("I", loss=LossModel.constant(1e-12))
    assert upsilon_term(0, LOG, model) == pytest.approx(0.0, abs=1e-10)
    assert upsilon_term(0, UtilitySpec.power(-1), model) == pytest.approx(1.0, abs=1e-10)


def test_divergent_uninsured_moment():
    with pytest.raises(DivergentExpectation):
        power_retention_moment(1.0, 1.0, -1.0, LossModel.uniform())


def test_quadrature_oracle_examples():
    uniform = LossModel.uniform()
    closed = (1 - 1 / 0.8) * np.log(0.2) - 1
    assert quadrature_oracle(lambda l: np.log(1 - 0.8 * l), uniform) == pytest.approx(
        closed, abs=1e-8
    )
    assert quadrature_oracle(lambda l: l**2, LossModel.constant(0.3)) == 0.3**2
    nu = 0.105573
    payout = quadrature_oracle(lambda l: max(l - nu, 0.0), uniform, breakpoints=[nu])
    assert payout == pytest.approx((1 - nu) ** 2 / 2, abs=1e-8)
    assert payout == pytest.approx(expected_indemnity(1.0, nu, uniform), abs=1e-10)


SWEEP = list(
    itertools.product(
        (0.05, 0.25, 0.9),
        (0.5, 0.8, 1.0),
        (
            LOG,
            UtilitySpec.power(-2.0),
            UtilitySpec.power(-1.5),
            UtilitySpec.power(-1),
            UtilitySpec.power(-0.5),
            UtilitySpec.power(0.3),
        ),
    )
)


@pytest.mark.parametrize("theta,eta,utility", SWEEP)
def test_closed_forms_match_quadrature(theta, eta, utility):
    model = parameter_set("I", loss=LossModel.uniform()).with_regime(0, theta=theta, eta=eta)
    assert lambda_term(0, utility, model) == pytest.approx(
        lambda_term_quadrature(0, utility, model), abs=1e-8
    )
    if eta == 1 and not utility.is_log and utility.alpha <= -1:
        # (1 - l)^alpha is not integrable on (0, 1)
        with pytest.raises(DivergentExpectation):
            upsilon_term(0, utility, model)
        return
    assert upsilon_term(0, utility, model) == pytest.approx(
        lambda_term_quadrature(0, utility, model, constrained=True), abs=1e-8
    )


@pytest.mark.parametrize(
    "utility", [LOG, UtilitySpec.power(-1), UtilitySpec.power(-0.5), UtilitySpec.power(0.5)]
)
@pytest.mark.parametrize(
    "loss", [LossModel.uniform(), LossModel.constant(0.1), LossModel.constant(0.6)]
)
def test_insurance_never_hurts(utility, loss):
    sign = 1.0 if utility.is_log else np.sign(utility.alpha)
    for theta, eta in itertools.product((0.05, 0.15, 0.5, 2.0), (0.4, 0.8)):
        model = parameter_set("I", loss=loss).with_regime(0, theta=theta, eta=eta)
        gap = lambda_term(0, utility, model) - upsilon_term(0, utility, model)
        nu = deductible_fraction(theta, utility)
        if eta * loss.ess_sup > nu:
            assert sign * gap > 0
        else:
            assert gap == pytest.approx(0.0, abs=1e-15)


def test_loss_term_gaps_at_large_loss():
    model = parameter_set("I", loss=LossModel.constant(0.6))

    def gap(utility):
        return lambda_term(0, utility, model) - upsilon_term(0, utility, model)

    assert gap(LOG) > 0.1
    assert gap(UtilitySpec.power(0.5)) > 0
    assert gap(UtilitySpec.power(-1)) < -0.3
    # no payout below the deductible
    below = model.with_loss(LossModel.constant(0.1))
    assert lambda_term(0, LOG, below) == upsilon_term(0, LOG, below)


def test_premium_fractions(set1):
    model = set1.with_loss(LossModel.uniform())
    fractions = premium_fractions(model, UtilitySpec.power(-1))
    assert fractions[1] == pytest.approx(0.1, abs=1e-6)
    assert_allclose(premium_fractions(model, LOG, constrained=True), [0.0, 0.0])


def _grid_payout(theta, alpha, l, x=1.0):
    grid = np.linspace(x - l - 0.05, x, int(round((l + 0.05) / 1e-4)) + 1)
    marginal = 1.0 / grid if alpha == 0 else grid ** (alpha - 1.0)
    return brute_force_indemnity(grid, marginal, x, l, theta)


def test_brute_force_recovers_deductible():
    nu = deductible_fraction(0.15, LOG)
    assert _grid_payout(0.15, 0.0, 0.4) == pytest.approx(0.4 - nu, abs=2e-4)
    assert _grid_payout(0.15, 0.0, 0.1) == 0.0
    assert _grid_payout(0.0, 0.0, 0.4) == pytest.approx(0.4, abs=2e-4)


def test_brute_force_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        theta = rng.uniform(0.05, 0.5)
        alpha = rng.uniform(-2.0, 0.8)
        l = rng.uniform(0.3, 0.9)
        utility = UtilitySpec.power(alpha)
        expected = max(l - deductible_fraction(theta, utility), 0.0)
        assert _grid_payout(theta, alpha, l) == pytest.approx(expected, abs=2e-4)


def test_brute_force_needs_covering_grid():
    grid = np.linspace(0.8, 1.0, 11)
    with pytest.raises(InvalidParameter):
        brute_force_indemnity(grid, 1 / grid, 1.0, 0.5, 0.1)
