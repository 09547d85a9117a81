from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from regime_insurance.chain import GeneratorMatrix, validate_generator
from regime_insurance.errors import ConditionViolated, NoConvergence
from regime_insurance.insurance import expectation_terms
from regime_insurance.market import (
    LossModel,
    MarketModel,
    RegimeParams,
    UtilitySpec,
    parameter_set,
)
from regime_insurance.policy import ValueFunction
from regime_insurance.solvers import (
    hjb_residual,
    log_two_regime_closed_form,
    power_residual,
    solve,
    solve_log,
    solve_power,
    sqrt_constants,
)

REGIME = RegimeParams(r=0.08, mu=0.2, sigma=0.25, lam=0.1, theta=0.15, eta=0.8)


def single_regime(delta=0.15, regime=REGIME):
    return MarketModel(validate_generator([[0]]), (regime,), delta, LossModel.constant(0.3))


def symmetric_set2():
    regime = parameter_set("II").regimes[0]
    return MarketModel(
        GeneratorMatrix.two_regime(6.0, 6.0), (regime, regime), 0.2, LossModel.constant(0.3)
    )


CASES = [
    ("I", UtilitySpec.log()),
    ("I", UtilitySpec.power(-1)),
    ("I", UtilitySpec.power(-0.5)),
    ("II", UtilitySpec.power(0.5)),
    ("II", UtilitySpec.regime_sqrt(1.0, 1.5)),
]


def test_log_single_regime():
    model = single_regime()
    (term,) = expectation_terms(model, UtilitySpec.log())
    coeffs = solve(model, UtilitySpec.log())
    expected = (REGIME.r + REGIME.gamma - 0.15 + REGIME.lam * term) / 0.15**2
    assert coeffs.values[0] == pytest.approx(expected, rel=1e-12)


def test_log_two_regime_closed_form(set1):
    for constrained in (False, True):
        coeffs = solve(set1, UtilitySpec.log(), constrained=constrained)
        closed = log_two_regime_closed_form(set1, coeffs.expectations)
        assert_allclose(coeffs.as_array(), closed, rtol=0, atol=1e-12)
        assert coeffs.residual < 1e-12


def test_log_equal_terms_give_equal_coefficients(set1):
    terms = expectation_terms(set1, UtilitySpec.log(), constrained=True)
    free = solve_log(set1, terms)
    constrained = solve(set1, UtilitySpec.log(), constrained=True)
    assert_allclose(free.as_array(), constrained.as_array(), rtol=1e-15)


def test_log_coefficients_increase_with_loss_term(set1):
    terms = expectation_terms(set1, UtilitySpec.log())
    base = solve_log(set1, terms).as_array()
    for regime in range(2):
        bumped = terms.copy()
        bumped[regime] += 0.05
        assert np.all(solve_log(set1, bumped).as_array() >= base)


@pytest.mark.parametrize("alpha", [-1.0, -0.5, 0.5])
def test_power_single_regime(alpha):
    model = single_regime(delta=0.3)
    utility = UtilitySpec.power(alpha)
    (term,) = expectation_terms(model, utility)
    coeffs = solve(model, utility)
    constant = (
        0.3 - alpha * REGIME.r - alpha * REGIME.gamma / (1 - alpha) + REGIME.lam * (1 - term)
    )
    assert coeffs.values[0] == pytest.approx((1 - alpha) / constant, rel=1e-10)


def test_power_fixed_point_ignores_start(set1):
    terms = expectation_terms(set1, UtilitySpec.power(-1))
    reference = solve_power(set1, -1.0, terms).as_array()
    rng = np.random.default_rng(7)
    for start in rng.uniform(0.1, 50.0, size=(10, 2)):
        values = solve_power(set1, -1.0, terms, initial=start).as_array()
        assert_allclose(values, reference, rtol=0, atol=1e-9)


def test_power_residual_vanishes(set2):
    utility = UtilitySpec.power(0.5)
    coeffs = solve(set2, utility)
    scales = [coeffs.scale(i) for i in range(2)]
    assert np.max(np.abs(power_residual(set2, 0.5, coeffs.expectations, scales))) <= 1e-10


def test_power_iteration_cap(set1):
    terms = expectation_terms(set1, UtilitySpec.power(-1))
    with pytest.raises(NoConvergence) as excinfo:
        solve_power(set1, -1.0, terms, initial=[40.0, 0.2], max_iterations=1)
    assert excinfo.value.iterations == 1


def test_positive_power_small_alpha_limit(set2):
    coeffs = solve(set2, UtilitySpec.power(1e-4))
    assert_allclose(1 / coeffs.as_array(), [0.2, 0.2], atol=1e-3)


def test_negative_power_small_alpha_limit(set1):
    coeffs = solve(set1, UtilitySpec.power(-1e-4))
    assert_allclose(1 / coeffs.as_array(), [0.15, 0.15], atol=1e-3)


def test_sqrt_symmetric_closed_form():
    model = symmetric_set2()
    utility = UtilitySpec.regime_sqrt(1.0, 1.0)
    coeffs = solve(model, utility)
    xi, b = sqrt_constants(model, utility.beta, coeffs.expectations)
    expected = b[0] / (xi[0] - 1.0)
    assert_allclose(coeffs.as_array(), [expected, expected], rtol=1e-10)


def test_sqrt_solution_satisfies_system(set2):
    utility = UtilitySpec.regime_sqrt(1.0, 1.5)
    coeffs = solve(set2, utility)
    xi, b = sqrt_constants(set2, utility.beta, coeffs.expectations)
    a_1, a_2 = coeffs.values
    common = np.sqrt(a_1 * a_2)
    assert xi[0] * a_1 - b[0] == pytest.approx(common, abs=1e-10)
    assert xi[1] * a_2 - b[1] == pytest.approx(common, abs=1e-10)
    discriminant = (b[0] / xi[1] - b[1] / xi[1]) ** 2 + 4 * xi[0] * b[0] * b[1] / xi[1]
    assert discriminant > 0


def test_sqrt_consumption_ignores_common_weight_scale(set2):
    first = solve(set2, UtilitySpec.regime_sqrt(1.0, 1.5))
    second = solve(set2, UtilitySpec.regime_sqrt(3.0, 4.5))
    kappa_first = [b**2 / a for b, a in zip(first.utility.beta, first.values)]
    kappa_second = [b**2 / a for b, a in zip(second.utility.beta, second.values)]
    assert_allclose(kappa_first, kappa_second, rtol=1e-10)


def test_sqrt_condition_fails_for_set1(set1):
    with pytest.raises(ConditionViolated):
        solve(set1, UtilitySpec.regime_sqrt(1.0, 1.0))


@pytest.mark.parametrize("constrained", [False, True])
@pytest.mark.parametrize("param_set,utility", CASES)
def test_hjb_residual_at_unit_wealth(param_set, utility, constrained):
    model = parameter_set(param_set)
    coeffs = solve(model, utility, constrained=constrained)
    assert np.max(np.abs(hjb_residual(model, utility, coeffs, 1.0))) <= 1e-10


def test_hjb_residual_detects_wrong_coefficient(set1):
    utility = UtilitySpec.log()
    coeffs = solve(set1, utility)
    wrong = replace(coeffs, values=(coeffs.values[0] + 0.01, coeffs.values[1]))
    residual = hjb_residual(set1, utility, wrong, 1.0)
    assert abs(residual[0]) >= set1.delta * 0.01


@pytest.mark.parametrize("param_set,alpha", [("I", -1.0), ("II", 0.5)])
def test_hjb_residual_is_homogeneous(param_set, alpha):
    model = parameter_set(param_set)
    utility = UtilitySpec.power(alpha)
    coeffs = solve(model, utility)
    wrong = replace(coeffs, values=tuple(1.01 * v for v in coeffs.values))
    at_one = hjb_residual(model, utility, wrong, 1.0)
    at_seven = hjb_residual(model, utility, wrong, 7.0)
    assert np.all(np.abs(at_one) > 1e-6)
    assert_allclose(at_seven, 7.0**alpha * at_one, rtol=1e-8)


@pytest.mark.parametrize("param_set,utility", CASES)
def test_insurance_access_never_lowers_value(param_set, utility):
    model = parameter_set(param_set)
    free = ValueFunction(model, solve(model, utility))
    constrained = ValueFunction(model, solve(model, utility, constrained=True))
    for x in (0.5, 1.0, 4.0):
        for regime in range(2):
            assert free.value(x, regime) >= constrained.value(x, regime)
