import itertools

import numpy as np
import pandas as pd
import pytest

from regime_insurance.analysis import (
    FIGURE3_DELTA,
    FIGURE3_LOSSES,
    PUBLISHED_INSURED,
    alpha_inflection,
    consumption_curves,
    figure_frames,
    increase_ratio,
    increase_ratio_curve,
    indemnity_derivatives,
    insurance_sensitivity,
    lambda_upsilon_curve,
    loss_term_gap,
    power_gap_curves,
    regime_ordering_boundary,
    reproduce_figures,
    reproduce_table1,
    table_frame,
    value_gap,
    write_csv,
)
from regime_insurance.errors import (
    ConstraintViolated,
    InactiveInsurance,
    InvalidParameter,
    RegimeOrderingViolated,
)
from regime_insurance.insurance import activation_threshold
from regime_insurance.market import LossModel, UtilitySpec, parameter_set

PUBLISHED_CELLS = [
    (-0.01, 0.30, 7.7176e-5, 7.4304e-5),
    (-0.01, 0.60, 9.8981e-4, 9.5315e-4),
    (-0.01, 0.90, 0.0041, 0.0039),
    (-0.5, 0.15, 0.0015, 0.0015),
    (-0.5, 0.35, 0.0797, 0.0781),
    (-0.5, 0.50, 0.3010, 0.2961),
    (-1.0, 0.20, 0.1675, 0.1653),
    (-1.0, 0.30, 0.8116, 0.8036),
    (-1.0, 0.40, 2.6969, 2.6841),
    (-2.0, 0.08, 0.2454, 0.2441),
    (-2.0, 0.10, 0.9421, 0.9381),
    (-2.0, 0.12, 2.2418, 2.2344),
]


def published(value):
    # cells below 1e-3 are printed with five significant digits
    if value < 1e-3:
        return pytest.approx(value, rel=1e-3)
    return pytest.approx(value, abs=5e-4)


@pytest.fixture(scope="module")
def table():
    return {(row.alpha, row.l): row for row in reproduce_table1()}


@pytest.mark.parametrize("alpha,l,gap_1,gap_2", PUBLISHED_CELLS)
def test_published_table_cells(table, alpha, l, gap_1, gap_2):
    row = table[(alpha, l)]
    assert row.gap_regime1 == published(gap_1)
    assert row.gap_regime2 == published(gap_2)


def test_table_gaps_are_ordered(table):
    assert len(table) == 12
    for row in table.values():
        assert row.gap_regime1 > row.gap_regime2 > 0
    for alpha in (-0.01, -0.5, -1.0, -2.0):
        gaps = [row.gap_regime1 for (a, _), row in sorted(table.items()) if a == alpha]
        assert np.all(np.diff(gaps) > 0)


def test_table_frame(table):
    frame = table_frame(list(table.values()))
    assert list(frame.columns) == ["alpha", "l", "gap_1", "gap_2"]
    assert len(frame) == 12


def test_log_gap_matches_closed_form(set1, log_utility):
    report = value_gap(set1, log_utility, x=3.0)
    assert report.discrepancy < 1e-12
    assert all(g > 0 for g in report.gaps)
    assert report.insured == (True, True)
    # log gaps do not depend on wealth
    assert value_gap(set1, log_utility, x=0.5).gaps == pytest.approx(report.gaps, abs=1e-12)


@pytest.mark.parametrize(
    "param_set,delta,l",
    list(itertools.product(("I", "II"), (0.1, 0.2, 0.3), (0.05, 0.2, 0.4, 0.6, 0.9))),
)
def test_log_gap_closed_form_sweep(param_set, delta, l):
    model = parameter_set(param_set, delta=delta, loss=LossModel.constant(l))
    for insured in ((True, True), PUBLISHED_INSURED):
        report = value_gap(model.with_insured(insured), UtilitySpec.log())
        assert report.discrepancy < 1e-12
        assert min(report.gaps) >= 0


def test_value_gap_scales_with_wealth(table_model):
    model = table_model(0.3)
    utility = UtilitySpec.power(-1)
    at_one = value_gap(model, utility, x=1.0).gaps
    at_two = value_gap(model, utility, x=2.0).gaps
    assert at_two == pytest.approx(tuple(g / 2 for g in at_one), rel=1e-10)
    with pytest.raises(InvalidParameter):
        value_gap(model, utility, x=0.0)


@pytest.fixture()
def ratio_model():
    return parameter_set("I", delta=FIGURE3_DELTA, insured=PUBLISHED_INSURED)


def test_increase_ratio_falls_near_total_loss(ratio_model):
    def ratios(l):
        return increase_ratio(ratio_model.with_loss(LossModel.constant(l)))

    assert ratios(0.97)[0] < ratios(0.93)[0]
    assert ratios(0.99)[0] < ratios(0.97)[0]
    assert ratios(0.93)[0] > ratios(0.92)[0]


def test_increase_ratio_curve_is_increasing_and_ordered(ratio_model):
    frame = increase_ratio_curve(ratio_model, FIGURE3_LOSSES)
    assert list(frame.columns) == ["l", "m_1", "m_2"]
    assert frame["l"].iloc[-1] == pytest.approx(0.93)
    assert np.all(np.diff(frame["m_1"]) > 0)
    assert np.all(np.diff(frame["m_2"]) > 0)
    assert np.all(frame["m_1"] > frame["m_2"])


def test_ratio_and_gap_are_continuous_at_activation(ratio_model):
    params = ratio_model.regimes[0]
    threshold = activation_threshold(0, UtilitySpec.log(), ratio_model)
    assert threshold == pytest.approx(params.theta / (params.eta * (1 + params.theta)))
    below = ratio_model.with_loss(LossModel.constant(threshold - 1e-6))
    above = ratio_model.with_loss(LossModel.constant(threshold + 1e-6))
    assert increase_ratio(below).tolist() == [0.0, 0.0]
    assert np.all(increase_ratio(above) >= 0)
    assert np.max(np.abs(increase_ratio(above) - increase_ratio(below))) <= 1e-8
    gaps_below = value_gap(below, UtilitySpec.log()).gaps
    gaps_above = value_gap(above, UtilitySpec.log()).gaps
    assert np.max(np.abs(np.subtract(gaps_above, gaps_below))) <= 1e-8


def test_increase_ratio_needs_log(set1):
    with pytest.raises(InvalidParameter):
        increase_ratio(set1, UtilitySpec.power(-1))


def test_consumption_curves():
    frame = consumption_curves("I", [-1.0, -0.5], l_values=(0.3,), delta=0.15)
    assert list(frame.columns) == ["alpha", "l", "kappa_1", "kappa_2"]
    assert frame["kappa_1"].tolist() == pytest.approx([0.095673, 0.117902], abs=1e-6)
    assert frame["kappa_2"].tolist() == pytest.approx([0.095130, 0.117409], abs=1e-6)


def test_consumption_falls_with_loss_size():
    frame = consumption_curves("I", [-0.98, -0.5, -0.1, -0.02], l_values=(0.3, 0.5, 0.7))
    for _, group in frame.groupby("alpha"):
        ordered = group.sort_values("l")
        assert np.all(np.diff(ordered["kappa_1"]) <= 1e-12)
        assert np.all(np.diff(ordered["kappa_2"]) <= 1e-12)


@pytest.mark.parametrize("theta", [0.01, 0.25, 0.99])
def test_alpha_inflection(theta):
    assert alpha_inflection(theta) == pytest.approx(1 - np.log1p(theta) / 2, abs=1e-10)
    assert alpha_inflection(0.25) == pytest.approx(0.88843, abs=1e-5)


def test_indemnity_derivative_signs():
    for alpha in (-2.0, -1.0, -0.5, 0.0, 0.5):
        values = indemnity_derivatives(0.2, alpha, 0.8, 0.9)
        assert values["I_star"] > 0
        assert values["d_theta"] < 0
        assert values["d2_theta"] > 0
        assert values["d_alpha"] < 0


def test_indemnity_derivatives_match_finite_differences():
    h = 1e-6
    base = indemnity_derivatives(0.2, -0.5, 1.0, 0.9)
    up = indemnity_derivatives(0.2 + h, -0.5, 1.0, 0.9)["I_star"]
    down = indemnity_derivatives(0.2 - h, -0.5, 1.0, 0.9)["I_star"]
    assert (up - down) / (2 * h) == pytest.approx(base["d_theta"], rel=1e-6)
    up = indemnity_derivatives(0.2, -0.5 + h, 1.0, 0.9)["I_star"]
    down = indemnity_derivatives(0.2, -0.5 - h, 1.0, 0.9)["I_star"]
    assert (up - down) / (2 * h) == pytest.approx(base["d_alpha"], rel=1e-6)


@pytest.mark.parametrize("theta,alpha", [(0.2, -0.5), (0.05, -2.0), (0.8, 0.3)])
def test_second_derivatives_match_finite_differences(theta, alpha):
    h = 1e-6
    base = indemnity_derivatives(theta, alpha, 1.0, 0.9)
    up = indemnity_derivatives(theta + h, alpha, 1.0, 0.9)["d_theta"]
    down = indemnity_derivatives(theta - h, alpha, 1.0, 0.9)["d_theta"]
    assert (up - down) / (2 * h) == pytest.approx(base["d2_theta"], rel=1e-6)
    up = indemnity_derivatives(theta, alpha + h, 1.0, 0.9)["d_alpha"]
    down = indemnity_derivatives(theta, alpha - h, 1.0, 0.9)["d_alpha"]
    assert (up - down) / (2 * h) == pytest.approx(base["d2_alpha"], rel=1e-6)


def test_indemnity_is_concave_in_alpha_for_moderate_loadings():
    for theta in (0.01, 0.25, 0.5, 1.0):
        for alpha in (-3.0, -1.0, -0.5, -0.1, 0.0):
            assert indemnity_derivatives(theta, alpha, 1.0, 0.9)["d2_alpha"] < 0
    # past the inflection point the curvature turns positive
    assert indemnity_derivatives(0.25, 0.95, 1.0, 1.0)["d2_alpha"] > 0


def test_insurance_sensitivity_grid():
    frame = insurance_sensitivity([0.1, 0.25], [-1.0, 0.0])
    assert len(frame) == 4
    assert frame["alpha_root"].to_numpy() == pytest.approx(frame["alpha_tilde"].to_numpy())
    assert frame["active"].all()
    with pytest.raises(InactiveInsurance):
        insurance_sensitivity([5.0], [-1.0], strict=True)
    with pytest.raises(InvalidParameter):
        insurance_sensitivity([0.1], [-1.0], model=parameter_set("I", loss=LossModel.uniform()))


def test_loss_term_gap():
    assert loss_term_gap(0.25, 1.0, UtilitySpec.log(), LossModel.uniform()) == pytest.approx(0.4)
    assert loss_term_gap(0.25, 0.1, UtilitySpec.log(), LossModel.uniform()) == pytest.approx(
        0.0, abs=1e-12
    )


def test_lambda_upsilon_curve():
    frame = lambda_upsilon_curve()
    assert len(frame) == 6 * 50
    assert (frame["gap"] > 0).all()
    for _, group in frame.groupby("theta"):
        assert np.all(np.diff(group["gap"]) > 0)
    with pytest.raises(ConstraintViolated):
        lambda_upsilon_curve([0.5], eta_grid=[0.2])


def test_loss_term_gap_decreases_with_loading():
    frame = lambda_upsilon_curve([0.1, 0.2, 0.5], eta_grid=[0.9, 1.0])
    for _, group in frame.groupby("eta"):
        assert np.all(np.diff(group.sort_values("theta")["gap"]) < 0)


def test_regime_ordering_boundary(set2):
    assert regime_ordering_boundary(set2) == pytest.approx(0.86724, abs=1e-5)


def test_power_gap_curves(set2):
    frame = power_gap_curves(set2)
    assert len(frame) == 32
    assert (frame["gap_1"] > frame["gap_2"]).all()
    assert (frame["gap_2"] > 0).all()
    for _, group in frame.groupby("choice"):
        assert np.all(np.diff(group["gap_1"], n=2) < 0)
    with pytest.raises(RegimeOrderingViolated):
        power_gap_curves(set2, alpha_grid=[0.9])


def test_write_csv(tmp_path):
    frame = pd.DataFrame({"alpha": [-1.0, 0.5], "gap": [1 / 3, 2.0]})
    path = write_csv(frame, tmp_path / "nested" / "gaps.csv")
    assert path.read_bytes() == b"alpha,gap\n-1,0.3333333333\n0.5,2\n"


def test_figure_frames_columns():
    frames = figure_frames()
    assert set(frames) == {
        "figure1_consumption",
        "figure2_consumption",
        "figure3_increase_ratio",
        "figure4_lambda_upsilon",
        "figure5_power_gap",
    }
    assert frames["figure2_consumption"]["alpha"].max() == pytest.approx(0.88)
    assert len(frames["figure3_increase_ratio"]) == len(FIGURE3_LOSSES) == 77


@pytest.mark.slow
def test_reproduce_figures(tmp_path):
    written = reproduce_figures(tmp_path)
    names = {path.name for path in written}
    assert "figure4_lambda_upsilon.csv" in names
    assert (tmp_path / "figures.ipynb").exists()
    assert (tmp_path / "figures.py").exists()
    assert reproduce_figures(tmp_path / "bare", notebook=False)
    assert not (tmp_path / "bare" / "figures.ipynb").exists()
