import io

import numpy as np
import pytest

from helpers import oracle_value, single_bus_market
from mpflex.core.exceptions import InfeasibleParameterError
from mpflex.models.market import User
from mpflex.services.market import solve_central
from mpflex.services.mplp import (
    assemble_mplp,
    evaluate_lp_at,
    export_matrices,
    linearize_disutility,
    solve_central_linearized,
    verify_parameter_box,
)

THETA = np.array([-10.0, -20.0])


def test_linearize_square_on_unit_interval():
    user = User(name="u", bus=0, demand=0.0, lower=-1.0, upper=1.0, alpha=1.0)
    lin = linearize_disutility(user, 3)

    assert lin.breakpoints.tolist() == [-1.0, 0.0, 1.0]
    assert lin.values.tolist() == [1.0, 0.0, 1.0]


def test_linearize_five_bus_user_one(five_bus_instance):
    user = five_bus_instance.users[0]
    lin = linearize_disutility(user, 6)

    assert lin.breakpoints.tolist() == pytest.approx([-30.0, -10.0, 10.0, 30.0, 50.0, 70.0])
    assert lin.values == pytest.approx(0.003 * lin.breakpoints ** 2 + 1.80 * lin.breakpoints + 255.30)


def test_interpolation_error_stays_below_the_bound(five_bus_instance):
    for user in five_bus_instance.users[:3]:
        lin = linearize_disutility(user, 6)
        grid = np.arange(lin.breakpoints[0], lin.breakpoints[-1], 1e-3)
        error = np.max(lin.interpolate(grid) - user.disutility(grid))
        assert 0.0 <= error <= lin.error_bound + 1e-9


def test_linearize_needs_two_knots_and_pins_empty_ranges(five_bus_instance):
    with pytest.raises(ValueError):
        linearize_disutility(five_bus_instance.users[0], 1)
    wind = linearize_disutility(five_bus_instance.users[3], 6)
    assert wind.knots == 1
    assert wind.error_bound == 0.0


def test_single_bus_mplp_balances_adjustment_with_deviation():
    instance = single_bus_market()
    mplp = assemble_mplp(instance, 3)
    evaluation = evaluate_lp_at(mplp, [0.0])
    consumer = instance.users[0]

    assert evaluation.optimal
    assert mplp.adjustments(evaluation.x)[0] == pytest.approx(0.0, abs=1e-9)
    assert evaluation.value == pytest.approx(consumer.disutility(0.0) + instance.users[1].zeta)


def test_five_bus_linearized_cost_and_multipliers(five_bus_mplp):
    linearized = solve_central_linearized(five_bus_mplp, THETA)

    assert linearized.optimal
    assert linearized.cost == pytest.approx(768.42, abs=0.05)
    assert linearized.eta[:3] == pytest.approx([-1.92, -2.08, -2.31], abs=0.01)
    assert linearized.delta_d[:3] == pytest.approx([11.10, -20.0, -26.10], abs=0.01)


def test_linearized_schedule_balances(five_bus_instance, five_bus_mplp):
    linearized = solve_central_linearized(five_bus_mplp, THETA)
    assert linearized.schedule.sum() + five_bus_instance.loads().sum() == pytest.approx(0.0, abs=1e-7)


def test_lp_value_overestimates_the_quadratic_problem(five_bus_instance, five_bus_mplp):
    rng = np.random.default_rng(3)
    bound = sum(linearize_disutility(u, 6).error_bound for u in five_bus_instance.users)
    for theta in rng.uniform(-40, 40, size=(30, 2)):
        lp = evaluate_lp_at(five_bus_mplp, theta).value
        qp = solve_central(five_bus_instance, theta).cost
        assert qp - 1e-6 <= lp <= qp + bound + 1e-6


def test_lp_value_matches_highs(five_bus_mplp):
    rng = np.random.default_rng(4)
    for theta in rng.uniform(-40, 40, size=(10, 2)):
        assert evaluate_lp_at(five_bus_mplp, theta).value == pytest.approx(oracle_value(five_bus_mplp, theta), abs=1e-6)


def test_dual_vertex_identities(five_bus_mplp):
    rng = np.random.default_rng(5)
    for theta in rng.uniform(-40, 40, size=(10, 2)):
        evaluation = evaluate_lp_at(five_bus_mplp, theta)
        gamma = evaluation.gamma
        assert np.max(np.abs(five_bus_mplp.A.T @ gamma - five_bus_mplp.c)) <= 1e-7
        assert np.max(gamma) <= 1e-9
        assert evaluation.value == pytest.approx(gamma @ five_bus_mplp.rhs(theta) + five_bus_mplp.offset, abs=1e-6)


def test_value_is_convex_along_segments(five_bus_mplp):
    rng = np.random.default_rng(6)
    for _ in range(30):
        a, b = rng.uniform(-40, 40, size=(2, 2))
        ends = evaluate_lp_at(five_bus_mplp, a).value + evaluate_lp_at(five_bus_mplp, b).value
        assert evaluate_lp_at(five_bus_mplp, 0.5 * (a + b)).value <= 0.5 * ends + 1e-7


def test_refining_the_breakpoints_never_raises_the_value(five_bus_instance):
    coarse = assemble_mplp(five_bus_instance, 6)
    fine = assemble_mplp(five_bus_instance, 11)
    rng = np.random.default_rng(8)
    for theta in rng.uniform(-40, 40, size=(10, 2)):
        assert evaluate_lp_at(fine, theta).value <= evaluate_lp_at(coarse, theta).value + 1e-7


def test_weights_reconstruct_adjustments_and_cost(five_bus_instance, five_bus_mplp):
    evaluation = evaluate_lp_at(five_bus_mplp, THETA)
    x = evaluation.x
    adjustments = five_bus_mplp.adjustments(x)
    for lin in five_bus_mplp.disutilities:
        if lin.columns is None:
            continue
        weights = x[lin.columns]
        assert weights.sum() == pytest.approx(1.0)
        user = five_bus_instance.users[lin.user]
        assert weights @ lin.values >= user.disutility(adjustments[lin.user]) - 1e-9


def test_parameter_box_check(five_bus_mplp):
    verify_parameter_box(five_bus_mplp)
    too_wide = five_bus_mplp.model_copy(update={"theta_lower": np.array([-400.0, -400.0])})
    with pytest.raises(InfeasibleParameterError) as excinfo:
        verify_parameter_box(too_wide)
    assert excinfo.value.theta[0] == -400.0


def test_export_matrices_lists_every_block(five_bus_mplp):
    stream = io.StringIO()
    export_matrices(five_bus_mplp, stream)
    text = stream.getvalue()

    for label in ("# c ", "# A ", "# t ", "# B ", "# offset", "# user wind-C: pinned"):
        assert label in text
