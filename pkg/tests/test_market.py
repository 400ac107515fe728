import numpy as np
import pytest

from helpers import single_bus_market
from mpflex.core.config import settings
from mpflex.core.exceptions import NetworkError
from mpflex.models.market import (
    BestResponseStatus,
    CentralSolution,
    Line,
    MarketInstance,
    Network,
    ParameterRange,
    User,
    UserKind,
)
from mpflex.models.programs import SolveStatus
from mpflex.services.concurrency import map_concurrently
from mpflex.services.market import (
    compute_ptdf,
    line_flows,
    operator_clear,
    recover_gne,
    scale_line_limits,
    simulate_best_response,
    solve_central,
    user_best_response,
)

THETA = np.array([-10.0, -20.0])


def test_ptdf_two_buses():
    ptdf = compute_ptdf(Network(buses=2, lines=[Line(from_bus=0, to_bus=1, reactance=0.1)]))
    assert np.allclose(ptdf, [[0.0, -1.0]])


def test_ptdf_triangle_splits_two_to_one():
    lines = [Line(from_bus=0, to_bus=1, reactance=1.0), Line(from_bus=1, to_bus=2, reactance=1.0),
             Line(from_bus=0, to_bus=2, reactance=1.0)]
    ptdf = compute_ptdf(Network(buses=3, lines=lines))
    assert np.allclose(ptdf[:, 1], [-2 / 3, 1 / 3, -1 / 3])


def test_ptdf_matches_dc_power_flow(five_bus_instance):
    network = five_bus_instance.network
    ptdf = compute_ptdf(network)
    rng = np.random.default_rng(7)
    n = network.buses
    incidence = np.zeros((len(network.lines), n))
    for i, line in enumerate(network.lines):
        incidence[i, line.from_bus], incidence[i, line.to_bus] = 1.0, -1.0
    susceptance = incidence.T @ np.diag([1 / l.reactance for l in network.lines]) @ incidence
    keep = [b for b in range(n) if b != network.slack]

    for _ in range(20):
        injections = rng.uniform(-100, 100, size=n)
        injections[network.slack] = -injections[keep].sum()
        angles = np.zeros(n)
        angles[keep] = np.linalg.solve(susceptance[np.ix_(keep, keep)], injections[keep])
        flows = (incidence @ angles) / np.array([l.reactance for l in network.lines])
        assert np.max(np.abs(ptdf @ injections - flows)) <= 1e-8


def test_disconnected_network_is_rejected():
    network = Network(buses=3, lines=[Line(from_bus=0, to_bus=1, reactance=0.1)])
    with pytest.raises(NetworkError):
        compute_ptdf(network)


def test_central_single_prosumer_at_zero_deviation():
    instance = MarketInstance(
        users=[User(name="p", kind=UserKind.PROSUMER, bus=0, demand=10.0, lower=0.0, upper=20.0,
                    alpha=0.01, beta=0.0, zeta=5.0, forecast=10.0, parameter=0)],
        network=Network(buses=1),
        parameters=[ParameterRange(name="dw", lower=-5.0, upper=5.0)],
    )
    central = solve_central(instance, [0.0])

    assert central.optimal
    assert central.delta_d[0] == pytest.approx(0.0, abs=1e-9)
    assert central.cost == pytest.approx(5.0)


def test_central_five_bus_cost_and_multipliers(five_bus_instance):
    central = solve_central(five_bus_instance, THETA)

    assert central.optimal
    assert central.cost == pytest.approx(767.24, abs=0.01)
    assert central.delta_d[:3] == pytest.approx([11.10, -20.0, -26.10], abs=0.01)
    assert central.eta[:3] == pytest.approx([-1.8666, -2.0460, -2.2990], abs=1e-3)
    # Interior users price at their marginal disutility.
    for k in (0, 2):
        user = five_bus_instance.users[k]
        assert -central.eta[k] == pytest.approx(user.marginal(central.delta_d[k]), abs=1e-6)


def test_central_schedule_balances_and_respects_lines(five_bus_instance):
    central = solve_central(five_bus_instance, THETA)
    flows = line_flows(five_bus_instance, central.schedule)
    limits = np.array([l.limit for l in five_bus_instance.network.lines])

    assert central.schedule.sum() + five_bus_instance.loads().sum() == pytest.approx(0.0, abs=1e-8)
    assert np.all(np.abs(flows) <= limits + 1e-6)
    # Line A-E is congested at this deviation.
    assert flows[2] == pytest.approx(-200.0, abs=1e-6)


def test_central_reports_infeasibility(five_bus_instance):
    assert solve_central(five_bus_instance, [-400.0, -400.0]).status is SolveStatus.INFEASIBLE


def test_relaxing_limits_never_raises_cost(five_bus_instance):
    costs = [solve_central(scale_line_limits(five_bus_instance, f), THETA).cost for f in (1.0, 2.0, 4.0)]
    assert costs[0] >= costs[1] - 1e-9 >= costs[2] - 2e-9


def test_scale_line_limits_keeps_unlimited_lines():
    network = Network(buses=2, lines=[Line(from_bus=0, to_bus=1, reactance=0.1, limit=10.0),
                                      Line(from_bus=0, to_bus=1, reactance=0.1)])
    instance = single_bus_market().model_copy(update={"network": network})
    scaled = scale_line_limits(instance, 2.0)

    assert [l.limit for l in scaled.network.lines] == [20.0, None]
    with pytest.raises(ValueError):
        scale_line_limits(instance, 0.0)


def test_recover_gne_with_zero_multipliers():
    instance = single_bus_market()
    central = CentralSolution(
        status=SolveStatus.OPTIMAL, source="quadratic", theta=[0.0], delta_d=[0.0, 0.0],
        schedule=[3.0, -3.0], eta=[0.0, 0.0], cost=1.0,
    )
    equilibrium = recover_gne(central, instance)

    assert np.allclose(equilibrium.gaps, 0.0)
    assert np.allclose(equilibrium.bids, equilibrium.schedule)


def test_recover_gne_gaps_follow_multipliers(five_bus_instance):
    central = solve_central(five_bus_instance, THETA)
    equilibrium = recover_gne(central, five_bus_instance)

    assert np.allclose(equilibrium.gaps, -central.eta / five_bus_instance.tau)
    assert np.allclose(equilibrium.bids + equilibrium.gaps, equilibrium.schedule)


def two_user_market() -> MarketInstance:
    return MarketInstance(
        users=[User(name="a", bus=0, demand=10.0, lower=0.0, upper=20.0, alpha=0.01),
               User(name="b", bus=0, demand=10.0, lower=0.0, upper=20.0, alpha=0.01)],
        network=Network(buses=1),
    )


def test_operator_splits_imbalance_equally():
    result = operator_clear([10.0, -6.0], two_user_market())

    assert np.allclose(result.schedule, [8.0, -8.0])
    assert np.allclose(result.gaps, [-2.0, -2.0])


def test_operator_keeps_balanced_bids():
    result = operator_clear([5.0, -5.0], two_user_market())
    assert np.allclose(result.gaps, 0.0)


def test_operator_rejects_non_finite_bids():
    with pytest.raises(ValueError):
        operator_clear([np.nan, 1.0], two_user_market())


def test_best_response_at_the_origin():
    user = User(name="a", bus=0, demand=10.0, lower=0.0, upper=20.0, alpha=0.5)
    adjustment, bid = user_best_response(user, schedule=10.0, gap=0.0, deviation=0.0, tau=1.0)

    assert adjustment == pytest.approx(0.0)
    assert bid == pytest.approx(10.0)


@pytest.mark.parametrize("seed", range(10))
def test_best_response_matches_a_grid_scan(seed):
    rng = np.random.default_rng(seed)
    user = User(name="a", bus=0, demand=50.0, lower=20.0, upper=80.0,
                alpha=float(rng.uniform(0.001, 0.05)), beta=float(rng.uniform(-3, 3)))
    schedule, gap, tau = rng.uniform(-40, 40), rng.uniform(-5, 5), rng.uniform(0.1, 3.0)

    adjustment, _ = user_best_response(user, schedule, gap, 0.0, tau)
    target = schedule + gap - user.demand

    def objective(x):
        return user.disutility(x) + 0.5 * tau * (target - x) ** 2

    lo, hi = user.adjustment_range
    scan = np.linspace(lo, hi, 60001)
    assert objective(adjustment) <= np.min(objective(scan)) + 1e-9
    assert lo <= adjustment <= hi


def test_best_response_converges_to_the_central_solution(five_bus_instance):
    result = simulate_best_response(five_bus_instance, THETA)
    central = solve_central(five_bus_instance, THETA)

    assert result.status is BestResponseStatus.CONVERGED
    assert len(result.rounds) <= 50
    assert result.equilibrium.delta_d == pytest.approx(central.delta_d, abs=1e-3)
    assert result.equilibrium.eta == pytest.approx(central.eta, abs=1e-2)
    for round_ in result.rounds:
        assert round_.schedule.sum() + five_bus_instance.loads().sum() == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("theta", [(30.0, -35.0), (0.0, 0.0), (-25.0, 15.0)])
def test_best_response_agrees_with_central_across_the_box(five_bus_instance, theta):
    result = simulate_best_response(five_bus_instance, theta, tol=1e-5)
    central = solve_central(five_bus_instance, theta)

    assert result.status is BestResponseStatus.CONVERGED
    assert result.equilibrium.delta_d == pytest.approx(central.delta_d, abs=1e-3)


def test_best_response_with_large_tau_is_immediate():
    home = User(name="home", kind=UserKind.PROSUMER, bus=0, demand=10.0, lower=0.0, upper=20.0,
                alpha=0.01, beta=1.0, forecast=10.0, parameter=0)
    instance = MarketInstance(
        users=[home], network=Network(buses=1),
        parameters=[ParameterRange(name="dw", lower=-5.0, upper=5.0)], tau=1e6,
    )
    result = simulate_best_response(instance, [2.0])

    assert result.status is BestResponseStatus.CONVERGED
    assert len(result.rounds) <= 2
    assert result.equilibrium.delta_d[0] == pytest.approx(2.0, abs=1e-3)


def test_best_response_does_not_stop_while_bids_drift():
    instance = single_bus_market().model_copy(update={"tau": 1e6})
    result = simulate_best_response(instance, [0.0])

    assert result.status is BestResponseStatus.CONVERGED
    assert result.equilibrium.delta_d[0] == pytest.approx(0.0, abs=1e-3)
    assert result.equilibrium.schedule == pytest.approx([10.0, -10.0], abs=1e-3)


def test_best_response_reports_non_convergence(five_bus_instance):
    result = simulate_best_response(five_bus_instance, THETA, tol=0.0, max_iter=3)

    assert result.status is BestResponseStatus.NOT_CONVERGED
    assert len(result.rounds) == 3


def test_map_concurrently_keeps_order(monkeypatch):
    monkeypatch.setattr(settings, "WORKERS", 3)
    assert map_concurrently(lambda x: x * x, range(10)) == [x * x for x in range(10)]
