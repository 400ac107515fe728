# mpflex/services/fixtures.py
"""Bundled market instances used by the CLI and the test-suite."""
from importlib import resources

import numpy as np

from mpflex.models.market import Line, MarketInstance, Network, ParameterRange, User, UserKind
from mpflex.services.instance_io import parse_instance, to_instance

FEEDER_BUSES = 69
FEEDER_WIND_BUSES = (9, 30, 60)
FEEDER_DEMAND_BUSES = (12, 23, 32, 42, 53, 62)
FEEDER_LOAD_BUSES = (5, 15, 20, 25, 28, 33, 38, 44, 48, 66)

# (demand, lower, upper) per elastic user, kW.
_FEEDER_DEMANDS = (
    (40.0, 10.0, 50.0),
    (20.0, 0.0, 35.0),
    (30.0, 5.0, 70.0),
    (10.0, 0.0, 20.0),
    (10.0, 5.0, 20.0),
    (40.0, 10.0, 50.0),
)


def five_bus() -> MarketInstance:
    text = resources.files("mpflex.data").joinpath("five_bus.json").read_text(encoding="utf-8")
    return to_instance(parse_instance(text))


def _feeder_parents() -> list[int]:
    # Main trunk 0..26 plus laterals branching at buses 2, 3, 8 and 10.
    parents = [-1] + list(range(26))
    for start, stop, root in ((27, 35, 2), (35, 46, 3), (46, 65, 8), (65, 69, 10)):
        parents.append(root)
        parents.extend(range(start, stop - 1))
    return parents


def synthetic_feeder(seed: int = 0) -> MarketInstance:
    """A 69-bus radial feeder with three wind farms and six elastic demands.

    Forecast supply exactly covers nominal demand plus the inelastic loads, so the
    required total adjustment equals the sum of the three wind deviations.
    """
    rng = np.random.default_rng(seed)
    parents = _feeder_parents()
    lines = []
    for bus in range(1, FEEDER_BUSES):
        limit = 45.0 if bus == FEEDER_WIND_BUSES[2] else None
        lines.append(Line(
            from_bus=parents[bus], to_bus=bus, reactance=float(rng.uniform(0.01, 0.1)), limit=limit,
        ))

    users = []
    for k, (bus, (demand, lower, upper)) in enumerate(zip(FEEDER_DEMAND_BUSES, _FEEDER_DEMANDS)):
        users.append(User(
            name=f"demand-{k + 1}", bus=bus, demand=demand, lower=lower, upper=upper,
            alpha=float(rng.uniform(0.002, 0.01)), beta=float(rng.uniform(1.5, 3.0)),
        ))
    for j, bus in enumerate(FEEDER_WIND_BUSES):
        users.append(User(
            name=f"wind-{j + 1}", kind=UserKind.PROSUMER, bus=bus, demand=0.0, lower=0.0, upper=0.0,
            alpha=0.001, forecast=60.0, parameter=j,
        ))

    loads = [0.0] * FEEDER_BUSES
    for bus in FEEDER_LOAD_BUSES:
        loads[bus] = 3.0
    return MarketInstance(
        name=f"feeder-69-seed{seed}",
        users=users,
        network=Network(buses=FEEDER_BUSES, lines=lines),
        parameters=[ParameterRange(name=f"dw{j + 1}", lower=-30.0, upper=30.0) for j in range(3)],
        inelastic=loads,
    )


def degenerate_market() -> MarketInstance:
    """Two identical users on one bus and two identical parallel lines.

    The linearized problem has non-unique primal optima and duplicated flow rows.
    """
    twin = dict(kind=UserKind.CONSUMER, bus=1, demand=20.0, lower=0.0, upper=40.0, alpha=0.01, beta=2.0)
    users = [
        User(name="twin-a", **twin),
        User(name="twin-b", **twin),
        User(name="anchor", bus=0, demand=20.0, lower=10.0, upper=30.0, alpha=0.02, beta=1.5),
        User(name="wind-far", kind=UserKind.PROSUMER, bus=2, demand=0.0, lower=0.0, upper=0.0,
             alpha=0.001, forecast=60.0, parameter=0),
        User(name="wind-near", kind=UserKind.PROSUMER, bus=0, demand=0.0, lower=0.0, upper=0.0,
             alpha=0.001, forecast=30.0, parameter=1),
    ]
    network = Network(
        buses=3,
        lines=[
            Line(from_bus=0, to_bus=1, reactance=0.1, limit=10.0),
            Line(from_bus=0, to_bus=1, reactance=0.1, limit=10.0),
            Line(from_bus=1, to_bus=2, reactance=0.1),
        ],
    )
    return MarketInstance(
        name="degenerate",
        users=users,
        network=network,
        parameters=[
            ParameterRange(name="dw1", lower=-10.0, upper=10.0),
            ParameterRange(name="dw2", lower=-10.0, upper=10.0),
        ],
    )


FIXTURES = {
    "five-bus": five_bus,
    "feeder-69": synthetic_feeder,
    "degenerate": degenerate_market,
}
