import numpy as np
from scipy.optimize import linprog

from mpflex.models.market import MarketInstance, Network, ParameterRange, User, UserKind
from mpflex.models.mplp import MpLp


def random_mplp(seed: int, p: int, n: int = 4, extra_rows: int = 4) -> MpLp:
    """Bounded MP-LP over theta in [-1, 1]^p where x = 0 is always feasible."""
    rng = np.random.default_rng(seed)
    box = np.vstack([np.eye(n), -np.eye(n)])
    rows = rng.normal(size=(extra_rows, n))
    B_rows = 0.5 * rng.normal(size=(extra_rows, p))
    t_rows = np.abs(B_rows).sum(axis=1) + rng.uniform(0.5, 1.5, size=extra_rows)
    return MpLp(
        c=rng.normal(size=n),
        A=np.vstack([box, rows]),
        t=np.concatenate([np.ones(2 * n), t_rows]),
        B=np.vstack([np.zeros((2 * n, p)), B_rows]),
        theta_lower=-np.ones(p),
        theta_upper=np.ones(p),
    )


def oracle_value(mplp: MpLp, theta) -> float | None:
    """v(theta) from HiGHS, independent of the in-house simplex."""
    result = linprog(mplp.c, A_ub=mplp.A, b_ub=mplp.rhs(theta), bounds=(None, None), method="highs")
    return result.fun + mplp.offset if result.status == 0 else None


def single_bus_market(theta_range: float = 5.0) -> MarketInstance:
    """One elastic consumer fed by one wind farm: the adjustment equals the deviation."""
    return MarketInstance(
        name="single-bus",
        users=[
            User(name="consumer", bus=0, demand=10.0, lower=0.0, upper=20.0, alpha=0.01, beta=1.0),
            User(name="wind", kind=UserKind.PROSUMER, bus=0, demand=0.0, lower=0.0, upper=0.0,
                 alpha=0.001, forecast=10.0, parameter=0),
        ],
        network=Network(buses=1),
        parameters=[ParameterRange(name="dw", lower=-theta_range, upper=theta_range)],
    )


def grid(lower, upper, per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
