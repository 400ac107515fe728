# mpflex/models/market.py
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from mpflex.core.config import settings
from mpflex.models.arrays import NumericModel, Vector
from mpflex.models.polytope import Polyhedron
from mpflex.models.programs import SolveStatus


class UserKind(str, Enum):
    CONSUMER = "consumer"
    PROSUMER = "prosumer"


class User(BaseModel):
    """A market participant with quadratic disutility alpha*x^2 + beta*x + zeta of its adjustment x."""
    name: str
    kind: UserKind = UserKind.CONSUMER
    bus: int = Field(ge=0)
    demand: float
    lower: float
    upper: float
    alpha: float = Field(gt=0)
    beta: float = 0.0
    zeta: float = 0.0
    forecast: float = 0.0
    # Index of the deviation parameter this prosumer's renewable output depends on.
    parameter: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.lower <= self.demand <= self.upper:
            raise ValueError(
                f"user {self.name}: demand {self.demand} must lie in [{self.lower}, {self.upper}]"
            )
        if self.kind is UserKind.CONSUMER and (self.forecast != 0.0 or self.parameter is not None):
            raise ValueError(f"user {self.name}: consumers have no forecast output or parameter")
        if self.kind is UserKind.PROSUMER and self.parameter is None:
            raise ValueError(f"user {self.name}: prosumers must name a deviation parameter")
        return self

    @property
    def adjustment_range(self) -> tuple[float, float]:
        return self.lower - self.demand, self.upper - self.demand

    @property
    def elastic(self) -> bool:
        return self.upper > self.lower

    def disutility(self, adjustment):
        return self.alpha * adjustment ** 2 + self.beta * adjustment + self.zeta

    def marginal(self, adjustment):
        return 2.0 * self.alpha * adjustment + self.beta


class Line(BaseModel):
    from_bus: int = Field(ge=0)
    to_bus: int = Field(ge=0)
    reactance: float = Field(gt=0)
    # None means the line is never congested.
    limit: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"line {self.from_bus}-{self.to_bus} connects a bus to itself")
        return self


class Network(BaseModel):
    buses: int = Field(ge=1)
    lines: list[Line] = Field(default_factory=list)
    slack: int = Field(default=0, ge=0)
    bus_names: list[str] | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.slack >= self.buses:
            raise ValueError(f"slack bus {self.slack} does not exist")
        for line in self.lines:
            if max(line.from_bus, line.to_bus) >= self.buses:
                raise ValueError(f"line {line.from_bus}-{line.to_bus} references a missing bus")
        if self.bus_names is not None and len(self.bus_names) != self.buses:
            raise ValueError("bus_names must name every bus")
        return self

    def bus_label(self, bus: int) -> str:
        return self.bus_names[bus] if self.bus_names else str(bus)

    def limited_lines(self) -> list[int]:
        return [i for i, line in enumerate(self.lines) if line.limit is not None]


class ParameterRange(BaseModel):
    name: str
    lower: float
    upper: float

    @model_validator(mode="after")
    def _check(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError(f"parameter {self.name} must have finite bounds")
        if self.lower >= self.upper:
            raise ValueError(f"parameter {self.name}: lower bound must lie below the upper bound")
        return self


class MarketInstance(BaseModel):
    name: str = "market"
    users: list[User]
    network: Network
    tau: float = Field(default=settings.DEFAULT_TAU, gt=0)
    parameters: list[ParameterRange] = Field(default_factory=list)
    # Inelastic withdrawal per bus, kW.
    inelastic: list[float] = Field(default_factory=list)
    segments: int = Field(default=settings.DEFAULT_SEGMENTS, ge=2)
    epsilon: float = Field(default=settings.DEFAULT_EPSILON, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.users:
            raise ValueError("an instance needs at least one user")
        for user in self.users:
            if user.bus >= self.network.buses:
                raise ValueError(f"user {user.name} sits on missing bus {user.bus}")
        owned = sorted(u.parameter for u in self.users if u.kind is UserKind.PROSUMER)
        if owned != list(range(len(self.parameters))):
            raise ValueError("every deviation parameter must belong to exactly one prosumer")
        if self.inelastic and len(self.inelastic) != self.network.buses:
            raise ValueError("inelastic loads must list one value per bus")
        return self

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_parameters(self) -> int:
        return len(self.parameters)

    def loads(self) -> np.ndarray:
        if not self.inelastic:
            return np.zeros(self.network.buses)
        return np.asarray(self.inelastic, dtype=float)

    def theta_lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.parameters])

    def theta_upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.parameters])

    def theta_box(self) -> Polyhedron:
        return Polyhedron.box(self.theta_lower(), self.theta_upper())

    def theta_center(self) -> np.ndarray:
        return 0.5 * (self.theta_lower() + self.theta_upper())

    def supply(self, theta) -> np.ndarray:
        """Renewable output per user at deviation ``theta`` (zero for consumers)."""
        theta = np.asarray(theta, dtype=float).reshape(self.n_parameters)
        out = np.zeros(self.n_users)
        for k, user in enumerate(self.users):
            if user.kind is UserKind.PROSUMER:
                out[k] = user.forecast + theta[user.parameter]
        return out

    def demands(self) -> np.ndarray:
        return np.array([u.demand for u in self.users])


class CentralSolution(NumericModel):
    """Welfare-maximising dispatch at one parameter value."""
    status: SolveStatus
    source: Literal["quadratic", "linearized"]
    theta: Vector
    delta_d: Vector | None = None
    schedule: Vector | None = None
    eta: Vector | None = None
    cost: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class Equilibrium(NumericModel):
    theta: Vector
    delta_d: Vector
    bids: Vector
    schedule: Vector
    gaps: Vector
    eta: Vector
    cost: float


class ClearingResult(NumericModel):
    status: SolveStatus
    schedule: Vector | None = None
    gaps: Vector | None = None


class BestResponseStatus(str, Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not_converged"
    INFEASIBLE = "infeasible"


class BestResponseRound(NumericModel):
    iteration: int
    delta_d: Vector
    gaps: Vector
    schedule: Vector
    change: float


class BestResponseResult(NumericModel):
    status: BestResponseStatus
    equilibrium: Equilibrium | None = None
    rounds: list[BestResponseRound] = Field(default_factory=list)
