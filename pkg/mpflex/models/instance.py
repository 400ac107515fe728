# mpflex/models/instance.py
"""On-disk instance format. Buses, parameters and loads are referenced by name."""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from mpflex.core.config import settings
from mpflex.models.market import UserKind

FORMAT_NAME = "mpflex-instance"
FORMAT_VERSION = 1


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class LineRecord(_Record):
    from_bus: str = Field(alias="from")
    to_bus: str = Field(alias="to")
    reactance: float
    limit: float | None = None


class UserRecord(_Record):
    name: str
    kind: UserKind = UserKind.CONSUMER
    bus: str
    demand: float
    lower: float
    upper: float
    alpha: float
    beta: float = 0.0
    zeta: float = 0.0
    forecast: float = 0.0
    parameter: str | None = None


class LoadRecord(_Record):
    bus: str
    load: float


class ParameterRecord(_Record):
    name: str
    lower: float
    upper: float


class AnalysisRecord(_Record):
    segments: int = settings.DEFAULT_SEGMENTS
    epsilon: float = settings.DEFAULT_EPSILON


class InstanceFile(_Record):
    format: Literal["mpflex-instance"] = FORMAT_NAME
    version: Literal[1]
    name: str
    buses: list[str] = Field(min_length=1)
    slack_bus: str | None = None
    lines: list[LineRecord]
    users: list[UserRecord]
    inelastic_loads: list[LoadRecord] = Field(default_factory=list)
    tau: float
    parameters: list[ParameterRecord] = Field(default_factory=list)
    analysis: AnalysisRecord = Field(default_factory=AnalysisRecord)
