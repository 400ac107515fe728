# mpflex/services/instance_io.py
import json
import logging
from pathlib import Path

from pydantic import ValidationError

from mpflex.core.exceptions import InstanceParseError, InstanceValidationError, NetworkError
from mpflex.models.instance import (
    FORMAT_VERSION,
    AnalysisRecord,
    InstanceFile,
    LineRecord,
    LoadRecord,
    ParameterRecord,
    UserRecord,
)
from mpflex.models.market import Line, MarketInstance, Network, ParameterRange, User
from mpflex.services.market import compute_ptdf

logger = logging.getLogger(__name__)


def _dotted(location) -> str:
    return ".".join(str(part) for part in location)


def parse_instance(text: str) -> InstanceFile:
    """Parse and structurally validate instance text; errors carry a location."""
    if not text.strip():
        data = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceParseError(exc.msg, location=f"line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(data, dict):
        raise InstanceParseError("top level must be an object", location="line 1")
    try:
        return InstanceFile.model_validate(data)
    except ValidationError as exc:
        errors = exc.errors()
        missing = [e["loc"][0] for e in errors if e["type"] == "missing" and len(e["loc"]) == 1]
        if missing:
            names = ", ".join(f"'{name}'" for name in missing)
            raise InstanceParseError(f"missing section {names}") from exc
        first = errors[0]
        raise InstanceValidationError(first["msg"], field=_dotted(first["loc"])) from exc


def _index(names: dict[str, int], key: str, field: str) -> int:
    if key not in names:
        raise InstanceValidationError(f"unknown name '{key}'", field=field)
    return names[key]


def _build(model, field: str | None, **values):
    """Construct ``model`` and report a failure under the record path ``field``."""
    try:
        return model(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = ".".join([field, *(str(part) for part in first["loc"])]) if field else _dotted(first["loc"])
        raise InstanceValidationError(first["msg"], field=path or None) from exc


def to_instance(record: InstanceFile) -> MarketInstance:
    """Resolve names into indices and enforce every model invariant."""
    buses = {name: i for i, name in enumerate(record.buses)}
    if len(buses) != len(record.buses):
        raise InstanceValidationError("bus names must be unique", field="buses")
    parameters = {p.name: i for i, p in enumerate(record.parameters)}

    loads = [0.0] * len(record.buses)
    for i, load in enumerate(record.inelastic_loads):
        loads[_index(buses, load.bus, f"inelastic_loads.{i}.bus")] += load.load

    lines = [
        _build(
            Line, f"lines.{i}",
            from_bus=_index(buses, line.from_bus, f"lines.{i}.from"),
            to_bus=_index(buses, line.to_bus, f"lines.{i}.to"),
            reactance=line.reactance,
            limit=line.limit,
        )
        for i, line in enumerate(record.lines)
    ]
    network = _build(
        Network, "buses",
        buses=len(record.buses),
        bus_names=list(record.buses),
        slack=_index(buses, record.slack_bus, "slack_bus") if record.slack_bus else 0,
        lines=lines,
    )
    users = [
        _build(
            User, f"users.{i}",
            name=user.name,
            kind=user.kind,
            bus=_index(buses, user.bus, f"users.{i}.bus"),
            demand=user.demand,
            lower=user.lower,
            upper=user.upper,
            alpha=user.alpha,
            beta=user.beta,
            zeta=user.zeta,
            forecast=user.forecast,
            parameter=(
                _index(parameters, user.parameter, f"users.{i}.parameter")
                if user.parameter is not None else None
            ),
        )
        for i, user in enumerate(record.users)
    ]
    ranges = [
        _build(ParameterRange, f"parameters.{i}", name=p.name, lower=p.lower, upper=p.upper)
        for i, p in enumerate(record.parameters)
    ]
    instance = _build(
        MarketInstance, None,
        name=record.name,
        users=users,
        network=network,
        tau=record.tau,
        parameters=ranges,
        inelastic=loads if any(loads) else [],
        segments=record.analysis.segments,
        epsilon=record.analysis.epsilon,
    )
    try:
        compute_ptdf(instance.network)
    except NetworkError as exc:
        raise InstanceValidationError(exc.message, field="lines") from exc
    return instance


def from_instance(instance: MarketInstance) -> InstanceFile:
    network = instance.network
    label = network.bus_label
    return InstanceFile(
        version=FORMAT_VERSION,
        name=instance.name,
        buses=[label(b) for b in range(network.buses)],
        slack_bus=label(network.slack),
        lines=[
            LineRecord(from_bus=label(l.from_bus), to_bus=label(l.to_bus), reactance=l.reactance, limit=l.limit)
            for l in network.lines
        ],
        users=[
            UserRecord(
                name=u.name, kind=u.kind, bus=label(u.bus), demand=u.demand, lower=u.lower,
                upper=u.upper, alpha=u.alpha, beta=u.beta, zeta=u.zeta, forecast=u.forecast,
                parameter=instance.parameters[u.parameter].name if u.parameter is not None else None,
            )
            for u in instance.users
        ],
        inelastic_loads=[
            LoadRecord(bus=label(b), load=load) for b, load in enumerate(instance.inelastic) if load
        ],
        tau=instance.tau,
        parameters=[ParameterRecord(name=p.name, lower=p.lower, upper=p.upper) for p in instance.parameters],
        analysis=AnalysisRecord(segments=instance.segments, epsilon=instance.epsilon),
    )


def load_instance(path: str | Path) -> MarketInstance:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceParseError(f"cannot read file: {exc.strerror}", location=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise InstanceParseError(f"not valid UTF-8: {exc.reason}", location=f"byte {exc.start}") from exc
    instance = to_instance(parse_instance(text))
    logger.debug("loaded instance %s from %s", instance.name, path)
    return instance


def dumps_instance(instance: MarketInstance) -> str:
    return from_instance(instance).model_dump_json(by_alias=True, indent=2, exclude_none=True) + "\n"


def dump_instance(instance: MarketInstance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")
