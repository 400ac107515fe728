import subprocess
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from mpflex.core.config import settings
from mpflex.core.exceptions import (
    InfeasibleParameterError,
    InstanceParseError,
    InstanceValidationError,
    MpflexError,
)
from mpflex.core.logging import configure_logging
from mpflex.models.market import BestResponseStatus, MarketInstance
from mpflex.services import reports
from mpflex.services.avg import grid_check, run_avg
from mpflex.services.fixtures import FIXTURES
from mpflex.services.flexibility import flexibility_report
from mpflex.services.instance_io import dump_instance, load_instance
from mpflex.services.market import recover_gne, scale_line_limits, simulate_best_response, solve_central
from mpflex.services.mplp import assemble_mplp, export_matrices, solve_central_linearized

cli_app = typer.Typer(help="Parametric flexibility analysis for peer-to-peer energy sharing markets.")
console = Console()

EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3
EXIT_PARSE = 4

MPLP_DUMP_FILE = "mplp.txt"

InstanceOption = typer.Option(..., "--instance", "-i", help="Path to a market instance JSON file.")
OutOption = typer.Option(Path("."), "--out", "-o", help="Directory the reports are written to.")
LimitScaleOption = typer.Option(1.0, "--limit-scale", help="Multiply every line limit by this factor.")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Log solver pivots and working sets.")


def _fail(code: int, reason: str, message: str):
    console.print(f"[bold red]Error:[/bold red] {message}")
    typer.echo(f"reason={reason}", err=True)
    raise typer.Exit(code=code)


@contextmanager
def _reported_errors():
    """Translate library errors into exit codes and reason lines."""
    try:
        yield
    except InstanceParseError as exc:
        _fail(EXIT_PARSE, "PARSE_ERROR", exc.message)
    except InstanceValidationError as exc:
        _fail(EXIT_PARSE, "VALIDATION_ERROR", exc.message)
    except InfeasibleParameterError as exc:
        _fail(EXIT_INFEASIBLE, "INFEASIBLE_PARAMETER", exc.message)
    except MpflexError as exc:
        _fail(1, "ERROR", exc.message)


def _prepare(instance_path: Path, out: Path, limit_scale: float, verbose: bool,
             segments: Optional[int] = None, epsilon: Optional[float] = None) -> MarketInstance:
    configure_logging(verbose)
    instance = load_instance(instance_path)
    updates = {}
    if segments is not None:
        if segments < 2:
            raise InstanceValidationError("at least two knots are required", field="--segments")
        updates["segments"] = segments
    if epsilon is not None:
        if epsilon <= 0:
            raise InstanceValidationError("must be positive", field="--epsilon")
        updates["epsilon"] = epsilon
    if updates:
        instance = instance.model_copy(update=updates)
    if limit_scale != 1.0:
        if limit_scale <= 0:
            raise InstanceValidationError("must be positive", field="--limit-scale")
        instance = scale_line_limits(instance, limit_scale)
    out.mkdir(parents=True, exist_ok=True)
    return instance


def _parse_theta(text: Optional[str], instance: MarketInstance) -> np.ndarray:
    if text is None:
        return instance.theta_center()
    try:
        theta = np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError:
        raise InstanceValidationError(f"cannot read '{text}' as numbers", field="--theta")
    if theta.size != instance.n_parameters:
        raise InstanceValidationError(
            f"expected {instance.n_parameters} values, got {theta.size}", field="--theta",
        )
    if not instance.theta_box().contains(theta):
        raise InstanceValidationError("value lies outside the parameter box", field="--theta")
    return theta


def _user_table(title: str, instance: MarketInstance, columns: dict[str, np.ndarray]) -> Table:
    table = Table(title=title)
    table.add_column("user")
    for name in columns:
        table.add_column(name, justify="right")
    for k, user in enumerate(instance.users):
        table.add_row(user.name, *(reports.fmt(values[k]) for values in columns.values()))
    return table


@cli_app.command()
def equilibrium(
    instance_path: Path = InstanceOption,
    theta: Optional[str] = typer.Option(None, "--theta", "-t", help="Comma-separated deviations; default is the box centre."),
    segments: Optional[int] = typer.Option(None, "--segments", "-K", help="Knots per linearized disutility."),
    limit_scale: float = LimitScaleOption,
    out: Path = OutOption,
    verbose: bool = VerboseOption,
):
    """
    Solve the central problem at one deviation and recover the market equilibrium.
    """
    with _reported_errors():
        instance = _prepare(instance_path, out, limit_scale, verbose, segments=segments)
        point = _parse_theta(theta, instance)
        central = solve_central(instance, point)
        if not central.optimal:
            _fail(EXIT_INFEASIBLE, "INFEASIBLE", "the central problem is infeasible at this deviation.")
        result = recover_gne(central, instance)
        linearized = solve_central_linearized(assemble_mplp(instance), point)
        path = reports.write_equilibrium(out, instance, result, linearized=linearized)

    console.print(_user_table(
        "Generalized Nash equilibrium", instance,
        {"delta_d [kW]": result.delta_d, "schedule [kW]": result.schedule, "eta [$/kW]": result.eta},
    ))
    console.print(f"[green]Cost {reports.fmt(result.cost)} $ (quadratic)[/green]")
    if linearized.optimal:
        console.print(f"[green]Cost {reports.fmt(linearized.cost)} $ (linearized)[/green]")
    console.print(f"Report written to {path}")


@cli_app.command()
def simulate(
    instance_path: Path = InstanceOption,
    theta: Optional[str] = typer.Option(None, "--theta", "-t", help="Comma-separated deviations; default is the box centre."),
    max_iter: int = typer.Option(settings.BEST_RESPONSE_MAX_ITER, "--max-iter", help="Best-response round limit."),
    limit_scale: float = LimitScaleOption,
    out: Path = OutOption,
    verbose: bool = VerboseOption,
):
    """
    Run the decentralized best-response mechanism and write its trace.
    """
    with _reported_errors():
        instance = _prepare(instance_path, out, limit_scale, verbose)
        point = _parse_theta(theta, instance)
        result = simulate_best_response(instance, point, max_iter=max_iter)
        trace = reports.write_trace(out, instance, result)
        if result.status is BestResponseStatus.INFEASIBLE:
            _fail(EXIT_INFEASIBLE, "INFEASIBLE", "the operator cannot clear a feasible schedule.")
        if result.status is BestResponseStatus.NOT_CONVERGED:
            _fail(EXIT_NOT_CONVERGED, "NOT_CONVERGED", f"no convergence within {max_iter} rounds; trace in {trace}.")
        path = reports.write_equilibrium(out, instance, result.equilibrium, rounds=len(result.rounds))

    console.print(_user_table(
        f"Best response after {len(result.rounds)} rounds", instance,
        {"delta_d [kW]": result.equilibrium.delta_d, "schedule [kW]": result.equilibrium.schedule},
    ))
    console.print(f"Reports written to {path} and {trace}")


@cli_app.command()
def avg(
    instance_path: Path = InstanceOption,
    epsilon: Optional[float] = typer.Option(None, "--epsilon", "-e", help="Certified error tolerance in $."),
    segments: Optional[int] = typer.Option(None, "--segments", "-K", help="Knots per linearized disutility."),
    grid: Optional[int] = typer.Option(None, "--grid", help="Check the result on an N-per-axis grid of LP solves."),
    dump_mplp: bool = typer.Option(False, "--dump-mplp", help="Also write the parametric LP matrices."),
    limit_scale: float = LimitScaleOption,
    out: Path = OutOption,
    verbose: bool = VerboseOption,
):
    """
    Approximate the optimal-value function by adaptive vertex generation.
    """
    with _reported_errors():
        instance = _prepare(instance_path, out, limit_scale, verbose, segments=segments, epsilon=epsilon)
        mplp = assemble_mplp(instance)
        if dump_mplp:
            with (out / MPLP_DUMP_FILE).open("w", encoding="utf-8") as stream:
                export_matrices(mplp, stream)
        pwa = run_avg(mplp, epsilon=instance.epsilon)
        written = [
            reports.write_pieces(out, instance, pwa),
            reports.write_regions(out, instance, pwa),
            reports.write_error_trace(out, pwa),
        ]
        check = None
        if grid is not None:
            if grid < 2:
                raise InstanceValidationError("a grid needs at least two points per axis", field="--grid")
            check = grid_check(mplp, pwa, grid)
            written.append(reports.write_grid(out, instance, check))

    console.print(
        f"[green]{len(pwa.pieces)} pieces, {len(pwa.regions)} regions after {len(pwa.trace)} iterations; "
        f"certified error {reports.fmt(pwa.epsilon)} $[/green]"
    )
    if check is not None:
        console.print(
            f"Grid check ({check.points.shape[0]} points): empirical error "
            f"{reports.fmt(check.max_gap)} $, certified {reports.fmt(pwa.epsilon)} $"
        )
    console.print("Reports written to " + ", ".join(str(p) for p in written))


@cli_app.command()
def flexibility(
    instance_path: Path = InstanceOption,
    epsilon: Optional[float] = typer.Option(None, "--epsilon", "-e", help="Certified error tolerance in $."),
    segments: Optional[int] = typer.Option(None, "--segments", "-K", help="Knots per linearized disutility."),
    limit_scale: float = LimitScaleOption,
    out: Path = OutOption,
    verbose: bool = VerboseOption,
):
    """
    Compute every elastic user's flexibility requirement over the parameter box.
    """
    with _reported_errors():
        instance = _prepare(instance_path, out, limit_scale, verbose, segments=segments, epsilon=epsilon)
        mplp = assemble_mplp(instance)
        pwa = run_avg(mplp, epsilon=instance.epsilon)
        report = flexibility_report(pwa, mplp, instance)
        path = reports.write_flexibility(out, instance, report)

    table = Table(title="Flexibility requirement (widest first)")
    for column in ("user", "lower [kW]", "upper [kW]", "width [kW]"):
        table.add_column(column, justify="left" if column == "user" else "right")
    for user in report.ranking():
        table.add_row(user.name, reports.fmt(user.lower), reports.fmt(user.upper), reports.fmt(user.width))
    console.print(table)
    console.print(f"Report written to {path}")


@cli_app.command("export-fixture")
def export_fixture(
    name: str = typer.Argument(..., help=f"One of: {', '.join(FIXTURES)}."),
    path: Path = typer.Option(..., "--out", "-o", help="Instance file to write."),
    seed: int = typer.Option(0, "--seed", help="Seed for the synthetic feeder."),
):
    """
    Write a bundled or synthetic instance to disk in the instance file format.
    """
    if name not in FIXTURES:
        _fail(EXIT_PARSE, "VALIDATION_ERROR", f"unknown fixture '{name}'.")
    instance = FIXTURES[name](seed) if name == "feeder-69" else FIXTURES[name]()
    dump_instance(instance, path)
    console.print(f"[green]Wrote {instance.name} to {path}[/green]")


@cli_app.command("tests")
def run_tests(pytest_args: List[str] = typer.Argument(None, help="Optional arguments forwarded to pytest.")):
    """
    Run the pytest suite.
    """
    cmd = ["pytest"]
    if pytest_args:
        cmd.extend(pytest_args)
    result = subprocess.run(cmd)
    raise typer.Exit(result.returncode)


if __name__ == "__main__":
    cli_app()
