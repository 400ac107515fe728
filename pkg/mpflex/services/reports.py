# mpflex/services/reports.py
"""Deterministic text and CSV reports. Every number is printed with 4 decimals."""
import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from mpflex.models.flexibility import FlexibilityReport
from mpflex.models.market import BestResponseResult, CentralSolution, Equilibrium, MarketInstance
from mpflex.models.pwa import GridCheck, PwaValueFunction
from mpflex.services.market import compute_ptdf, line_flows

EQUILIBRIUM_FILE = "equilibrium.txt"
TRACE_FILE = "trace.csv"
PIECES_FILE = "pieces.txt"
REGIONS_FILE = "regions.txt"
ERROR_TRACE_FILE = "error_trace.csv"
FLEXIBILITY_FILE = "flexibility.csv"
GRID_FILE = "grid.csv"


def fmt(value: float) -> str:
    text = f"{float(value):.4f}"
    # No negative zero in reports.
    return "0.0000" if text == "-0.0000" else text


def _theta_text(instance: MarketInstance, theta: Sequence[float]) -> str:
    if not instance.parameters:
        return "(none)"
    return ", ".join(f"{p.name}={fmt(v)} kW" for p, v in zip(instance.parameters, theta))


def _write_rows(path: Path, header: list[str], rows: list[list[str]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
    return lines


def equilibrium_text(
    instance: MarketInstance,
    equilibrium: Equilibrium,
    linearized: CentralSolution | None = None,
    rounds: int | None = None,
) -> str:
    lines = [
        f"instance: {instance.name}",
        f"theta: {_theta_text(instance, equilibrium.theta)}",
        f"tau: {fmt(instance.tau)} $/kW^2",
        f"cost (quadratic): {fmt(equilibrium.cost)} $",
    ]
    if rounds is not None:
        lines.append(f"best-response rounds: {rounds}")
    if linearized is not None and linearized.optimal:
        gap = 100.0 * (linearized.cost - equilibrium.cost) / abs(equilibrium.cost) if equilibrium.cost else 0.0
        lines += [
            f"cost (linearized): {fmt(linearized.cost)} $",
            f"relative gap: {fmt(gap)} %",
        ]
    elif linearized is not None:
        lines.append(f"cost (linearized): {linearized.status.value}")

    lines += ["", "users"]
    header = ["user", "delta_d [kW]", "bid [kW]", "schedule [kW]", "gap [kW]", "eta [$/kW]"]
    if linearized is not None and linearized.optimal:
        header += ["delta_d lin [kW]", "eta lin [$/kW]"]
    rows = []
    for k, user in enumerate(instance.users):
        row = [user.name, fmt(equilibrium.delta_d[k]), fmt(equilibrium.bids[k]),
               fmt(equilibrium.schedule[k]), fmt(equilibrium.gaps[k]), fmt(equilibrium.eta[k])]
        if linearized is not None and linearized.optimal:
            row += [fmt(linearized.delta_d[k]), fmt(linearized.eta[k])]
        rows.append(row)
    lines += _table(header, rows)

    network = instance.network
    if network.lines:
        flows = line_flows(instance, equilibrium.schedule, compute_ptdf(network))
        rows = [
            [f"{network.bus_label(l.from_bus)}-{network.bus_label(l.to_bus)}", fmt(flow),
             "none" if l.limit is None else fmt(l.limit)]
            for l, flow in zip(network.lines, flows)
        ]
        lines += ["", "line flows"] + _table(["line", "flow [kW]", "limit [kW]"], rows)
    return "\n".join(lines) + "\n"


def write_equilibrium(out: Path, instance: MarketInstance, equilibrium: Equilibrium, **kwargs) -> Path:
    path = out / EQUILIBRIUM_FILE
    path.write_text(equilibrium_text(instance, equilibrium, **kwargs), encoding="utf-8")
    return path


def write_trace(out: Path, instance: MarketInstance, result: BestResponseResult) -> Path:
    names = [u.name for u in instance.users]
    header = (["iteration", "change [kW]"] + [f"delta_d {n} [kW]" for n in names]
              + [f"gap {n} [kW]" for n in names] + [f"schedule {n} [kW]" for n in names])
    rows = [
        [str(r.iteration), fmt(r.change)] + [fmt(v) for v in (*r.delta_d, *r.gaps, *r.schedule)]
        for r in result.rounds
    ]
    return _write_rows(out / TRACE_FILE, header, rows)


def _linear(gradient: np.ndarray, names: list[str]) -> str:
    terms = []
    for g, name in zip(gradient, names):
        sign = "-" if fmt(g).startswith("-") else "+"
        terms.append(f"{sign} {fmt(abs(g))}*{name}")
    return " ".join(terms)


def _affine(intercept: float, gradient: np.ndarray, names: list[str]) -> str:
    return f"{fmt(intercept)} {_linear(gradient, names)}".rstrip()


def pieces_text(instance: MarketInstance, pwa: PwaValueFunction) -> str:
    names = [p.name for p in instance.parameters]
    lines = [
        f"instance: {instance.name}",
        f"pieces: {len(pwa.pieces)}",
        f"certified error: {fmt(pwa.epsilon)} $ (tolerance {pwa.tolerance:.1e} $)",
        "",
    ]
    for region in pwa.regions:
        piece = pwa.piece_of(region)
        lines.append(f"region {region.index}: v = {_affine(piece.intercept, piece.gradient, names)} $")
    return "\n".join(lines) + "\n"


def regions_text(instance: MarketInstance, pwa: PwaValueFunction) -> str:
    names = [p.name for p in instance.parameters]
    lines = [f"instance: {instance.name}", f"regions: {len(pwa.regions)}"]
    for region in pwa.regions:
        center = ", ".join(fmt(v) for v in region.center)
        lines += ["", f"region {region.index} (piece {region.piece}, centre ({center}) kW, radius {fmt(region.radius)} kW)"]
        for row, rhs in zip(region.polyhedron.H, region.polyhedron.h):
            lines.append(f"  {_linear(row, names).removeprefix('+ ')} <= {fmt(rhs)}")
    return "\n".join(lines) + "\n"


def write_pieces(out: Path, instance: MarketInstance, pwa: PwaValueFunction) -> Path:
    path = out / PIECES_FILE
    path.write_text(pieces_text(instance, pwa), encoding="utf-8")
    return path


def write_regions(out: Path, instance: MarketInstance, pwa: PwaValueFunction) -> Path:
    path = out / REGIONS_FILE
    path.write_text(regions_text(instance, pwa), encoding="utf-8")
    return path


def write_error_trace(out: Path, pwa: PwaValueFunction) -> Path:
    rows = [
        [str(t.iteration), fmt(t.max_error), str(t.pieces), str(t.regions), str(t.new_pieces)]
        for t in pwa.trace
    ]
    return _write_rows(
        out / ERROR_TRACE_FILE, ["iteration", "max error [$]", "pieces", "regions", "new pieces"], rows,
    )


def write_flexibility(out: Path, instance: MarketInstance, report: FlexibilityReport) -> Path:
    names = [p.name for p in instance.parameters]
    header = (["user", "demand [kW]", "lower [kW]", "upper [kW]", "width [kW]", "lower exploited",
               "upper exploited"] + [f"lower at {n} [kW]" for n in names] + [f"upper at {n} [kW]" for n in names])
    rows = [
        [u.name, fmt(u.demand), fmt(u.lower), fmt(u.upper), fmt(u.width),
         "yes" if u.lower_exploited else "no", "yes" if u.upper_exploited else "no"]
        + [fmt(v) for v in (*u.lower_theta, *u.upper_theta)]
        for u in report.users
    ]
    return _write_rows(out / FLEXIBILITY_FILE, header, rows)


def write_grid(out: Path, instance: MarketInstance, check: GridCheck) -> Path:
    names = [p.name for p in instance.parameters]
    header = [f"{n} [kW]" for n in names] + ["lp value [$]", "underestimator [$]", "gap [$]"]
    rows = []
    for theta, lp, under in zip(check.points, check.lp_values, check.under_values):
        lp_text = "infeasible" if np.isnan(lp) else fmt(lp)
        gap_text = "" if np.isnan(lp) else fmt(lp - under)
        rows.append([fmt(v) for v in theta] + [lp_text, fmt(under), gap_text])
    return _write_rows(out / GRID_FILE, header, rows)
