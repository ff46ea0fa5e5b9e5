"""Parameter sweeps over scenarios, written as deterministic CSV tables.

A sweep takes a scenario config (the parsed mapping, see scenarios.py), a
list of (path, values) parameter axes, and an engine selector, and evaluates
the cross product of all axis values.  Each grid point yields one block of
rows: per-link metrics, network aggregates, and (on multihop topologies)
end-to-end reliabilities.  Rows are emitted in deterministic cross-product
order -- the first axis varies slowest, the last fastest -- so repeated runs
produce byte-identical files.

Engines:
  analytic  -- fixed-point model only (sim columns left empty)
  simulate  -- event simulator only (analytic column left empty)
  compare   -- both engines on every point

Every point reuses the same simulator master seed (common random numbers),
so differences between points reflect the parameters, not resampling noise.
A point that fails to solve or validate contributes rows whose value cells
are empty and whose warnings cell carries the error; the sweep continues.
"""

from __future__ import annotations

import copy
import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import ConvergenceError, NumericsError, ValidationError
from .multihop import solve_network
from .scenarios import build_contention_tables, compile_sim_network, scenario_from_config
from .simulator import run_experiment

ENGINES = ("analytic", "simulate", "compare")

FIXED_COLUMNS = (
    "src",
    "dst",
    "metric",
    "analytic_value",
    "sim_mean",
    "sim_ci95_half",
    "replications",
    "warnings",
)

MAX_POINTS = 10_000


@dataclass(frozen=True)
class SweepSpec:
    """Cross-product parameter grid plus the engine to run on each point."""

    parameters: tuple[tuple[str, tuple], ...] = ()
    engine: str = "compare"

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValidationError(f"unknown engine {self.engine!r}; pick one of {ENGINES}")
        seen = set()
        for path, values in self.parameters:
            if not isinstance(path, str) or not path:
                raise ValidationError("sweep parameter paths must be non-empty strings")
            if path in seen:
                raise ValidationError(f"duplicate sweep parameter {path!r}")
            seen.add(path)
            if len(values) == 0:
                raise ValidationError(f"sweep parameter {path!r} has no values")
        if self.n_points > MAX_POINTS:
            raise ValidationError(
                f"sweep has {self.n_points} points; the limit is {MAX_POINTS}"
            )

    @property
    def paths(self) -> tuple[str, ...]:
        return tuple(path for path, _ in self.parameters)

    @property
    def n_points(self) -> int:
        return math.prod(len(values) for _, values in self.parameters)

    def points(self) -> list[tuple]:
        """All grid points, first axis slowest, as tuples of (path, value)."""
        grids = [[(path, v) for v in values] for path, values in self.parameters]
        return [tuple(combo) for combo in itertools.product(*grids)]


def sweep_from_config(config: dict) -> SweepSpec:
    """Build a SweepSpec from a config's `sweep:` block."""
    block = config.get("sweep")
    if not isinstance(block, dict):
        raise ValidationError("config has no sweep block")
    unknown = set(block) - {"engine", "parameters"}
    if unknown:
        raise ValidationError(f"unknown key(s) {sorted(unknown)} in sweep block")
    axes = block.get("parameters", [])
    if not isinstance(axes, list):
        raise ValidationError("sweep parameters must be a list of {path, values} entries")
    parameters = []
    for entry in axes:
        if not isinstance(entry, dict) or set(entry) != {"path", "values"}:
            raise ValidationError("each sweep parameter needs exactly {path, values}")
        values = entry["values"]
        if not isinstance(values, list):
            raise ValidationError(f"values for {entry['path']!r} must be a list")
        parameters.append((str(entry["path"]), tuple(values)))
    return SweepSpec(parameters=tuple(parameters), engine=block.get("engine", "compare"))


def assign(config: dict, path: str, value) -> None:
    """Set a dotted path inside a nested config mapping, creating levels."""
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValidationError(f"cannot descend into {key!r} in {path!r}")
    node[keys[-1]] = value


def _fmt(value) -> str:
    """Serialize one CSV cell; floats get 9 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.9g}"
    return str(value)


def evaluate_point(
    config: dict,
    assignments,
    engine: str,
    sim_workers: int = 1,
    strict: bool = False,
) -> list[list[str]]:
    """Evaluate one grid point and return its formatted CSV rows.

    With strict=False a failing point is reported inside the rows (empty
    value cells, error text in the warnings column) so a sweep can keep
    going; strict=True re-raises instead, for single-scenario runs.
    """
    point = copy.deepcopy(config)
    point.pop("sweep", None)
    for path, value in assignments:
        assign(point, path, value)

    prefix = [_fmt(value) for _, value in assignments]
    warnings: list[str] = []
    try:
        scenario = scenario_from_config(point, default_id=str(point.get("scenario_id", "scenario")))
    except (ValidationError, NumericsError) as exc:
        if strict:
            raise
        row = [str(point.get("scenario_id", "scenario")), *prefix, "", "", "error",
               "", "", "", "", f"config: {exc}"]
        return [row]

    routing = scenario.routing()
    links = scenario.links()
    multihop = any(len(routing.path(node)) > 1 for node, _ in links)
    origins = [node for node, _ in links]

    analytic = {}  # metric name -> {key: value}
    if engine in ("analytic", "compare"):
        try:
            tables = build_contention_tables(scenario)
            solution = solve_network(
                tables,
                routing,
                scenario.lam,
                scenario.mac,
                scenario.timing,
                profile=scenario.power,
                config=scenario.solver,
            )
            rep = solution.report
            analytic["link"] = {
                links[l]: (m.reliability, m.delay_seconds, m.power_mw)
                for l, m in enumerate(rep.links)
            }
            analytic["aggregate"] = (
                rep.mean_reliability,
                rep.mean_delay_seconds,
                rep.mean_power_mw,
            )
            analytic["e2e"] = dict(solution.end_to_end)
            for w in solution.warnings:
                warnings.append(f"analytic: {w}")
            if any(math.isnan(m.delay_seconds) for m in rep.links):
                warnings.append("analytic: delay undefined on some links")
        except (ConvergenceError, NumericsError, ValidationError) as exc:
            if strict:
                raise
            warnings.append(f"analytic: {exc}")
            analytic = {}

    sim = {}
    replications = None
    if engine in ("simulate", "compare"):
        try:
            net = compile_sim_network(scenario)
            result = run_experiment(net, scenario.sim, scenario.power, workers=sim_workers)
            replications = scenario.sim.replications
            rel_by_node = dict(zip(result.transmitters, zip(result.reliability_mean,
                                                            result.reliability_ci95)))
            delay_by_node = dict(zip(result.transmitters, zip(result.delay_mean_seconds,
                                                              result.delay_ci95_seconds)))
            sim["link"] = {
                (src, dst): (
                    rel_by_node[src],
                    delay_by_node[src],
                    (result.power_mean_mw[src], result.power_ci95_mw[src]),
                )
                for src, dst in links
            }
            rel_means = [rel_by_node[n][0] for n, _ in links]
            delays = [delay_by_node[n][0] for n, _ in links]
            finite = [d for d in delays if not math.isnan(d)]
            powers = [result.power_mean_mw[n] for n, _ in links]

            def pooled(cis):
                usable = [c for c in cis if not math.isnan(c)]
                if len(usable) < len(cis):
                    return math.nan
                return math.sqrt(sum(c * c for c in usable)) / len(cis)

            sim["aggregate"] = (
                (float(sum(rel_means) / len(rel_means)),
                 pooled([rel_by_node[n][1] for n, _ in links])),
                (float(sum(finite) / len(finite)) if finite else math.nan,
                 pooled([delay_by_node[n][1] for n, _ in links])),
                (float(sum(powers) / len(powers)),
                 pooled([result.power_ci95_mw[n] for n, _ in links])),
            )
            e2e = {}
            for node in origins:
                product = 1.0
                for src, _ in routing.path(node):
                    product *= rel_by_node[src][0]
                e2e[node] = product
            sim["e2e"] = e2e
            if any(math.isnan(rel_by_node[n][0]) for n, _ in links):
                warnings.append("simulate: no completed packets on some links")
        except (ConvergenceError, NumericsError, ValidationError) as exc:
            if strict:
                raise
            warnings.append(f"simulate: {exc}")
            sim = {}

    warning_cell = "; ".join(warnings)
    reps_cell = _fmt(replications)
    rows = []

    def emit(src, dst, metric, analytic_value, sim_pair):
        sim_mean, sim_ci = ("", "")
        if sim_pair is not None:
            sim_mean, sim_ci = _fmt(sim_pair[0]), _fmt(sim_pair[1])
        rows.append([
            scenario.scenario_id, *prefix,
            _fmt(src), _fmt(dst), metric,
            _fmt(analytic_value), sim_mean, sim_ci,
            reps_cell if sim_pair is not None else "",
            warning_cell,
        ])

    metric_names = ("reliability", "delay_s", "power_mw")
    for src, dst in links:
        a_vals = analytic.get("link", {}).get((src, dst), (None,) * 3)
        s_vals = sim.get("link", {}).get((src, dst))
        for i, metric in enumerate(metric_names):
            emit(src, dst, metric, a_vals[i], s_vals[i] if s_vals is not None else None)
    a_agg = analytic.get("aggregate", (None,) * 3)
    s_agg = sim.get("aggregate")
    for i, metric in enumerate(("mean_reliability", "mean_delay_s", "mean_power_mw")):
        emit("", "", metric, a_agg[i], s_agg[i] if s_agg is not None else None)
    if multihop:
        for node in origins:
            dst = routing.path(node)[-1][1]
            a_val = analytic.get("e2e", {}).get(node)
            s_val = sim.get("e2e", {}).get(node) if sim else None
            emit(node, dst, "end_to_end_reliability",
                 a_val, (s_val, math.nan) if s_val is not None else None)
    return rows


def _point_task(args):
    config, assignments, engine, sim_workers, strict = args
    return evaluate_point(config, assignments, engine, sim_workers, strict)


def run_sweep(
    config: dict,
    spec: SweepSpec,
    out_dir: str | Path = ".",
    workers: int = 1,
    out_name: str | None = None,
    strict: bool = False,
) -> Path:
    """Evaluate every grid point and write one CSV; returns the file path."""
    points = spec.points()
    scenario_id = str(config.get("scenario_id", "scenario"))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / (out_name or f"{scenario_id}_sweep.csv")

    sim_workers = workers if len(points) == 1 else 1
    tasks = [(config, assignments, spec.engine, sim_workers, strict) for assignments in points]
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_point_task, tasks))
    else:
        blocks = [_point_task(t) for t in tasks]

    header = ["scenario_id", *spec.paths, *FIXED_COLUMNS]
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for block in blocks:
            writer.writerows(block)
    return out_path
