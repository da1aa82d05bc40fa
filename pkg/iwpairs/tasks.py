"""
Task runners behind the command line.

Each runner takes a validated task and the built diffusion and measure, and
returns a TaskResult: report lines for the terminal and tables for CSV output.
"""
import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .boundary import classify_both
from .config import (
    CheckConfig,
    CheckKind,
    ClassifyTask,
    Config,
    DecomposeTask,
    SolveMode,
    SolveTask,
    TransformTask,
    VerifyTask,
)
from .diffusion import DiffusionSpec
from .expressions import compile_expression
from .grid import GridFunction
from .measures import RadonMeasure, Side
from .montecarlo import (
    Functional,
    PathEnsemble,
    SimConfig,
    calibrate_local_time,
    check_iw_martingale,
    check_last_passage,
    check_local_time_law,
    check_natural_representation,
    check_vanishing,
    compare_measure_change,
    simulate,
    summary_table,
)
from .solver import (
    NATURAL_TOL,
    EquationSpec,
    FundamentalPair,
    fundamental_pair,
    general_solution,
    solve,
    solve_natural,
    boundary_table_report,
)
from .subharmonic import choquet_decompose, choquet_reconstruct, compensator_measure, s_derivative
from .transform import derived_quantities, transform, transform_table, transience_report

logger = logging.getLogger(__name__)

FUNCTION_COLUMNS = ["x", "s(x)", "value", "ds_left", "ds_right"]


class TaskStatus(str, Enum):
    OK = "ok"
    FLAGGED = "flagged"


class TableOutput(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    columns: List[str]
    rows: List[Dict[str, Any]]


class TaskResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    lines: List[str] = Field(default_factory=list)
    tables: List[TableOutput] = Field(default_factory=list)
    status: TaskStatus = TaskStatus.OK

    def report(self) -> str:
        header = f"== {self.kind} ({self.status.value}) =="
        return "\n".join([header, *self.lines])


def function_rows(g: GridFunction) -> List[Dict[str, Any]]:
    """x, s(x), g(x) and the one-sided s-derivatives at each grid node."""
    s_grid = g.s_grid
    rows = []
    for k, x in enumerate(g.grid):
        if g.s_derivatives is not None:
            left, right = float(g.s_derivatives[0][k]), float(g.s_derivatives[1][k])
        else:
            left = s_derivative(g, float(x), Side.LEFT)
            right = s_derivative(g, float(x), Side.RIGHT)
        rows.append({"x": x, "s(x)": s_grid[k], "value": g.values[k], "ds_left": left, "ds_right": right})
    return rows


def _function_table(name: str, g: GridFunction) -> TableOutput:
    return TableOutput(name=name, columns=FUNCTION_COLUMNS, rows=function_rows(g))


def _expected_error(g: GridFunction, source: str) -> float:
    """Sup over the grid of |g - expected| / max(1, |expected|)."""
    expected = np.asarray(compile_expression(source)(g.grid), dtype=float)
    return float(np.max(np.abs(g.values - expected) / np.maximum(1.0, np.abs(expected))))


def _solver_lines(g: GridFunction) -> List[str]:
    report = g.metadata.get("report")
    if report is None:
        return []
    return [f"-- {g.name} --", report.describe()]


def run_classify(task: ClassifyTask, spec: DiffusionSpec, mu_A: RadonMeasure) -> TaskResult:
    report = classify_both(spec, mu_A, task.b)
    status = TaskStatus.FLAGGED if report.b_invariant is False else TaskStatus.OK
    return TaskResult(kind="classify", lines=[report.describe()], status=status)


def _pair(task: Any, spec: DiffusionSpec, mu_A: RadonMeasure, grid: np.ndarray) -> FundamentalPair:
    return fundamental_pair(
        spec,
        mu_A,
        task.c,
        grid,
        alpha_psi=task.alpha_psi,
        alpha_phi=task.alpha_phi,
        regular=dict(task.regular),
        tol=task.tol,
        max_iter=task.max_iter,
    )


def run_solve(task: SolveTask, spec: DiffusionSpec, mu_A: RadonMeasure) -> TaskResult:
    grid = task.grid.build([task.c])
    lines: List[str] = []
    tables: List[TableOutput] = []
    checks: List[Tuple[str, GridFunction, Optional[str]]] = []
    if task.mode is SolveMode.PAIR:
        pair = _pair(task, spec, mu_A, grid)
        lines.append(pair.describe())
        lines += _solver_lines(pair.psi) + _solver_lines(pair.phi)
        lines += ["-- boundary behaviour --", boundary_table_report(pair, spec).describe()]
        tables += [_function_table("psi", pair.psi), _function_table("phi", pair.phi)]
        checks += [("psi", pair.psi, task.expected_psi), ("phi", pair.phi, task.expected_phi)]
        if task.lambda1 is not None or task.lambda2 is not None:
            g = general_solution(pair, task.lambda1 or 0.0, task.lambda2 or 0.0)
            tables.append(_function_table("g", g))
            checks.append(("g", g, task.expected))
    else:
        if task.mode is SolveMode.NATURAL:
            g = solve_natural(
                spec, mu_A, task.endpoint, task.c, task.alpha, grid, tol=max(task.tol, NATURAL_TOL), max_iter=task.max_iter
            )
        else:
            eq = EquationSpec(direction=task.direction, a=task.a, kappa=task.kappa)
            g = solve(spec, mu_A, eq, grid, task.tol, task.max_iter, task.method)
        lines += _solver_lines(g)
        tables.append(_function_table(g.name, g))
        checks.append((g.name, g, task.expected))
    status = TaskStatus.OK
    for name, g, source in checks:
        if source is None:
            continue
        error = _expected_error(g, source)
        ok = error <= task.expected_tol
        lines.append(f"{name} against {source}: max relative error {error:.3g} ({'ok' if ok else 'FLAG'})")
        if not ok:
            status = TaskStatus.FLAGGED
    return TaskResult(kind="solve", lines=lines, tables=tables, status=status)


def run_decompose(task: DecomposeTask, spec: DiffusionSpec, mu_A: Optional[RadonMeasure]) -> TaskResult:
    grid = task.grid.build()
    g = GridFunction.from_function(compile_expression(task.function), grid, spec.scale, name="g")
    d = choquet_decompose(g, spec)
    rebuilt = np.asarray(choquet_reconstruct(d, spec, g.grid), dtype=float)
    error = float(np.max(np.abs(rebuilt - g.values)))
    lines = [d.describe(), f"reconstruction sup-error on the grid: {error:.3g}"]
    rows = [{"x": x, "value": v, "reconstruction": r} for x, v, r in zip(g.grid, g.values, rebuilt)]
    atoms = [{"part": "mu1", "location": loc, "mass": m} for loc, m in d.mu1.atoms]
    atoms += [{"part": "mu2", "location": loc, "mass": m} for loc, m in d.mu2.atoms]
    tables = [
        TableOutput(name="decompose", columns=["x", "value", "reconstruction"], rows=rows),
        TableOutput(name="atoms", columns=["part", "location", "mass"], rows=atoms),
    ]
    if mu_A is not None and not mu_A.is_zero():
        compensator = compensator_measure(d)
        target = mu_A.weighted(g, label="g")
        start = float(grid[0])
        gap = max(
            abs(compensator.mass(start, float(x)) - target.mass(start, float(x))) for x in grid[1:]
        )
        lines.append(f"compensator against g * mu_A, cumulative sup-difference: {gap:.3g}")
    return TaskResult(kind="decompose", lines=lines, tables=tables)


def _source_function(task: Any, spec: DiffusionSpec, mu_A: RadonMeasure) -> Tuple[GridFunction, List[str]]:
    """g from the task's expression, or lambda1 psi + lambda2 phi of the fundamental pair."""
    grid = task.grid.build([task.c])
    if task.function is not None:
        return GridFunction.from_function(compile_expression(task.function), grid, spec.scale, name="g"), []
    pair = _pair(task, spec, mu_A, grid)
    lambda1 = 1.0 if task.lambda1 is None and task.lambda2 is None else task.lambda1 or 0.0
    lambda2 = task.lambda2 or 0.0
    g = general_solution(pair, lambda1, lambda2)
    return g, [pair.describe(), f"g = {lambda1:g} psi + {lambda2:g} phi"]


def run_transform(task: TransformTask, spec: DiffusionSpec, mu_A: RadonMeasure) -> TaskResult:
    g, lines = _source_function(task, spec, mu_A)
    t = transform(spec, g, task.c)
    lines = lines + [t.describe(), transience_report(t, task.c).describe()]
    derived = derived_quantities(t, task.hitting, task.local_times)
    for (y, x), p in derived["q_hitting"]:
        lines.append(f"Q^{y:g}(T_{x:g} < inf) = {p:.17g}")
    for y, mean in derived["q_local_time_mean"]:
        lines.append(f"Q^{y:g}(L^{y:g}_inf) = {mean:.17g}")
    points = task.points or [float(x) for x in g.grid]
    rows = [row.model_dump() for row in transform_table(t, points)]
    table = TableOutput(name="transform", columns=["x", "s_g", "g", "slope_left", "slope_right"], rows=rows)
    return TaskResult(kind="transform", lines=lines, tables=[table])


def _ensemble_config(sim: SimConfig, checks: List[CheckConfig]) -> SimConfig:
    intervals = list(sim.intervals)
    passages = list(sim.last_passage)
    for check in checks:
        if check.kind is CheckKind.MARTINGALE:
            intervals.append((float(check.a), float(check.b)))  # type: ignore[arg-type]
        elif check.kind is CheckKind.LAST_PASSAGE:
            passages.append((float(check.y), float(check.z)))  # type: ignore[arg-type]
    return sim.model_copy(
        update={"intervals": list(dict.fromkeys(intervals)), "last_passage": list(dict.fromkeys(passages))}
    )


_ENSEMBLE_CHECKS = (CheckKind.MARTINGALE, CheckKind.LAST_PASSAGE, CheckKind.VANISHING)


def run_verify(task: VerifyTask, spec: DiffusionSpec, mu_A: RadonMeasure) -> TaskResult:
    g, lines = _source_function(task, spec, mu_A)
    sim = task.simulation
    ensemble: Optional[PathEnsemble] = None
    if task.dump_paths or any(check.kind in _ENSEMBLE_CHECKS for check in task.checks):
        ensemble = simulate(spec, task.x0, _ensemble_config(sim, task.checks), mu_A)
        if ensemble.surrogate:
            lines.append(f"paths truncated to {ensemble.truncation}: estimates are surrogates")
        if ensemble.resolution_flag:
            lines.append("dt exceeds the local-time band resolution: estimates flagged")
    status = TaskStatus.OK
    transformed = None
    for check in task.checks:
        lines.append(f"-- {check.kind.value} --")
        deviation: Optional[float] = None
        flagged = False
        if check.kind is CheckKind.MARTINGALE:
            assert ensemble is not None
            report = check_iw_martingale(ensemble, g, check.a, check.b)  # type: ignore[arg-type]
            deviation, flagged = report.max_deviation_se, not report.bounded
            lines.append(report.describe())
        elif check.kind is CheckKind.LAST_PASSAGE:
            assert ensemble is not None
            passage = check_last_passage(ensemble, check.y, check.z)  # type: ignore[arg-type]
            deviation = passage.deviation_se
            lines.append(passage.describe())
        elif check.kind is CheckKind.VANISHING:
            assert ensemble is not None
            vanishing = check_vanishing(ensemble, g)
            flagged = vanishing.applicable and not vanishing.decreasing
            lines.append(vanishing.describe())
        elif check.kind is CheckKind.CALIBRATE:
            estimate = calibrate_local_time(spec, task.x0, check.y, check.a, check.b, sim)  # type: ignore[arg-type]
            deviation = estimate.deviation_se
            lines.append(estimate.describe())
        elif check.kind is CheckKind.NATURAL_REPRESENTATION:
            x = check.x if check.x is not None else task.x0
            estimate = check_natural_representation(spec, mu_A, g, check.c, check.alpha, x, sim)  # type: ignore[arg-type]
            deviation = estimate.deviation_se
            lines.append(estimate.describe())
        else:
            if transformed is None:
                transformed = transform(spec, g, task.c)
            if check.kind is CheckKind.MEASURE_CHANGE:
                if check.functional == "hit_before":
                    functional = Functional(kind="hit_before", x=check.x, w=check.w)
                else:
                    functional = Functional(kind="one", interval=(check.a, check.b))
                change = compare_measure_change(transformed, mu_A, task.x0, functional, sim)
                deviation = change.deviation_se
                lines.append(change.describe())
            else:
                law = check_local_time_law(transformed, check.y, sim, check.bound)  # type: ignore[arg-type]
                deviation = law.mean.deviation_se
                lines.append(law.describe())
        if deviation is not None and deviation >= task.threshold:
            flagged = True
        if flagged:
            status = TaskStatus.FLAGGED
        lines.append("FLAG" if flagged else "pass")
    tables: List[TableOutput] = []
    if task.dump_paths and ensemble is not None:
        rows = summary_table(ensemble)
        columns = list(rows[0]) if rows else ["path"]
        tables.append(TableOutput(name="paths", columns=columns, rows=rows))
    return TaskResult(kind="verify", lines=lines, tables=tables, status=status)


def run_task(task: Any, config: Config, spec: Optional[DiffusionSpec] = None) -> TaskResult:
    """Build the diffusion and measure a task needs and dispatch it."""
    spec = spec or config.build_diffusion()
    mu_A = config.build_measure(task.measure, spec)
    logger.info(f"Running {task.kind} on {spec.name}" + (f" with {task.measure}" if task.measure else ""))
    if task.kind == "classify":
        return run_classify(task, spec, mu_A)
    if task.kind == "solve":
        return run_solve(task, spec, mu_A)
    if task.kind == "decompose":
        return run_decompose(task, spec, mu_A if task.measure else None)
    if task.kind == "transform":
        return run_transform(task, spec, mu_A)
    return run_verify(task, spec, mu_A)
