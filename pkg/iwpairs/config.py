"""
Config files: TOML parsed with tomli, validated into pydantic models, dumped with tomli_w.

Layout::

    [diffusion]              catalog name, or interval + scale + speed
    [measures.<name>]        catalog name, or density / table / steps + atoms
    [task] or [[tasks]]      one task, or an ordered pipeline
    [task.grid]              grid of the state variable
    [task.simulation]        Monte Carlo parameters (verify)
    [[task.checks]]          Monte Carlo checks (verify)
    [output]                 directory and precision of CSV tables
"""
import logging
import math
import re
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import catalog
from .diffusion import AnalyticScale, DiffusionSpec, TableScale
from .exceptions import ConfigParseError, PreconditionError
from .expressions import Expression, compile_expression
from .grid import geometric_grid, uniform_grid
from .measures import Density, ExpressionDensity, RadonMeasure, StepDensity, SumDensity, TableDensity
from .montecarlo import SimConfig
from .solver import Direction, IterationMethod
from .utils import DEFAULT_PRECISION, read_file_content

logger = logging.getLogger(__name__)

CATALOG_PREFIX = "catalog:"

Pair = Tuple[float, float]


def _expression(value: Optional[str]) -> Optional[str]:
    if value is not None:
        compile_expression(value)
    return value


class Table(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: List[float]
    values: List[float]

    @model_validator(mode="after")
    def _check(self) -> "Table":
        if len(self.x) != len(self.values) or len(self.x) < 2:
            raise ValueError("a table needs matching x and values of length >= 2")
        return self


class Steps(BaseModel):
    model_config = ConfigDict(frozen=True)

    edges: List[float]
    levels: List[float]
    #: levels are densities against s(dy) rather than dy
    in_scale: bool = False


class DiffusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    catalog: Optional[str] = None
    name: Optional[str] = None
    lower: float = -math.inf
    upper: float = math.inf
    scale: Optional[str] = None
    scale_inverse: Optional[str] = None
    scale_derivative: Optional[str] = None
    scale_limits: Optional[Pair] = None
    scale_table: Optional[Table] = None
    speed: Optional[str] = None
    speed_table: Optional[Table] = None

    check_expressions = field_validator("scale", "scale_inverse", "scale_derivative", "speed")(_expression)

    @model_validator(mode="after")
    def _check(self) -> "DiffusionConfig":
        if self.catalog is not None:
            if self.catalog not in catalog.DIFFUSIONS:
                raise ValueError(f"unknown catalog diffusion {self.catalog!r}")
            return self
        if (self.scale is None) == (self.scale_table is None):
            raise ValueError("give exactly one of scale and scale_table")
        if (self.speed is None) == (self.speed_table is None):
            raise ValueError("give exactly one of speed and speed_table")
        return self

    def build(self) -> DiffusionSpec:
        if self.catalog is not None:
            spec = catalog.diffusion(self.catalog)
            return spec if self.name is None else spec.model_copy(update={"name": self.name})
        if self.scale_table is not None:
            scale: Any = TableScale(
                self.scale_table.x, self.scale_table.values, self.lower, self.upper, self.scale_limits
            )
        else:
            assert self.scale is not None
            scale = AnalyticScale(
                compile_expression(self.scale),
                inverse=compile_expression(self.scale_inverse) if self.scale_inverse else None,
                derivative=compile_expression(self.scale_derivative) if self.scale_derivative else None,
                lower=self.lower,
                upper=self.upper,
                limits=self.scale_limits,
            )
        if self.speed_table is not None:
            density: Density = TableDensity(self.speed_table.x, self.speed_table.values)
        else:
            assert self.speed is not None
            density = ExpressionDensity(compile_expression(self.speed))
        speed = RadonMeasure(lower=self.lower, upper=self.upper, density=density, label=f"m = {density.describe()}")
        return DiffusionSpec(lower=self.lower, upper=self.upper, scale=scale, speed=speed, name=self.name or "diffusion")


class MeasureConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    catalog: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    density: Optional[str] = None
    table: Optional[Table] = None
    steps: Optional[Steps] = None
    atoms: List[Pair] = Field(default_factory=list)
    overrides: Dict[str, str] = Field(default_factory=dict)
    label: Optional[str] = None

    check_density = field_validator("density")(_expression)

    @model_validator(mode="after")
    def _check(self) -> "MeasureConfig":
        if self.catalog is not None and self.catalog not in catalog.MEASURES:
            raise ValueError(f"unknown catalog measure {self.catalog!r}")
        return self

    def build(self, spec: DiffusionSpec) -> RadonMeasure:
        if self.catalog is not None:
            mu = catalog.measure(self.catalog, **self.params)
            if (mu.lower, mu.upper) != (spec.lower, spec.upper):
                raise PreconditionError(
                    f"catalog measure {self.catalog} lives on ({mu.lower}, {mu.upper}), "
                    f"the diffusion on ({spec.lower}, {spec.upper})",
                    rule="the Revuz measure and the diffusion share the state interval",
                )
            updates: Dict[str, Any] = {}
            if self.atoms:
                updates["atoms"] = tuple(mu.atoms) + tuple(self.atoms)
            if self.overrides:
                updates["overrides"] = {**mu.overrides, **self.overrides}
            if self.label:
                updates["label"] = self.label
            if not updates:
                return mu
            return RadonMeasure(
                lower=mu.lower,
                upper=mu.upper,
                density=mu.density,
                atoms=updates.get("atoms", mu.atoms),
                overrides=updates.get("overrides", mu.overrides),
                label=updates.get("label", mu.label),
            )
        parts: List[Density] = []
        if self.density is not None:
            parts.append(ExpressionDensity(compile_expression(self.density)))
        if self.table is not None:
            parts.append(TableDensity(self.table.x, self.table.values))
        if self.steps is not None:
            if self.steps.in_scale:
                parts.append(StepDensity(self.steps.edges, self.steps.levels, spec.scale, spec.scale.derivative))
            else:
                parts.append(StepDensity(self.steps.edges, self.steps.levels))
        density: Optional[Density] = None
        if len(parts) == 1:
            density = parts[0]
        elif parts:
            density = SumDensity(parts)
        return RadonMeasure(
            lower=spec.lower,
            upper=spec.upper,
            density=density,
            atoms=tuple(self.atoms),
            overrides=dict(self.overrides),
            label=self.label or "",
        )


class GridKind(str, Enum):
    UNIFORM = "uniform"
    GEOMETRIC = "geometric"


class GridConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: Optional[float] = None
    upper: Optional[float] = None
    points: int = Field(default=201, ge=3)
    kind: GridKind = GridKind.UNIFORM
    anchor: float = 0.0
    nodes: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check(self) -> "GridConfig":
        if self.nodes is None and (self.lower is None or self.upper is None):
            raise ValueError("a grid needs lower and upper, or explicit nodes")
        if self.nodes is None and not self.lower < self.upper:  # type: ignore[operator]
            raise ValueError(f"grid bounds ({self.lower}, {self.upper}) are empty")
        return self

    def build(self, include: Sequence[float] = ()) -> np.ndarray:
        if self.nodes is not None:
            return np.unique(np.asarray(list(self.nodes) + list(include), dtype=float))
        assert self.lower is not None and self.upper is not None
        if self.kind is GridKind.GEOMETRIC:
            return geometric_grid(self.lower, self.upper, self.points, self.anchor, include)
        return uniform_grid(self.lower, self.upper, self.points, include)


class SolveMode(str, Enum):
    PAIR = "pair"
    EQUATION = "equation"
    NATURAL = "natural"


class _TaskBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    measure: Optional[str] = None
    name: Optional[str] = None


class ClassifyTask(_TaskBase):
    kind: Literal["classify"] = "classify"
    b: Optional[float] = None


class _GridTask(_TaskBase):
    grid: GridConfig = Field(default_factory=lambda: GridConfig(lower=-5.0, upper=5.0))
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=100_000, ge=1)


class _PairSource(_GridTask):
    """Where the function g comes from: an expression, or lambda1 psi + lambda2 phi."""

    function: Optional[str] = None
    c: float = 0.0
    alpha_psi: float = Field(default=1.0, gt=0.0)
    alpha_phi: float = Field(default=1.0, gt=0.0)
    regular: Dict[str, Pair] = Field(default_factory=dict)
    lambda1: Optional[float] = Field(default=None, ge=0.0)
    lambda2: Optional[float] = Field(default=None, ge=0.0)

    check_function = field_validator("function")(_expression)

    @field_validator("regular")
    @classmethod
    def _sides(cls, value: Dict[str, Pair]) -> Dict[str, Pair]:
        for side in value:
            if side not in ("left", "right"):
                raise ValueError(f"regular boundary data is keyed by 'left' or 'right', not {side!r}")
        return value


class SolveTask(_PairSource):
    kind: Literal["solve"] = "solve"
    mode: SolveMode = SolveMode.PAIR
    direction: Direction = Direction.INCREASING
    a: float = Field(default=1.0, ge=0.0)
    kappa: float = Field(default=0.0, ge=0.0)
    method: IterationMethod = IterationMethod.GAUSS_SEIDEL
    endpoint: Literal["left", "right"] = "left"
    alpha: float = Field(default=1.0, gt=0.0)
    expected: Optional[str] = None
    expected_psi: Optional[str] = None
    expected_phi: Optional[str] = None
    expected_tol: float = Field(default=1e-6, gt=0.0)

    check_expected = field_validator("expected", "expected_psi", "expected_phi")(_expression)


class DecomposeTask(_GridTask):
    kind: Literal["decompose"] = "decompose"
    function: str

    check_function = field_validator("function")(_expression)


class TransformTask(_PairSource):
    kind: Literal["transform"] = "transform"
    points: List[float] = Field(default_factory=list)
    hitting: List[Pair] = Field(default_factory=list)
    local_times: List[float] = Field(default_factory=list)


class CheckKind(str, Enum):
    MARTINGALE = "martingale"
    LAST_PASSAGE = "last_passage"
    VANISHING = "vanishing"
    MEASURE_CHANGE = "measure_change"
    CALIBRATE = "calibrate"
    NATURAL_REPRESENTATION = "natural_representation"
    LOCAL_TIME_LAW = "local_time_law"


class CheckConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: CheckKind
    a: Optional[float] = None
    b: Optional[float] = None
    y: Optional[float] = None
    z: Optional[float] = None
    x: Optional[float] = None
    w: Optional[float] = None
    c: Optional[float] = None
    alpha: Optional[float] = None
    bound: Optional[float] = None
    functional: Literal["hit_before", "one"] = "hit_before"

    @model_validator(mode="after")
    def _check(self) -> "CheckConfig":
        needed = {
            CheckKind.MARTINGALE: ("a", "b"),
            CheckKind.LAST_PASSAGE: ("y", "z"),
            CheckKind.VANISHING: (),
            CheckKind.CALIBRATE: ("y", "a", "b"),
            CheckKind.NATURAL_REPRESENTATION: ("c", "alpha"),
            CheckKind.LOCAL_TIME_LAW: ("y", "bound"),
            CheckKind.MEASURE_CHANGE: ("x", "w") if self.functional == "hit_before" else ("a", "b"),
        }[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"check {self.kind.value} needs {', '.join(missing)}")
        return self


class VerifyTask(_PairSource):
    kind: Literal["verify"] = "verify"
    x0: float = 0.0
    simulation: SimConfig = Field(default_factory=SimConfig)
    checks: List[CheckConfig] = Field(default_factory=list)
    threshold: float = Field(default=3.0, gt=0.0)
    dump_paths: bool = False


TaskConfig = Annotated[
    Union[ClassifyTask, SolveTask, DecomposeTask, TransformTask, VerifyTask],
    Field(discriminator="kind"),
]


class OutputConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dir: Optional[str] = None
    precision: int = Field(default=DEFAULT_PRECISION, ge=1, le=17)


class Config(BaseModel):
    """A parsed config: one diffusion, named measures, and one task or a pipeline."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    diffusion: DiffusionConfig
    measures: Dict[str, MeasureConfig] = Field(default_factory=dict)
    task: Optional[TaskConfig] = None
    tasks: List[TaskConfig] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _check(self) -> "Config":
        if (self.task is None) == (not self.tasks):
            raise ValueError("give exactly one [task] table or a [[tasks]] pipeline")
        for task in self.pipeline():
            if task.measure is not None and task.measure not in self.measures:
                raise ValueError(f"task {task.kind} refers to undefined measure {task.measure!r}")
            needs_measure = task.kind in ("classify", "solve", "verify") or (
                task.kind == "transform" and task.function is None
            )
            if needs_measure and task.measure is None:
                raise ValueError(f"task {task.kind} needs a measure")
        return self

    def pipeline(self) -> List[Any]:
        return [self.task] if self.task is not None else list(self.tasks)

    def build_diffusion(self) -> DiffusionSpec:
        return self.diffusion.build()

    def build_measure(self, name: Optional[str], spec: DiffusionSpec) -> RadonMeasure:
        if name is None:
            return RadonMeasure.zero(spec.lower, spec.upper)
        return self.measures[name].build(spec)


_TOML_POSITION = re.compile(r"line (\d+), column (\d+)")


def _locate(text: str, loc: Sequence[Any]) -> Optional[int]:
    """Line of the innermost key of a validation error location, when it can be found."""
    lines = text.splitlines()
    for key in reversed([str(part) for part in loc if isinstance(part, str)]):
        pattern = re.compile(rf"^\s*(\"?){re.escape(key)}\1\s*=|^\s*\[+[^\]]*\b{re.escape(key)}\]+\s*$")
        for number, line in enumerate(lines, start=1):
            if pattern.search(line):
                return number
    return None


def parse_config(text: str) -> Config:
    """
    Parse and validate config text.

    Raises:
        ConfigParseError: On TOML syntax errors, invalid fields or expressions
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        column = getattr(e, "colno", None)
        if line is None:
            match = _TOML_POSITION.search(str(e))
            if match:
                line, column = int(match.group(1)), int(match.group(2))
        message = getattr(e, "msg", str(e))
        logger.error(f"Invalid TOML: {message}")
        raise ConfigParseError(f"invalid TOML: {message}", line=line, column=column)
    try:
        return Config.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc", ())
        where = ".".join(str(part) for part in loc)
        column = None
        cause = (first.get("ctx") or {}).get("error")
        if isinstance(cause, ConfigParseError):
            column = cause.column
        message = first.get("msg", str(e))
        logger.error(f"Invalid config at {where}: {message}")
        raise ConfigParseError(f"{where}: {message}", line=_locate(text, loc), column=column)


def load_config(source: str) -> Config:
    """Load a config from a path or from ``catalog:<name>``."""
    if source.startswith(CATALOG_PREFIX):
        name = source[len(CATALOG_PREFIX):]
        try:
            text = catalog.config_text(name)
        except KeyError as e:
            raise ConfigParseError(str(e).strip("'\""))
    else:
        text = read_file_content(source)
    logger.debug(f"Parsing config {source}")
    return parse_config(text)


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Expression):
        return value.source
    if isinstance(value, np.generic):
        return value.item()
    return value


def dump_config(config: Config) -> str:
    """TOML text that parses back to an equivalent config."""
    data = config.model_dump(exclude_none=True)
    if not data.get("tasks"):
        data.pop("tasks", None)
    return tomli_w.dumps(_plain(data))


__all__ = [
    "CATALOG_PREFIX",
    "CheckConfig",
    "CheckKind",
    "ClassifyTask",
    "Config",
    "DecomposeTask",
    "DiffusionConfig",
    "GridConfig",
    "MeasureConfig",
    "OutputConfig",
    "SolveMode",
    "SolveTask",
    "TransformTask",
    "VerifyTask",
    "dump_config",
    "load_config",
    "parse_config",
]
