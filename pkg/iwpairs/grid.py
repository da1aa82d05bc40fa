"""
Functions of the state variable sampled on a grid.
"""
import logging
import math
from typing import Any, Callable, Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from .diffusion import ScaleFunction

logger = logging.getLogger(__name__)

Function = Callable[[Any], Any]

MAX_EXTENSION_RATIO = 1.0 + 1e-3


def _frozen(arr: Any) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


class GridFunction(BaseModel):
    """
    A function sampled on a strictly increasing grid.

    Between nodes the function is linear in the scale coordinate s; beyond
    the grid hull it continues with the end-cell slopes. A closed form, when
    present, takes precedence for evaluation.

    ``s_derivatives`` optionally holds exact one-sided s-derivatives at the
    nodes (left, right), as produced by the solver.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: np.ndarray
    values: np.ndarray
    scale: ScaleFunction
    closed_form: Optional[Callable[[Any], Any]] = None
    s_derivatives: Optional[Tuple[np.ndarray, np.ndarray]] = None
    tags: FrozenSet[str] = frozenset()
    metadata: Dict[str, Any] = Field(default_factory=dict)
    name: str = "g"

    _derived: Dict[str, np.ndarray] = PrivateAttr(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            for key in ("grid", "values"):
                if key in data and data[key] is not None:
                    data[key] = _frozen(data[key])
            if data.get("s_derivatives") is not None:
                left, right = data["s_derivatives"]
                data["s_derivatives"] = (_frozen(left), _frozen(right))
            if "tags" in data:
                data["tags"] = frozenset(data["tags"])
        return data

    @model_validator(mode="after")
    def _check(self) -> "GridFunction":
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("grid needs at least two points")
        if self.values.shape != self.grid.shape:
            raise ValueError("values and grid have different shapes")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")
        if self.grid[0] < self.scale.lower or self.grid[-1] > self.scale.upper:
            raise ValueError("grid leaves the state interval")
        return self

    @classmethod
    def from_function(
        cls,
        fn: Function,
        grid: Sequence[float],
        scale: ScaleFunction,
        closed_form: bool = True,
        name: str = "g",
        tags: Iterable[str] = (),
    ) -> "GridFunction":
        """Sample fn on the grid, keeping fn as closed form unless told otherwise."""
        xs = np.asarray(grid, dtype=float)
        with np.errstate(all="ignore"):
            values = np.asarray(fn(xs), dtype=float)
        if values.shape != xs.shape:
            values = np.array([float(fn(x)) for x in xs])
        return cls(
            grid=xs,
            values=values,
            scale=scale,
            closed_form=fn if closed_form else None,
            name=name,
            tags=frozenset(tags),
        )

    @property
    def s_grid(self) -> np.ndarray:
        return self._cache("s_grid", lambda: _frozen(_scale_at_nodes(self.scale, self.grid)))

    @property
    def slopes(self) -> np.ndarray:
        """Cell difference quotients of value against s."""
        return self._cache("slopes", lambda: _frozen(np.diff(self.values) / np.diff(self.s_grid)))

    def _cache(self, key: str, build: Callable[[], np.ndarray]) -> np.ndarray:
        store = self._derived
        if key not in store:
            store[key] = build()
        return store[key]

    def __call__(self, x: Any) -> Any:
        if self.closed_form is not None:
            with np.errstate(all="ignore"):
                out = self.closed_form(x)
            return out
        return self.interpolate(x)

    def interpolate(self, x: Any) -> Any:
        """Linear interpolation in the s-coordinate, ignoring any closed form."""
        arr = np.asarray(x, dtype=float)
        u = np.asarray(_scale_at_nodes(self.scale, arr), dtype=float)
        su = self.s_grid
        out = np.interp(u, su, self.values)
        q = self.slopes
        out = np.where(u < su[0], self.values[0] + q[0] * (u - su[0]), out)
        out = np.where(u > su[-1], self.values[-1] + q[-1] * (u - su[-1]), out)
        return out if out.ndim else float(out)

    def node_index(self, x: float, tol: float = 1e-12) -> Optional[int]:
        i = int(np.searchsorted(self.grid, x))
        for j in (i - 1, i):
            if 0 <= j < self.grid.size and abs(self.grid[j] - x) <= tol * max(1.0, abs(x)):
                return j
        return None

    def with_values(self, values: Any, **updates: Any) -> "GridFunction":
        data = {
            "grid": self.grid,
            "values": values,
            "scale": self.scale,
            "closed_form": None,
            "s_derivatives": None,
            "tags": self.tags,
            "metadata": {},
            "name": self.name,
        }
        data.update(updates)
        return GridFunction(**data)

    def scaled(self, factor: float) -> "GridFunction":
        closed = None
        if self.closed_form is not None:
            base = self.closed_form
            closed = lambda x: factor * np.asarray(base(x), dtype=float)  # noqa: E731
        derivs = None
        if self.s_derivatives is not None:
            derivs = (factor * self.s_derivatives[0], factor * self.s_derivatives[1])
        return self.with_values(
            factor * self.values,
            closed_form=closed,
            s_derivatives=derivs,
            metadata=dict(self.metadata),
        )

    def minimum(self) -> float:
        return float(np.min(self.values))


def _scale_at_nodes(scale: ScaleFunction, xs: np.ndarray) -> Any:
    arr = np.asarray(xs, dtype=float)
    out = np.asarray(scale(arr), dtype=float)
    if arr.ndim == 0:
        if arr <= scale.lower:
            return scale.limit_left
        if arr >= scale.upper:
            return scale.limit_right
        return float(out)
    if np.any(arr <= scale.lower) or np.any(arr >= scale.upper):
        out = out.copy()
        out[arr <= scale.lower] = scale.limit_left
        out[arr >= scale.upper] = scale.limit_right
    return out


def uniform_grid(lower: float, upper: float, points: int, include: Iterable[float] = ()) -> np.ndarray:
    """Evenly spaced grid with extra nodes (e.g. atom locations) merged in."""
    base = np.linspace(lower, upper, int(points))
    return merge_nodes(base, include)


def geometric_grid(
    lower: float, upper: float, points: int, anchor: float = 0.0, include: Iterable[float] = ()
) -> np.ndarray:
    """Grid geometric in the distance to ``anchor`` (an endpoint below ``lower``)."""
    if not anchor < lower < upper:
        raise ValueError("geometric grid needs anchor < lower < upper")
    base = anchor + np.geomspace(lower - anchor, upper - anchor, int(points))
    return merge_nodes(base, include)


def merge_nodes(base: np.ndarray, include: Iterable[float]) -> np.ndarray:
    extra = [float(p) for p in include if base[0] < p < base[-1]]
    if not extra:
        return np.asarray(base, dtype=float)
    merged = np.unique(np.concatenate([base, extra]))
    # drop base nodes that nearly coincide with a requested node
    keep = np.ones(merged.size, dtype=bool)
    spacing = np.min(np.diff(base)) if base.size > 1 else 1.0
    for p in extra:
        close = np.abs(merged - p) < 1e-9 * max(1.0, abs(p), spacing)
        close &= merged != p
        keep &= ~close
    return merged[keep]


def extend_grid(grid: np.ndarray, target: float, side: str, scale: ScaleFunction) -> np.ndarray:
    """
    Extend a grid toward ``target`` (a truncation point).

    Toward a finite endpoint of the state space the extension is geometric in
    the distance to that endpoint with the ratio of the first cell; toward an
    infinite one it keeps the end spacing.
    """
    grid = np.asarray(grid, dtype=float)
    if side == "left":
        if target >= grid[0]:
            return grid
        end = scale.lower
        if math.isfinite(end):
            ratio = min(max((grid[1] - end) / (grid[0] - end), 1.0 + 1e-4), MAX_EXTENSION_RATIO)
            nodes = [grid[0]]
            while nodes[-1] > target:
                nodes.append(end + (nodes[-1] - end) / ratio)
            nodes[-1] = target
            ext = np.array(nodes[:0:-1])
        else:
            h = grid[1] - grid[0]
            count = int(math.ceil((grid[0] - target) / h))
            ext = grid[0] - h * np.arange(count, 0, -1)
            ext[0] = target
        return np.concatenate([ext, grid])
    if target <= grid[-1]:
        return grid
    end = scale.upper
    if math.isfinite(end):
        ratio = min(max((end - grid[-2]) / (end - grid[-1]), 1.0 + 1e-4), MAX_EXTENSION_RATIO)
        nodes = [grid[-1]]
        while nodes[-1] < target:
            nodes.append(end - (end - nodes[-1]) / ratio)
        nodes[-1] = target
        ext = np.array(nodes[1:])
    else:
        h = grid[-1] - grid[-2]
        count = int(math.ceil((target - grid[-1]) / h))
        ext = grid[-1] + h * np.arange(1, count + 1)
        ext[-1] = target
    return np.concatenate([grid, ext])
