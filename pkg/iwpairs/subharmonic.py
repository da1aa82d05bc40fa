"""
Nonnegative subharmonic functions: nonnegative and convex in the scale coordinate.

Every such g on (ℓ, r) has the representation

    g(x) = α + κ₁(s(x) - s(ℓ)) + κ₂(s(r) - s(x))
             + ∫(s(x) - s(y))⁺ mu₁(dy) + ∫(s(y) - s(x))⁺ mu₂(dy)

with mu₁ living to the right of a minimiser c* and mu₂ to its left. On a grid
the measures come from the jumps of the cell slopes of g against s.
"""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .diffusion import DiffusionSpec
from .exceptions import (
    InvalidIntervalError,
    NonFiniteError,
    NonIntegrableError,
    NotSubharmonicError,
    UnsupportedError,
)
from .grid import GridFunction
from .measures import RadonMeasure, Side, StepDensity, ramp_integral

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
ATOM_THRESHOLD = 10.0


class SubharmonicCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    ok: bool
    violation: Optional[str] = None
    index: Optional[int] = None
    x: Optional[float] = None
    amount: Optional[float] = None

    def describe(self) -> str:
        if self.ok:
            return "subharmonic"
        return f"not subharmonic: {self.violation} violation at x={self.x:.6g} (by {self.amount:.3g})"


class ChoquetDecomposition(BaseModel):
    """Choquet data (α, κ₁, κ₂, mu₁, mu₂) of a subharmonic grid function."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    alpha: float = Field(ge=0.0)
    kappa1: float = Field(ge=0.0)
    kappa2: float = Field(ge=0.0)
    mu1: RadonMeasure
    mu2: RadonMeasure
    cstar: float
    s_left: float
    s_right: float
    #: cell slopes at the two ends of the grid (left, right)
    end_slopes: Tuple[float, float] = (0.0, 0.0)
    #: boundary-derivative surrogate for uniform integrability at infinite-scale ends
    ui_surrogate: Dict[str, Optional[bool]] = Field(default_factory=dict)

    def describe(self) -> str:
        lines = [
            f"alpha = {self.alpha:.17g}",
            f"kappa1 = {self.kappa1:.17g}",
            f"kappa2 = {self.kappa2:.17g}",
            f"c* = {self.cstar:.17g}",
            f"mu1: {self.mu1.describe()}",
            f"mu2: {self.mu2.describe()}",
        ]
        for side, flag in self.ui_surrogate.items():
            if flag is not None:
                lines.append(f"{side} end slope -> 0 (u.i. surrogate): {'yes' if flag else 'NO'}")
        return "\n".join(lines)


class BoundaryBehaviour(BaseModel):
    """Values and s-derivatives of g sampled toward one endpoint."""

    model_config = ConfigDict(frozen=True)

    side: Side
    points: List[float]
    values: List[float]
    slopes: List[float]
    value_trend: str
    slope_trend: str

    @property
    def value_limit(self) -> float:
        return self.values[-1]

    @property
    def slope_limit(self) -> float:
        return self.slopes[-1]


def _side(side: Union[Side, str]) -> Side:
    return side if isinstance(side, Side) else Side.from_name(side)


def check_subharmonic(
    g: GridFunction, spec: Optional[DiffusionSpec] = None, tol: float = DEFAULT_TOL
) -> SubharmonicCheck:
    """
    Check nonnegativity and convexity in s on the grid.

    Convexity means nondecreasing difference quotients of value against
    s(grid); both conditions are checked up to a tolerance relative to the
    size of the data.
    """
    if spec is not None and not g.scale.matches(spec.scale):
        logger.warning(f"{g.name} was sampled with a different scale function than {spec.name}")
    v = g.values
    vmax = max(1.0, float(np.max(np.abs(v))))
    neg = np.nonzero(v < -tol * vmax)[0]
    if neg.size:
        i = int(neg[0])
        return SubharmonicCheck(ok=False, violation="negativity", index=i, x=float(g.grid[i]), amount=float(-v[i]))
    q = g.slopes
    if q.size < 2:
        return SubharmonicCheck(ok=True)
    h_min = float(np.min(np.diff(g.s_grid)))
    noise = 8.0 * np.finfo(float).eps * vmax / h_min
    bound = tol * np.maximum(1.0, np.maximum(np.abs(q[:-1]), np.abs(q[1:]))) + noise
    drops = np.diff(q)
    bad = np.nonzero(drops < -bound)[0]
    if bad.size:
        i = int(bad[0]) + 1
        return SubharmonicCheck(
            ok=False, violation="convexity", index=i, x=float(g.grid[i]), amount=float(-drops[i - 1])
        )
    return SubharmonicCheck(ok=True)


def s_derivative(g: GridFunction, x: float, side: Union[Side, str] = Side.RIGHT) -> float:
    """
    One-sided derivative of g with respect to s at x.

    Closed-form functions are differentiated with shrinking offsets and
    Richardson extrapolation; grid functions use exact solver derivatives when
    present, otherwise the one-sided cell slope refined by a three-point
    formula where no kink lies ahead.

    Raises:
        UnsupportedError: At an endpoint whose scale limit is infinite
        InvalidIntervalError: If x lies outside the state space
    """
    side = _side(side)
    scale = g.scale
    if not scale.lower <= x <= scale.upper:
        raise InvalidIntervalError(f"x={x} lies outside ({scale.lower}, {scale.upper})")
    at_end = x <= scale.lower or x >= scale.upper
    if at_end and not math.isfinite(scale.at(x)):
        logger.error(f"s-derivative requested at {x}, where the scale is infinite")
        raise UnsupportedError(f"s({x}) is infinite")
    if (x <= scale.lower and side is Side.LEFT) or (x >= scale.upper and side is Side.RIGHT):
        raise UnsupportedError(f"no {side.value} derivative at the endpoint {x}")
    if g.closed_form is not None:
        return _closed_form_derivative(g, x, side)
    return _grid_derivative(g, x, side)


def _closed_form_derivative(g: GridFunction, x: float, side: Side, levels: int = 4) -> float:
    scale = g.scale
    fn = g.closed_form
    assert fn is not None
    sign = 1.0 if side is Side.RIGHT else -1.0
    room = (scale.upper - x) if side is Side.RIGHT else (x - scale.lower)
    h0 = min(1e-2 * max(1.0, abs(x)), 0.25 * room)
    ahead = g.grid[g.grid > x] - x if side is Side.RIGHT else x - g.grid[g.grid < x]
    if ahead.size:
        h0 = min(h0, 0.5 * float(np.min(ahead)))
    g0 = float(fn(x))
    u0 = scale.at(x)
    base_ok = math.isfinite(g0) and math.isfinite(u0)
    table: List[List[float]] = []
    for k in range(levels):
        h = h0 / 2.0**k
        x1 = x + sign * h
        if base_ok:
            d = (float(fn(x1)) - g0) / (float(scale(x1)) - u0)
        else:
            x2 = x + sign * 2.0 * h
            d = (float(fn(x2)) - float(fn(x1))) / (float(scale(x2)) - float(scale(x1)))
        row = [d]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - table[k - 1][j - 1]) / (2.0**j - 1.0))
        table.append(row)
    return table[-1][-1]


def _grid_derivative(g: GridFunction, x: float, side: Side) -> float:
    q = g.slopes
    i = g.node_index(x)
    if i is None:
        k = int(np.searchsorted(g.grid, x)) - 1
        return float(q[min(max(k, 0), q.size - 1)])
    if g.s_derivatives is not None:
        left, right = g.s_derivatives
        return float(right[i] if side is Side.RIGHT else left[i])
    n = q.size
    if side is Side.RIGHT:
        if i >= n:
            return float(q[-1])
        own, ahead_idx, behind_idx = i, i + 1, i - 1
        step = 1
    else:
        if i == 0:
            return float(q[0])
        own, ahead_idx, behind_idx = i - 1, i - 2, i
        step = -1
    if not 0 <= ahead_idx < n:
        return float(q[own])
    jump_ahead = abs(q[ahead_idx] - q[own])
    if 0 <= behind_idx < n:
        reference = abs(q[own] - q[behind_idx])
    elif 0 <= ahead_idx + step < n:
        reference = abs(q[ahead_idx + step] - q[ahead_idx])
    else:
        reference = jump_ahead
    tiny = 1e-12 * max(1.0, abs(float(q[own])))
    if jump_ahead > 10.0 * reference + tiny:
        return float(q[own])
    su = g.s_grid
    h1 = abs(su[own + 1] - su[own])
    h2 = abs(su[ahead_idx + 1] - su[ahead_idx])
    return float(q[own] - (q[ahead_idx] - q[own]) * h1 / (h1 + h2))


def _spread_edges(spec: DiffusionSpec, g: GridFunction) -> Tuple[np.ndarray, np.ndarray]:
    """Dual cells [u_i - w_i, u_i + w_i] with w_i half the smaller adjacent s-spacing."""
    su = g.s_grid
    h = np.diff(su)
    w = np.empty_like(su)
    w[1:-1] = 0.5 * np.minimum(h[:-1], h[1:])
    w[0] = w[-1] = 0.0
    lo, hi = su - w, su + w
    if spec.scale.is_identity:
        return lo, hi
    interior = slice(1, -1)
    x_lo, x_hi = g.grid.astype(float).copy(), g.grid.astype(float).copy()
    x_lo[interior] = np.asarray(spec.scale.inverse(lo[interior]), dtype=float)
    x_hi[interior] = np.asarray(spec.scale.inverse(hi[interior]), dtype=float)
    return x_lo, x_hi


def _measure_from_jumps(
    spec: DiffusionSpec,
    g: GridFunction,
    jumps: np.ndarray,
    atom_nodes: np.ndarray,
    edges: Tuple[np.ndarray, np.ndarray],
    label: str,
) -> RadonMeasure:
    x_lo, x_hi = edges
    su = g.s_grid
    atoms: List[Tuple[float, float]] = []
    levels = np.zeros(jumps.size)
    for i, mass in enumerate(jumps):
        if mass <= 0.0:
            continue
        if atom_nodes[i]:
            loc = float(g.grid[i])
            if spec.lower < loc < spec.upper:
                atoms.append((loc, float(mass)))
            continue
        width = float(spec.scale(x_hi[i]) - spec.scale(x_lo[i])) if not spec.scale.is_identity else x_hi[i] - x_lo[i]
        levels[i] = mass / width
    density = None
    if np.any(levels > 0):
        flat_edges = np.column_stack([x_lo, x_hi]).ravel()
        flat_levels = np.column_stack([levels, np.zeros_like(levels)]).ravel()[:-1]
        density = StepDensity(flat_edges, flat_levels, spec.scale, spec.scale.derivative)
    logger.debug(f"{label}: {len(atoms)} atoms, {int(np.count_nonzero(levels))} density cells over {su.size} nodes")
    return RadonMeasure(lower=spec.lower, upper=spec.upper, density=density, atoms=tuple(atoms), label=label)


def _atom_nodes(jumps: np.ndarray, threshold: float) -> np.ndarray:
    n = jumps.size
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        if jumps[i] <= 0.0:
            continue
        neighbours = [jumps[j] for j in (i - 1, i + 1) if 0 <= j < n]
        average = sum(neighbours) / len(neighbours) if neighbours else 0.0
        flags[i] = jumps[i] > threshold * average
    return flags


def choquet_decompose(
    g: GridFunction,
    spec: DiffusionSpec,
    tol: float = DEFAULT_TOL,
    atom_threshold: float = ATOM_THRESHOLD,
) -> ChoquetDecomposition:
    """
    Split a subharmonic grid function into its Choquet data.

    The slope jumps of g against s are split at the leftmost minimiser c*:
    increases of the positive part of the slope form mu₁, increases of the
    negative part form mu₂. A jump larger than ``atom_threshold`` times the
    mean of its neighbours becomes an atom; other jumps are spread uniformly
    in s over a cell centred at the node. End nodes and c* always carry atoms.
    Beyond the grid hull g is continued linearly toward an endpoint of finite
    scale and flat toward an endpoint of infinite scale.

    Raises:
        NotSubharmonicError: If g is negative or not convex in s
    """
    check = check_subharmonic(g, spec, tol)
    if not check.ok:
        logger.error(f"Cannot decompose {g.name}: {check.describe()}")
        raise NotSubharmonicError(check.describe())

    sl, sr = spec.s_left, spec.s_right
    left_finite, right_finite = math.isfinite(sl), math.isfinite(sr)
    q = np.asarray(g.slopes, dtype=float)
    qmax = max(1.0, float(np.max(np.abs(q))))
    q = np.where(np.abs(q) <= 1e-13 * qmax, 0.0, q)

    pos, neg = np.maximum(q, 0.0), np.minimum(q, 0.0)
    pos_outer_left = pos[0] if left_finite else 0.0
    neg_outer_right = neg[-1] if right_finite else 0.0
    kappa1 = float(pos_outer_left)
    kappa2 = float(-neg_outer_right)

    pos_ext = np.concatenate([[pos_outer_left], pos, [pos[-1]]])
    neg_ext = np.concatenate([[neg[0]], neg, [neg_outer_right]])
    jumps1 = np.maximum(np.diff(pos_ext), 0.0)
    jumps2 = np.maximum(np.diff(neg_ext), 0.0)
    noise = 1e-12 * qmax
    jumps1[jumps1 <= noise] = 0.0
    jumps2[jumps2 <= noise] = 0.0

    i_star = int(np.argmin(g.values))
    # flat bottoms: keep the leftmost minimiser
    vmin = g.values[i_star]
    i_star = int(np.nonzero(g.values <= vmin + tol * max(1.0, abs(vmin)))[0][0])

    edges = _spread_edges(spec, g)
    atoms1 = _atom_nodes(jumps1, atom_threshold)
    atoms2 = _atom_nodes(jumps2, atom_threshold)
    for flags in (atoms1, atoms2):
        flags[0] = flags[-1] = flags[i_star] = True
    mu1 = _measure_from_jumps(spec, g, jumps1, atoms1, edges, "mu1")
    mu2 = _measure_from_jumps(spec, g, jumps2, atoms2, edges, "mu2")

    u_star = float(g.s_grid[i_star])
    alpha = float(g.values[i_star])
    if kappa1 > 0:
        alpha -= kappa1 * (u_star - sl)
    if kappa2 > 0:
        alpha -= kappa2 * (sr - u_star)
    alpha -= ramp_integral(mu1, spec.scale, float(g.grid[i_star]), Side.LEFT)
    alpha -= ramp_integral(mu2, spec.scale, float(g.grid[i_star]), Side.RIGHT)
    if alpha < -tol * max(1.0, float(np.max(g.values))):
        logger.error(f"Decomposition of {g.name} has alpha={alpha:.6g} < 0")
        raise NotSubharmonicError(
            f"the linear continuation of {g.name} turns negative before the boundary (alpha={alpha:.6g})"
        )
    alpha = max(alpha, 0.0)

    cstar = float(g.grid[i_star])
    if i_star == 0 and q[0] > 0 and left_finite:
        cstar = spec.lower
    elif i_star == g.grid.size - 1 and q[-1] < 0 and right_finite:
        cstar = spec.upper

    ui: Dict[str, Optional[bool]] = {}
    for name, finite, slope in (("left", left_finite, q[0]), ("right", right_finite, q[-1])):
        ui[name] = None if finite else bool(abs(slope) <= 1e-3 * qmax)

    return ChoquetDecomposition(
        alpha=alpha,
        kappa1=kappa1,
        kappa2=kappa2,
        mu1=mu1,
        mu2=mu2,
        cstar=cstar,
        s_left=sl,
        s_right=sr,
        end_slopes=(float(q[0]), float(q[-1])),
        ui_surrogate=ui,
    )


def choquet_reconstruct(d: ChoquetDecomposition, spec: DiffusionSpec, x: Any) -> Any:
    """
    Evaluate the Choquet representation at x (scalar or array).

    Raises:
        NonIntegrableError: If a ramp kernel is not integrable against mu₁ or mu₂
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    for k, xv in enumerate(xs):
        u = spec.scale.at(float(xv))
        value = d.alpha
        if d.kappa1 > 0:
            value += d.kappa1 * (u - d.s_left)
        if d.kappa2 > 0:
            value += d.kappa2 * (d.s_right - u)
        try:
            value += ramp_integral(d.mu1, spec.scale, float(xv), Side.LEFT)
            value += ramp_integral(d.mu2, spec.scale, float(xv), Side.RIGHT)
        except NonFiniteError as e:
            logger.error(f"Choquet kernels do not integrate at x={xv}: {e}")
            raise NonIntegrableError(str(e))
        out[k] = value
    return out if np.ndim(x) else float(out[0])


def compensator_measure(d: ChoquetDecomposition) -> RadonMeasure:
    """Revuz measure mu₁ + mu₂ of the compensator of g(X)."""
    a, b = d.mu1, d.mu2
    da, db = a.density, b.density
    if isinstance(da, StepDensity) and isinstance(db, StepDensity) and np.array_equal(da.edges, db.edges):
        merged: Dict[float, float] = {}
        for loc, m in a.atoms + b.atoms:
            merged[loc] = merged.get(loc, 0.0) + m
        density = StepDensity(da.edges, da.levels + db.levels, da.scale, da._scale_derivative)
        return RadonMeasure(
            lower=a.lower, upper=a.upper, density=density, atoms=tuple(merged.items()), label="mu1 + mu2"
        )
    return a + b


def _trend(magnitudes: Sequence[float], atol: float = 1e-10) -> str:
    if not all(math.isfinite(m) for m in magnitudes):
        return "unbounded"
    first, last = abs(magnitudes[0]), abs(magnitudes[-1])
    peak = max(abs(m) for m in magnitudes)
    if last <= atol + 1e-3 * peak:
        return "vanishing"
    if last >= 100.0 * max(first, atol):
        return "unbounded"
    return "bounded"


def boundary_behaviour(g: GridFunction, spec: DiffusionSpec, side: Union[Side, str]) -> BoundaryBehaviour:
    """
    Sample g and its inward s-derivative along a sequence tending to an endpoint.

    Closed forms are sampled on a geometric sequence (distance halving toward a
    finite endpoint, doubling magnitude toward an infinite one); grid
    functions use their last nodes on that side.
    """
    side = _side(side)
    inward = Side.RIGHT if side is Side.LEFT else Side.LEFT
    if g.closed_form is not None:
        end = spec.lower if side is Side.LEFT else spec.upper
        start = float(g.grid[0] if side is Side.LEFT else g.grid[-1])
        if math.isfinite(end):
            points = [end + (start - end) * 2.0**-k for k in range(0, 24, 2)]
        else:
            sign = -1.0 if side is Side.LEFT else 1.0
            points = [sign * (abs(start) + 1.0) * 2.0**k for k in range(0, 8)]
        values = [float(g(p)) for p in points]
        slopes = [s_derivative(g, p, inward) for p in points]
    else:
        idx = list(range(min(8, g.grid.size)))
        if side is Side.RIGHT:
            idx = [g.grid.size - 1 - i for i in idx]
        idx.reverse()
        points = [float(g.grid[i]) for i in idx]
        values = [float(g.values[i]) for i in idx]
        slopes = [s_derivative(g, p, inward) for p in points]
    return BoundaryBehaviour(
        side=side,
        points=points,
        values=values,
        slopes=slopes,
        value_trend=_trend(values),
        slope_trend=_trend(slopes),
    )
