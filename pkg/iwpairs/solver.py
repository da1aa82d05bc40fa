"""
Monotone solutions of the Itô–Watanabe integral equations.

The increasing equation with data (a, κ) at the left endpoint ℓ reads

    g(x) = a + κ(s(x) - s(ℓ)) + ∫(s(x) - s(y))⁺ g(y) mu_A(dy)

and the decreasing one is its mirror image at r. Both are solved on a grid by
monotone fixed-point iteration of the operator T on the right-hand side. The
grid function is linear in s on each cell, so the kernel integrals reduce to
five per-cell moments of mu_A that are computed once.
"""
import logging
import math
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .boundary import BoundaryClass, BoundaryKind, classify
from .diffusion import DiffusionSpec, green_kernel, hitting_prob
from .exceptions import (
    HypothesisFailsError,
    InadmissibleError,
    InvalidIntervalError,
    NoConvergenceError,
    NonFiniteError,
    NonIntegrableError,
    NotNaturalError,
    PreconditionError,
    SingularError,
    ZeroMeasureError,
)
from .grid import GridFunction, extend_grid, merge_nodes
from .measures import RadonMeasure, Side, integrate
from .subharmonic import BoundaryBehaviour, boundary_behaviour, s_derivative

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
NATURAL_TOL = 1e-9
GRONWALL_FACTOR = 10.0
GAUSS_POINTS = 16
MAX_TRUNCATIONS = 40
MAX_NODES = 2_000_000

_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(GAUSS_POINTS)


class Direction(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"

    @classmethod
    def from_name(cls, name: str) -> "Direction":
        key = name.strip().lower()
        for member in cls:
            if member.value.startswith(key[:3]):
                return member
        raise ValueError(f"Unknown direction: {name}")

    @property
    def boundary(self) -> Side:
        """The endpoint where the boundary data (a, κ) are imposed."""
        return Side.LEFT if self is Direction.INCREASING else Side.RIGHT


class IterationMethod(str, Enum):
    GAUSS_SEIDEL = "gauss-seidel"
    JACOBI = "jacobi"


class NaturalNorm(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    alpha: float = Field(gt=0.0)


class EquationSpec(BaseModel):
    """Direction and boundary data of one integral equation."""

    model_config = ConfigDict(frozen=True)

    direction: Direction = Direction.INCREASING
    a: float = Field(default=0.0, ge=0.0)
    kappa: float = Field(default=0.0, ge=0.0)
    natural_norm: Optional[NaturalNorm] = None

    @model_validator(mode="after")
    def _check(self) -> "EquationSpec":
        if self.a == 0.0 and self.kappa == 0.0 and self.natural_norm is None:
            raise ValueError("a = kappa = 0 without a natural normalisation only admits g = 0")
        return self


class SolveReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction: Direction
    method: IterationMethod
    a: float
    kappa: float
    iterations: int
    increment: float
    residual: float
    relative_residual: float
    monotone: bool
    gronwall_ok: bool
    gronwall_margin: float
    tail_mode: str
    boundary_kind: Optional[str] = None
    truncations: List[float] = Field(default_factory=list)
    truncation_diffs: List[float] = Field(default_factory=list)

    def describe(self) -> str:
        lines = [
            f"direction: {self.direction.value}, a = {self.a:.17g}, kappa = {self.kappa:.17g}",
            f"boundary class: {self.boundary_kind or 'not classified'}",
            f"{self.method.value} iterations: {self.iterations}, last relative increment {self.increment:.3g}",
            f"residual |Tg - g|: {self.residual:.3g} (relative {self.relative_residual:.3g})",
            f"monotone iteration: {'yes' if self.monotone else 'NO'}",
            f"Gronwall bound: {'holds' if self.gronwall_ok else 'VIOLATED'} (margin {self.gronwall_margin:.3g})",
            f"tail treatment: {self.tail_mode}",
        ]
        if self.truncations:
            lines.append(
                f"truncations: {len(self.truncations)}, last at {self.truncations[-1]:.6g}, "
                f"last difference {self.truncation_diffs[-1]:.3g}"
            )
        return "\n".join(lines)


class _Kernel:
    """
    Discretised operator T on working-order nodes.

    The working coordinate is w = s(x) for the increasing equation and
    w = -s(x) for the decreasing one, so both become the increasing equation
    in w. Cell moments of mu_A against θ = (w(y) - w_i) / h_i:
    A = ∫(1-θ), B = ∫θ, C = ∫(1-θ)², D = ∫θ(1-θ).
    """

    def __init__(
        self,
        spec: DiffusionSpec,
        mu: RadonMeasure,
        nodes: np.ndarray,
        direction: Direction,
        truncated: bool = False,
    ) -> None:
        self.direction = direction
        sign = 1.0 if direction is Direction.INCREASING else -1.0
        self.sign = sign
        scale = spec.scale
        x = np.asarray(nodes, dtype=float)
        if direction is Direction.DECREASING:
            x = x[::-1]
        end = spec.lower if direction is Direction.INCREASING else spec.upper
        w_end = spec.s_left if direction is Direction.INCREASING else -spec.s_right

        self.virtual = False
        self.t0 = 0.0
        self.t1 = 0.0
        if truncated:
            self.tail_mode = "truncated"
            w = sign * np.asarray(scale(x), dtype=float)
            self.ref = float(w[0])
        elif math.isfinite(w_end):
            self.tail_mode = "linear to the boundary"
            self.virtual = True
            x = np.concatenate([[end], x])
            w = np.concatenate([[w_end], sign * np.asarray(scale(x[1:]), dtype=float)])
            self.ref = w_end
        else:
            self.tail_mode = "constant beyond the grid"
            w = sign * np.asarray(scale(x), dtype=float)
            self.ref = -math.inf
            self.t0, self.t1 = self._tail_constants(spec, mu, x[0], float(w[0]))

        self.x = x
        self.w = w
        self.h = np.diff(w)
        if np.any(self.h <= 0):
            raise InvalidIntervalError("grid nodes must be distinct in the scale coordinate")
        self.A, self.B, self.C, self.D = self._moments(spec, mu)
        self.atom = np.zeros(x.size)
        for loc, mass in mu.atoms:
            k = np.nonzero(np.abs(x - loc) <= 1e-12 * max(1.0, abs(loc)))[0]
            if k.size:
                self.atom[int(k[0])] += mass

    def _tail_constants(self, spec: DiffusionSpec, mu: RadonMeasure, x0: float, w0: float) -> Tuple[float, float]:
        sign = self.sign
        kernel = lambda y: w0 - sign * float(spec.scale(y))  # noqa: E731
        try:
            if self.direction is Direction.INCREASING:
                t0 = mu.mass(spec.lower, x0)
                t1 = integrate(mu, kernel, spec.lower, x0)
            else:
                at_node = sum(m for loc, m in mu.atoms if loc == x0)
                t0 = mu.mass(x0, spec.upper) + at_node
                t1 = integrate(mu, kernel, x0, spec.upper)
        except NonFiniteError as e:
            logger.error(f"Tail of mu_A beyond the grid is not integrable: {e}")
            raise NonIntegrableError(f"tail integral beyond x={x0} diverges: {e}")
        return float(t0), float(t1)

    def _moments(self, spec: DiffusionSpec, mu: RadonMeasure) -> Tuple[np.ndarray, ...]:
        n = self.h.size
        A, B, C, D = (np.zeros(n) for _ in range(4))
        density = mu.density
        first = 1 if self.virtual else 0
        if density is not None and not density.is_zero() and n > first:
            xl, xr = self.x[first:-1], self.x[first + 1:]
            lo, hi = np.minimum(xl, xr), np.maximum(xl, xr)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            Y = mid[:, None] + half[:, None] * _GAUSS_T[None, :]
            with np.errstate(all="ignore"):
                f = np.asarray(density(Y.ravel()), dtype=float).reshape(Y.shape)
                wy = self.sign * np.asarray(spec.scale(Y.ravel()), dtype=float).reshape(Y.shape)
            f = np.nan_to_num(f, nan=0.0, posinf=0.0, neginf=0.0)
            theta = (wy - self.w[first:-1, None]) / self.h[first:, None]
            weights = half[:, None] * _GAUSS_W[None, :] * f
            A[first:] = np.sum(weights * (1.0 - theta), axis=1)
            B[first:] = np.sum(weights * theta, axis=1)
            C[first:] = np.sum(weights * (1.0 - theta) ** 2, axis=1)
            D[first:] = np.sum(weights * theta * (1.0 - theta), axis=1)
        if self.virtual:
            A[0], B[0], C[0], D[0] = self._boundary_cell(spec, mu)
        for loc, mass in mu.atoms:
            k = np.nonzero(np.abs(self.x - loc) <= 1e-12 * max(1.0, abs(loc)))[0]
            if k.size and k[0] >= 1:
                B[k[0] - 1] += mass
        return A, B, C, D

    def _boundary_cell(self, spec: DiffusionSpec, mu: RadonMeasure) -> Tuple[float, float, float, float]:
        """Moments of the cell between the endpoint and the first node, by quadrature."""
        h = float(self.h[0])
        w_end = float(self.w[0])
        sign = self.sign
        theta = lambda y: (sign * float(spec.scale(y)) - w_end) / h  # noqa: E731
        lo, hi = sorted((float(self.x[0]), float(self.x[1])))
        moments = [0.0, 0.0, 0.0, 0.0]
        weights = (
            lambda t: 1.0 - t,
            lambda t: t,
            lambda t: (1.0 - t) ** 2,
            lambda t: t * (1.0 - t),
        )
        density = mu.density
        if density is not None and not density.is_zero():
            try:
                for k, wfn in enumerate(weights):
                    moments[k] = density.integrate(lambda y: wfn(theta(y)), lo, hi, mu.epsabs, mu.epsrel)
            except NonFiniteError as e:
                logger.error(f"mu_A is not integrable next to the boundary: {e}")
                raise NonIntegrableError(f"kernel integral between the boundary and x={self.x[1]} diverges")
        for loc, mass in mu.atoms:
            if lo < loc < hi:
                t = theta(loc)
                for k, wfn in enumerate(weights):
                    moments[k] += wfn(t) * mass
        return moments[0], moments[1], moments[2], moments[3]

    def base(self, a: float, kappa: float) -> np.ndarray:
        if kappa == 0.0:
            return np.full(self.w.size, a)
        return a + kappa * (self.w - self.ref)

    def apply(self, g: np.ndarray, a: float, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
        """(Tg, M) with M_j = ∫ g dmu_A up to and including node j."""
        cell_mass = g[:-1] * self.A + g[1:] * self.B
        M = g[0] * self.t0 + np.concatenate([[0.0], np.cumsum(cell_mass)])
        cell_ramp = self.h * M[:-1] + self.h * (g[:-1] * self.C + g[1:] * self.D)
        ramp = g[0] * self.t1 + np.concatenate([[0.0], np.cumsum(cell_ramp)])
        return self.base(a, kappa) + ramp, M

    def sweep(self, g: np.ndarray, a: float, kappa: float) -> np.ndarray:
        """One Gauss-Seidel pass of T: nodes are updated left to right with fresh values."""
        base = self.base(a, kappa).tolist()
        A, B, C, D, h = (v.tolist() for v in (self.A, self.B, self.C, self.D, self.h))
        old = g.tolist()
        new = [0.0] * len(old)
        new[0] = base[0] + old[0] * self.t1
        M = new[0] * self.t0
        ramp = new[0] * self.t1
        for i in range(len(old) - 1):
            ramp = ramp + h[i] * M + h[i] * (new[i] * C[i] + old[i + 1] * D[i])
            new[i + 1] = base[i + 1] + ramp
            M = M + new[i] * A[i] + new[i + 1] * B[i]
        return np.asarray(new)

    def ramp_of_ones(self) -> np.ndarray:
        """∫(w_j - w(y))⁺ mu_A(dy), the exponent of the Gronwall bound."""
        ones = np.ones(self.w.size)
        return self.apply(ones, 0.0, 0.0)[0]


class _Solution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    report: SolveReport


def _iterate(
    kernel: _Kernel,
    a: float,
    kappa: float,
    tol: float,
    max_iter: int,
    method: IterationMethod,
    initial: Optional[np.ndarray] = None,
) -> _Solution:
    base = kernel.base(a, kappa)
    if initial is not None:
        g = np.asarray(initial, dtype=float).copy()
    elif a > 0:
        g = np.full(kernel.w.size, a)
    else:
        g = base.copy()
    with np.errstate(over="ignore"):
        bound = base * np.exp(kernel.ramp_of_ones())
        ceiling = GRONWALL_FACTOR * bound
        slack = bound * (1.0 + 1e-9)
    monotone = True
    increment = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if method is IterationMethod.GAUSS_SEIDEL:
            new = kernel.sweep(g, a, kappa)
        else:
            new = kernel.apply(g, a, kappa)[0]
        if not np.all(np.isfinite(new)):
            logger.error(f"Iterate {iterations} left the floating point range")
            raise NoConvergenceError(f"iterate {iterations} overflowed")
        scale = max(float(np.max(np.abs(new))), 1e-300)
        if np.any(new < g - 1e-12 * scale):
            if monotone:
                logger.warning(f"Iteration {iterations} decreased the iterate somewhere")
            monotone = False
        if np.any(new > ceiling + 1e-12 * scale):
            worst = int(np.argmax(new - ceiling))
            logger.error(f"Iterate {iterations} exceeds {GRONWALL_FACTOR:g}x the Gronwall bound")
            raise NoConvergenceError(
                f"iterate {iterations} exceeds {GRONWALL_FACTOR:g} times the a-priori bound at "
                f"x={kernel.x[worst]:.6g} ({new[worst]:.6g} > {bound[worst]:.6g})"
            )
        increment = float(np.max(np.abs(new - g))) / scale
        g = new
        if iterations % 1000 == 0:
            logger.debug(f"iteration {iterations}: relative increment {increment:.3g}")
        if increment < tol:
            break
    else:
        logger.error(f"No convergence after {max_iter} iterations (increment {increment:.3g})")
        raise NoConvergenceError(f"relative increment {increment:.3g} after {max_iter} iterations")

    Tg, M = kernel.apply(g, a, kappa)
    residual = float(np.max(np.abs(Tg - g)))
    scale = max(float(np.max(np.abs(g))), 1e-300)
    with np.errstate(invalid="ignore"):
        margin = float(np.nanmin(np.where(bound > 0, (bound - g) / bound, np.inf)))
    gronwall_ok = bool(np.all(g <= slack + 1e-12 * scale))

    d_plus = kappa + M
    d_minus = d_plus - kernel.atom * g
    x = kernel.x
    if kernel.direction is Direction.INCREASING:
        left, right = d_minus, d_plus
    else:
        left, right = -d_plus, -d_minus
    values = g
    if kernel.virtual:
        x, values, left, right = x[1:], values[1:], left[1:], right[1:]
    if kernel.direction is Direction.DECREASING:
        x, values, left, right = x[::-1], values[::-1], left[::-1], right[::-1]

    report = SolveReport(
        direction=kernel.direction,
        method=method,
        a=a,
        kappa=kappa,
        iterations=iterations,
        increment=increment,
        residual=residual,
        relative_residual=residual / scale,
        monotone=monotone,
        gronwall_ok=gronwall_ok,
        gronwall_margin=margin if math.isfinite(margin) else 1.0,
        tail_mode=kernel.tail_mode,
    )
    return _Solution(x=x, values=values, left=left, right=right, report=report)


def prepare_grid(spec: DiffusionSpec, mu_A: RadonMeasure, grid: Sequence[float], extra: Iterable[float] = ()) -> np.ndarray:
    """
    Sorted interior grid with the atoms of mu_A, density breakpoints and the
    requested extra points merged in as nodes. Endpoints are dropped.
    """
    xs = np.unique(np.asarray(grid, dtype=float))
    if xs.size < 2:
        raise InvalidIntervalError("the grid needs at least two points")
    if xs[0] < spec.lower or xs[-1] > spec.upper:
        raise InvalidIntervalError(f"grid [{xs[0]}, {xs[-1]}] leaves ({spec.lower}, {spec.upper})")
    xs = xs[(xs > spec.lower) & (xs < spec.upper)]
    if xs.size < 2:
        raise InvalidIntervalError("the grid needs at least two interior points")
    include = list(mu_A.atom_locations) + list(extra)
    if mu_A.density is not None:
        include += list(mu_A.density.breakpoints)
    return merge_nodes(xs, include)


def _check_admissible(spec: DiffusionSpec, eq: EquationSpec, cls: BoundaryClass) -> None:
    side = eq.direction.boundary
    limit = spec.s_left if side is Side.LEFT else spec.s_right
    if eq.kappa > 0 and not math.isfinite(limit):
        logger.error(f"kappa={eq.kappa} imposed where the scale is infinite")
        raise InadmissibleError(
            f"kappa must vanish at the {side.value} endpoint because its scale limit is infinite",
            rule="boundary slope data need a finite scale limit",
        )
    if cls.kind is BoundaryKind.A_EXIT and eq.a > 0:
        logger.error(f"a={eq.a} imposed at an A-exit boundary")
        raise InadmissibleError(
            f"the {side.value} endpoint is A-exit, so g vanishes there and a must be 0",
            rule="g(l+) = 0 at an A-exit boundary",
        )
    if cls.kind is BoundaryKind.A_ENTRANCE and eq.kappa > 0:
        logger.error(f"kappa={eq.kappa} imposed at an A-entrance boundary")
        raise InadmissibleError(
            f"the {side.value} endpoint is A-entrance, so the boundary slope must be 0",
            rule="d+g/ds(l+) = 0 at an A-entrance boundary",
        )
    if cls.kind is BoundaryKind.A_NATURAL:
        raise InadmissibleError(
            f"the {side.value} endpoint is A-natural: use a = kappa = 0 with a normalisation g(c) = alpha",
            rule="g(l+) = d+g/ds(l+) = 0 at an A-natural boundary",
        )


def _to_grid_function(spec: DiffusionSpec, sol: _Solution, name: str, metadata: Dict[str, Any]) -> GridFunction:
    direction = sol.report.direction
    tag = "nondecreasing" if direction is Direction.INCREASING else "nonincreasing"
    return GridFunction(
        grid=sol.x,
        values=sol.values,
        scale=spec.scale,
        s_derivatives=(sol.left, sol.right),
        tags={"subharmonic", tag},
        metadata={"report": sol.report, **metadata},
        name=name,
    )


def _median_node(nodes: np.ndarray) -> float:
    return float(nodes[nodes.size // 2])


def solve(
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    eq: EquationSpec,
    grid: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    method: Union[IterationMethod, str] = IterationMethod.GAUSS_SEIDEL,
    initial: Optional[Sequence[float]] = None,
    boundary: Optional[BoundaryClass] = None,
    b: Optional[float] = None,
) -> GridFunction:
    """
    Solve one integral equation by monotone iteration.

    Args:
        spec: The diffusion
        mu_A: Revuz measure of the additive functional
        eq: Direction and boundary data
        grid: Points at which the solution is computed
        tol: Stop when the sup-norm relative increment drops below this
        max_iter: Iteration cap
        method: Gauss-Seidel sweeps (default) or plain Jacobi iteration of T
        initial: Starting iterate on the prepared grid (must lie below the solution)
        boundary: Pre-computed classification of the relevant endpoint
        b: Reference point for the classification, defaults to the median node

    Returns:
        The solution with a ``SolveReport`` under ``metadata["report"]``

    Raises:
        ZeroMeasureError: If mu_A vanishes
        InadmissibleError: If (a, κ) contradict the boundary class
        HypothesisFailsError: If a > 0 = κ and ∫(s(b) - s(y)) mu_A(dy) diverges at the boundary
        NoConvergenceError: If the iteration does not settle
    """
    method = IterationMethod(method)
    if mu_A.is_zero():
        logger.error("Integral equation with a zero Revuz measure")
        raise ZeroMeasureError("mu_A(l, r) = 0")
    side = eq.direction.boundary
    extra = [eq.natural_norm.c] if eq.natural_norm is not None else []
    nodes = prepare_grid(spec, mu_A, grid, extra)
    if boundary is None:
        boundary = classify(spec, mu_A, side, _median_node(nodes) if b is None else b)

    if eq.natural_norm is not None:
        if boundary.kind is not BoundaryKind.A_NATURAL:
            if eq.a == 0.0 and eq.kappa == 0.0:
                logger.error(f"Natural normalisation requested at a {boundary.kind.value} boundary")
                raise NotNaturalError(f"the {side.value} endpoint is {boundary.kind.value}")
        else:
            return solve_natural(
                spec, mu_A, side, eq.natural_norm.c, eq.natural_norm.alpha, nodes,
                tol=max(tol, NATURAL_TOL), max_iter=max_iter, boundary=boundary,
            )

    _check_admissible(spec, eq, boundary)
    if eq.a > 0 and eq.kappa == 0 and not boundary.verdict_e.is_finite:
        logger.error("The e-integral diverges, so a > 0 with kappa = 0 has no solution")
        raise HypothesisFailsError(f"∫(s(b) - s(y)) mu_A(dy) diverges at the {side.value} endpoint")

    kernel = _Kernel(spec, mu_A, nodes, eq.direction)
    start = None
    if initial is not None:
        start = np.asarray(initial, dtype=float)
        if eq.direction is Direction.DECREASING:
            start = start[::-1]
        if kernel.virtual:
            start = np.concatenate([[eq.a], start])
    sol = _iterate(kernel, eq.a, eq.kappa, tol, max_iter, method, start)
    report = sol.report.model_copy(update={"boundary_kind": boundary.kind.value})
    sol = sol.model_copy(update={"report": report})
    logger.info(
        f"Solved the {eq.direction.value} equation on {nodes.size} nodes in {report.iterations} iterations "
        f"(residual {report.relative_residual:.3g})"
    )
    name = "psi" if eq.direction is Direction.INCREASING else "phi"
    return _to_grid_function(spec, sol, name, {"equation": eq, "boundary": boundary})


def apply_T(spec: DiffusionSpec, mu_A: RadonMeasure, eq: EquationSpec, g: GridFunction) -> GridFunction:
    """
    Apply the operator T once to a nonnegative grid function.

    The kernel integrals are evaluated cellwise against the linear-in-s
    interpolant of g, so g's grid must contain the atoms of mu_A.

    Raises:
        PreconditionError: If g is negative somewhere
        NonIntegrableError: If the tail of mu_A beyond the grid is not integrable
    """
    if np.any(g.values < 0):
        raise PreconditionError(f"{g.name} must be nonnegative")
    nodes = np.asarray(g.grid, dtype=float)
    for loc in mu_A.atom_locations:
        if nodes[0] <= loc <= nodes[-1] and np.min(np.abs(nodes - loc)) > 1e-12 * max(1.0, abs(loc)):
            raise PreconditionError(f"atom at {loc} is not a grid node")
    kernel = _Kernel(spec, mu_A, nodes, eq.direction)
    values = np.asarray(g.values, dtype=float)
    if eq.direction is Direction.DECREASING:
        values = values[::-1]
    if kernel.virtual:
        values = np.concatenate([[eq.a], values])
    Tg = kernel.apply(values, eq.a, eq.kappa)[0]
    if kernel.virtual:
        Tg = Tg[1:]
    if eq.direction is Direction.DECREASING:
        Tg = Tg[::-1]
    return g.with_values(Tg, name=f"T{g.name}")


def truncation_schedule(
    spec: DiffusionSpec, nodes: Sequence[float], endpoint: Side, count: int = MAX_TRUNCATIONS
) -> List[float]:
    """Truncation points approaching the endpoint geometrically in the s-coordinate."""
    scale = spec.scale
    nodes = np.asarray(nodes, dtype=float)
    if endpoint is Side.LEFT:
        s0, limit = float(scale(nodes[0])), spec.s_left
        if math.isfinite(limit):
            targets = [limit + (s0 - limit) * 2.0**-k for k in range(1, count + 1)]
        else:
            targets = [s0 - 2.0 ** (k - 1) for k in range(1, count + 1)]
    else:
        s0, limit = float(scale(nodes[-1])), spec.s_right
        if math.isfinite(limit):
            targets = [limit - (limit - s0) * 2.0**-k for k in range(1, count + 1)]
        else:
            targets = [s0 + 2.0 ** (k - 1) for k in range(1, count + 1)]
    points = [float(scale.inverse(u)) for u in targets]
    inside = [p for p in points if spec.lower < p < spec.upper]
    # the inverse saturates once the targets pass the representable range
    return list(dict.fromkeys(inside))


def _extension_size(spec: DiffusionSpec, nodes: np.ndarray, target: float, side: Side) -> float:
    """Rough node count of the grid extension down to a truncation point."""
    if side is Side.LEFT:
        end, inner, h = spec.lower, float(nodes[0]), float(nodes[1] - nodes[0])
    else:
        end, inner, h = spec.upper, float(nodes[-1]), float(nodes[-1] - nodes[-2])
    if not math.isfinite(end):
        return abs(inner - target) / h
    return math.log(abs(inner - end) / abs(target - end)) / math.log1p(1e-4)


def solve_natural(
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    endpoint: Union[Side, str],
    c: float,
    alpha: float,
    grid: Sequence[float],
    schedule: Optional[Sequence[float]] = None,
    tol: float = NATURAL_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    boundary: Optional[BoundaryClass] = None,
) -> GridFunction:
    """
    Solution at an A-natural endpoint normalised by g(c) = alpha.

    For each truncation point a_k the equation with a = 0, κ = 1 at a_k is
    solved on the grid extended down to a_k and rescaled to value alpha at c;
    the first rescaled solution within ``tol`` of its predecessor, pointwise
    relative to its own value at every grid node, is returned.

    Raises:
        NotNaturalError: If the endpoint is not A-natural
        NoConvergenceError: If the schedule is exhausted first
    """
    side = endpoint if isinstance(endpoint, Side) else Side.from_name(endpoint)
    if not alpha > 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    if not spec.lower < c < spec.upper:
        raise InvalidIntervalError(f"c={c} must lie inside ({spec.lower}, {spec.upper})")
    if mu_A.is_zero():
        raise ZeroMeasureError("mu_A(l, r) = 0")
    nodes = prepare_grid(spec, mu_A, grid, [c])
    if boundary is None:
        boundary = classify(spec, mu_A, side, _median_node(nodes))
    if boundary.kind is not BoundaryKind.A_NATURAL:
        logger.error(f"{side.value} endpoint is {boundary.kind.value}, not A-natural")
        raise NotNaturalError(f"the {side.value} endpoint is {boundary.kind.value}")

    direction = Direction.INCREASING if side is Side.LEFT else Direction.DECREASING
    points = list(schedule) if schedule is not None else truncation_schedule(spec, nodes, side)
    c_index = int(np.argmin(np.abs(nodes - c)))
    extra = list(mu_A.atom_locations)
    if mu_A.density is not None:
        extra += list(mu_A.density.breakpoints)

    previous: Optional[np.ndarray] = None
    used: List[float] = []
    diffs: List[float] = []
    for t in points:
        outside = t < nodes[0] if side is Side.LEFT else t > nodes[-1]
        if not outside:
            continue
        if _extension_size(spec, nodes, t, side) > MAX_NODES:
            logger.warning(f"Truncation at {t:.6g} needs more than {MAX_NODES} nodes, stopping")
            break
        ext = merge_nodes(extend_grid(nodes, t, side.value, spec.scale), extra)
        idx = np.searchsorted(ext, nodes)
        kernel = _Kernel(spec, mu_A, ext, direction, truncated=True)
        sol = _iterate(kernel, 0.0, 1.0, 1e-2 * tol, max_iter, IterationMethod.GAUSS_SEIDEL)
        factor = alpha / float(sol.values[idx[c_index]])
        current = sol.values[idx] * factor
        used.append(float(t))
        if previous is not None:
            diff = float(np.max(np.abs(current - previous) / np.maximum(np.abs(current), 1e-300)))
            diffs.append(diff)
            logger.debug(f"truncation at {t:.6g}: relative change {diff:.3g}")
            if diff < tol:
                report = sol.report.model_copy(
                    update={
                        "boundary_kind": boundary.kind.value,
                        "truncations": used,
                        "truncation_diffs": diffs,
                    }
                )
                final = _Solution(
                    x=nodes,
                    values=current,
                    left=sol.left[idx] * factor,
                    right=sol.right[idx] * factor,
                    report=report,
                )
                logger.info(f"A-natural solution converged after {len(used)} truncations")
                name = "psi" if direction is Direction.INCREASING else "phi"
                eq = EquationSpec(direction=direction, natural_norm=NaturalNorm(c=c, alpha=alpha))
                return _to_grid_function(spec, final, name, {"equation": eq, "boundary": boundary})
        previous = current
    logger.error(f"Truncated solutions did not settle after {len(used)} truncation points")
    raise NoConvergenceError(
        f"truncated solutions still differ by {diffs[-1] if diffs else math.inf:.3g} after {len(used)} truncations"
    )


class FundamentalPair(BaseModel):
    """Nondecreasing psi and nonincreasing phi with the classes of both endpoints."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    psi: GridFunction
    phi: GridFunction
    left: BoundaryClass
    right: BoundaryClass
    normalization: Dict[str, float] = Field(default_factory=dict)

    def wronskian(self, x1: float, x2: float) -> float:
        return float(self.psi(x1) * self.phi(x2) - self.psi(x2) * self.phi(x1))

    def describe(self) -> str:
        return (
            f"psi: {self.left.kind.value} at the left end; phi: {self.right.kind.value} at the right end; "
            + ", ".join(f"{k}={v:.6g}" for k, v in self.normalization.items())
        )


def _normalised(g: GridFunction, c: float, alpha: float) -> GridFunction:
    value = float(g(c))
    if not value > 0:
        raise PreconditionError(f"{g.name}({c}) = {value} cannot be normalised")
    if value == alpha:
        return g
    return g.scaled(alpha / value)


def fundamental_pair(
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    c: float,
    grid: Sequence[float],
    alpha_psi: float = 1.0,
    alpha_phi: float = 1.0,
    regular: Optional[Dict[str, Tuple[float, float]]] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FundamentalPair:
    """
    Fundamental solutions psi and phi normalised by psi(c) = alpha_psi, phi(c) = alpha_phi.

    Boundary data follow the class of each endpoint: A-entrance uses
    (a, κ) = (1, 0), A-exit (0, 1), A-natural the truncation scheme, and
    A-regular the pair given in ``regular[side]``.

    Raises:
        PreconditionError: If an A-regular endpoint has no user data
    """
    regular = regular or {}
    nodes = prepare_grid(spec, mu_A, grid, [c])
    b = _median_node(nodes)
    classes = {side: classify(spec, mu_A, side, b) for side in (Side.LEFT, Side.RIGHT)}

    def fundamental(side: Side, alpha: float) -> GridFunction:
        direction = Direction.INCREASING if side is Side.LEFT else Direction.DECREASING
        cls = classes[side]
        if cls.kind is BoundaryKind.A_NATURAL:
            return solve_natural(spec, mu_A, side, c, alpha, nodes, tol=max(tol, NATURAL_TOL),
                                 max_iter=max_iter, boundary=cls)
        if cls.kind is BoundaryKind.A_ENTRANCE:
            a, kappa = 1.0, 0.0
        elif cls.kind is BoundaryKind.A_EXIT:
            a, kappa = 0.0, 1.0
        else:
            if side.value not in regular:
                logger.error(f"{side.value} endpoint is A-regular but no (a, kappa) was supplied")
                raise PreconditionError(
                    f"the {side.value} endpoint is A-regular: supply (a, kappa) with a + kappa > 0",
                    rule="psi(l) + d+psi/ds(l) > 0 must be imposed at an A-regular boundary",
                )
            a, kappa = regular[side.value]
        eq = EquationSpec(direction=direction, a=a, kappa=kappa)
        return _normalised(solve(spec, mu_A, eq, nodes, tol, max_iter, boundary=cls), c, alpha)

    psi = fundamental(Side.LEFT, alpha_psi)
    phi = fundamental(Side.RIGHT, alpha_phi)
    pair = FundamentalPair(
        psi=psi,
        phi=phi,
        left=classes[Side.LEFT],
        right=classes[Side.RIGHT],
        normalization={"c": c, "alpha_psi": alpha_psi, "alpha_phi": alpha_phi},
    )
    x1, x2 = float(nodes[nodes.size // 4]), float(nodes[(3 * nodes.size) // 4])
    det = pair.wronskian(x1, x2)
    if abs(det) <= 1e-12 * max(1.0, abs(float(psi(x1) * phi(x2)))):
        logger.warning(f"psi and phi look proportional at {x1:.6g} and {x2:.6g}")
    return pair


def general_solution(pair: FundamentalPair, lambda1: float, lambda2: float) -> GridFunction:
    """
    lambda1 * psi + lambda2 * phi on psi's grid.

    Raises:
        PreconditionError: Unless both weights are nonnegative with a positive sum
    """
    if lambda1 < 0 or lambda2 < 0 or lambda1 + lambda2 <= 0:
        raise PreconditionError(f"need lambda1, lambda2 >= 0 with a positive sum, got ({lambda1}, {lambda2})")
    psi, phi = pair.psi, pair.phi
    grid = psi.grid
    values = lambda1 * psi.values + lambda2 * np.asarray(phi(grid), dtype=float)
    closed = None
    if psi.closed_form is not None and phi.closed_form is not None:
        fp, fq = psi.closed_form, phi.closed_form
        closed = lambda x: lambda1 * np.asarray(fp(x), dtype=float) + lambda2 * np.asarray(fq(x), dtype=float)  # noqa: E731
    tags = {"subharmonic"}
    positive = (lambda1 > 0 and lambda2 > 0) or (lambda1 > 0 and psi.minimum() > 0) or (
        lambda2 > 0 and phi.minimum() > 0
    )
    if positive:
        tags.add("strictly_positive")
    return psi.with_values(
        values,
        closed_form=closed,
        tags=tags,
        metadata={"lambda1": lambda1, "lambda2": lambda2},
        name="g",
    )


class PairFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda1: float
    lambda2: float
    misfit: float


def fit_pair(g: GridFunction, pair: FundamentalPair, x1: float, x2: float) -> PairFit:
    """
    Weights (λ₁, λ₂) with λ₁ψ + λ₂φ = g at x1 and x2, plus the sup-norm misfit on g's grid.

    Raises:
        SingularError: If the 2x2 system is (numerically) singular
    """
    if x1 == x2:
        raise SingularError("the fitting points coincide")
    matrix = np.array(
        [[float(pair.psi(x1)), float(pair.phi(x1))], [float(pair.psi(x2)), float(pair.phi(x2))]]
    )
    rhs = np.array([float(g(x1)), float(g(x2))])
    if not np.isfinite(matrix).all() or np.linalg.cond(matrix) > 1e12:
        logger.error(f"psi and phi are not independent at {x1} and {x2}")
        raise SingularError(f"condition number of the fitting system at ({x1}, {x2}) is too large")
    lam1, lam2 = np.linalg.solve(matrix, rhs)
    combo = lam1 * np.asarray(pair.psi(g.grid), dtype=float) + lam2 * np.asarray(pair.phi(g.grid), dtype=float)
    misfit = float(np.max(np.abs(combo - g.values)))
    return PairFit(lambda1=float(lam1), lambda2=float(lam2), misfit=misfit)


class VerificationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    a: Optional[float] = None
    b: Optional[float] = None
    x: float
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


class PairVerification(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[VerificationRow]
    tol: float

    @property
    def max_residual(self) -> float:
        return max((row.residual for row in self.rows), default=0.0)

    @property
    def ok(self) -> bool:
        return all(row.residual <= self.tol * max(1.0, abs(row.lhs)) for row in self.rows)

    def describe(self) -> str:
        lines = [f"{'kind':<12} {'a':>10} {'b':>10} {'x':>10} {'lhs':>22} {'rhs':>22} {'residual':>10}"]
        for row in self.rows:
            a = f"{row.a:.4g}" if row.a is not None else "-"
            b = f"{row.b:.4g}" if row.b is not None else "-"
            lines.append(
                f"{row.kind:<12} {a:>10} {b:>10} {row.x:>10.4g} {row.lhs:>22.15g} {row.rhs:>22.15g} {row.residual:>10.3g}"
            )
        lines.append(f"max residual {self.max_residual:.3g} ({'ok' if self.ok else 'FAILED'} at tol {self.tol:g})")
        return "\n".join(lines)


def verify_pair(
    g: GridFunction,
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    triples: Sequence[Tuple[float, float, float]],
    pairs: Sequence[Tuple[float, float]] = (),
    eq: Optional[EquationSpec] = None,
    xs: Sequence[float] = (),
    tol: float = 1e-6,
) -> PairVerification:
    """
    Check the exit identity

        g(a) P^x(T_a < T_b) + g(b) P^x(T_b < T_a) = g(x) + ∫_a^b u_ab(x, y) g(y) mu_A(dy)

    at each (a, b, x) triple, and the derivative identity
    d⁺g/ds(y) - d⁺g/ds(x) = ∫_(x,y] g dmu_A at each (x, y) pair. With ``eq``
    given, the global equation is also checked at each point of ``xs``.
    Failures are reported, never raised.
    """
    if np.any(g.values < 0):
        logger.warning(f"{g.name} takes negative values; identities are checked as a diagnostic only")
    points = list(mu_A.atom_locations)
    rows: List[VerificationRow] = []
    for a, b, x in triples:
        p_b = hitting_prob(spec, x, a, b)
        lhs = float(g(a)) * (1.0 - p_b) + float(g(b)) * p_b
        integral = integrate(
            mu_A,
            lambda y: green_kernel(spec, a, b, x, float(y)) * float(g(y)),
            a,
            b,
            points=[x] + points,
        )
        rows.append(VerificationRow(kind="exit", a=a, b=b, x=x, lhs=lhs, rhs=float(g(x)) + integral))
    for x, y in pairs:
        lhs = s_derivative(g, y, Side.RIGHT) - s_derivative(g, x, Side.RIGHT)
        rhs = integrate(mu_A, lambda z: float(g(z)), x, y, points=points)
        rows.append(VerificationRow(kind="derivative", a=x, b=y, x=y, lhs=lhs, rhs=rhs))
    if eq is not None:
        for x in xs:
            rows.append(VerificationRow(kind="equation", x=x, lhs=float(g(x)), rhs=_equation_rhs(g, spec, mu_A, eq, x)))
    return PairVerification(rows=rows, tol=tol)


def _equation_rhs(g: Any, spec: DiffusionSpec, mu_A: RadonMeasure, eq: EquationSpec, x: float) -> float:
    """Right-hand side of the global equation at x by direct quadrature."""
    scale = spec.scale
    sx = float(scale(x))
    points = [x] + list(mu_A.atom_locations)
    try:
        if eq.direction is Direction.INCREASING:
            value = eq.a + (eq.kappa * (sx - spec.s_left) if eq.kappa > 0 else 0.0)
            value += integrate(mu_A, lambda y: (sx - float(scale(y))) * float(g(y)), spec.lower, x, points=points)
        else:
            value = eq.a + (eq.kappa * (spec.s_right - sx) if eq.kappa > 0 else 0.0)
            value += integrate(mu_A, lambda y: (float(scale(y)) - sx) * float(g(y)), x, spec.upper, points=points)
    except NonFiniteError as e:
        logger.warning(f"Equation residual at x={x} could not be evaluated: {e}")
        return math.inf
    return float(value)


class AnchoredResidual(BaseModel):
    model_config = ConfigDict(frozen=True)

    c: float
    kappa: float
    direction: Direction
    xs: List[float]
    residuals: List[float]

    @property
    def max_abs(self) -> float:
        return max((abs(r) for r in self.residuals), default=0.0)


def anchored_residual(
    g: Any,
    spec: DiffusionSpec,
    mu_A: RadonMeasure,
    c: float,
    kappa: float,
    direction: Union[Direction, str],
    xs: Sequence[float],
) -> AnchoredResidual:
    """
    Residual of the equation anchored at an interior point c,

        g(x) = g(c) + κ(s(x) - s(c)) + ∫ v_c(x, y) g(y) mu_A(dy),

    with v_c(x, y) = s(x∨y) - s(c∨y) (increasing) or s(c∧y) - s(x∧y)
    (decreasing). Solutions of this form may change sign.
    """
    direction = Direction(direction) if not isinstance(direction, Direction) else direction
    scale = spec.scale
    sc = float(scale(c))
    gc = float(g(c))
    residuals: List[float] = []
    points = [c] + list(mu_A.atom_locations)
    for x in xs:
        sx = float(scale(x))
        if direction is Direction.INCREASING:
            kernel = lambda y: max(sx, float(scale(y))) - max(sc, float(scale(y)))  # noqa: E731
            lo, hi = spec.lower, max(x, c)
        else:
            kernel = lambda y: min(sc, float(scale(y))) - min(sx, float(scale(y)))  # noqa: E731
            lo, hi = min(x, c), spec.upper
        integral = integrate(mu_A, lambda y: kernel(y) * float(g(y)), lo, hi, points=[x] + points)
        residuals.append(float(g(x)) - (gc + kappa * (sx - sc) + integral))
    return AnchoredResidual(c=c, kappa=kappa, direction=direction, xs=list(xs), residuals=residuals)


class OrderingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    strict: bool
    min_gap: float
    at: float


def compare_solutions(g1: GridFunction, g2: GridFunction) -> OrderingReport:
    """Whether g1 < g2 at every interior node of g1's grid."""
    interior = g1.grid[1:-1] if g1.grid.size > 2 else g1.grid
    gaps = np.asarray(g2(interior), dtype=float) - np.asarray(g1(interior), dtype=float)
    k = int(np.argmin(gaps))
    return OrderingReport(strict=bool(np.all(gaps > 0)), min_gap=float(gaps[k]), at=float(interior[k]))


_EXPECTED = {
    # psi(end), phi(end), |psi slope|(end), |phi slope|(end), with psi the function vanishing toward end
    BoundaryKind.A_REGULAR: (">=0", "<inf", ">=0", "<inf"),
    BoundaryKind.A_ENTRANCE: (">0", "=inf", "=0", "<inf"),
    BoundaryKind.A_EXIT: ("=0", "<inf", ">0", "=inf"),
    BoundaryKind.A_NATURAL: ("=0", "=inf", "=0", "=inf"),
}

_ACCEPTS = {
    ">=0": {"=0", ">0"},
    ">0": {">0"},
    "=0": {"=0"},
    "<inf": {"=0", ">0"},
    "=inf": {"=inf"},
}


class BoundaryTableRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    endpoint: Side
    quantity: str
    expected: str
    observed: str
    limit: float
    match: Optional[bool]


class BoundaryTableReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[BoundaryTableRow]

    @property
    def consistent(self) -> bool:
        return all(row.match is not False for row in self.rows)

    def describe(self) -> str:
        lines = []
        for row in self.rows:
            verdict = {True: "ok", False: "MISMATCH", None: "undetermined"}[row.match]
            lines.append(
                f"{row.endpoint.value:<5} {row.quantity:<16} expected {row.expected:<5} "
                f"observed {row.observed:<5} (last sample {row.limit:.6g}) {verdict}"
            )
        return "\n".join(lines)


def _observed(trend: str) -> str:
    return {"vanishing": "=0", "unbounded": "=inf", "bounded": ">0"}[trend]


def boundary_table_report(pair: FundamentalPair, spec: DiffusionSpec) -> BoundaryTableReport:
    """
    Compare the sampled boundary behaviour of psi and phi with the rows
    predicted by each endpoint's class.

    A convex function with a nonvanishing slope tends to infinity toward an
    endpoint of infinite scale; otherwise trends are read off the samples.
    Grid-only functions cannot prove a limit is zero or infinite, so a
    bounded observation against such a prediction is reported as undetermined.
    """
    rows: List[BoundaryTableRow] = []
    for side, cls in ((Side.LEFT, pair.left), (Side.RIGHT, pair.right)):
        near, far = (pair.psi, pair.phi) if side is Side.LEFT else (pair.phi, pair.psi)
        near_name, far_name = ("psi", "phi") if side is Side.LEFT else ("phi", "psi")
        limit = spec.s_left if side is Side.LEFT else spec.s_right
        b_near: BoundaryBehaviour = boundary_behaviour(near, spec, side)
        b_far: BoundaryBehaviour = boundary_behaviour(far, spec, side)
        far_value = _observed(b_far.value_trend)
        if not math.isfinite(limit) and b_far.slope_trend != "vanishing":
            far_value = "=inf"
        observations = (
            (f"{near_name}(end)", _observed(b_near.value_trend), b_near.value_limit, near),
            (f"{far_name}(end)", far_value, b_far.value_limit, far),
            (f"|d{near_name}/ds|(end)", _observed(b_near.slope_trend), abs(b_near.slope_limit), near),
            (f"|d{far_name}/ds|(end)", _observed(b_far.slope_trend), abs(b_far.slope_limit), far),
        )
        for (quantity, observed, last, fn), expected in zip(observations, _EXPECTED[cls.kind]):
            match: Optional[bool] = observed in _ACCEPTS[expected]
            if not match and fn.closed_form is None and observed == ">0" and expected in ("=0", "=inf"):
                match = None
            rows.append(
                BoundaryTableRow(endpoint=side, quantity=quantity, expected=expected, observed=observed, limit=last, match=match)
            )
    return BoundaryTableReport(rows=rows)
