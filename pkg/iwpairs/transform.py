"""
Change of measure by a strictly positive subharmonic function.

If (g, A) is an Itô–Watanabe pair, the law Q^x with density
g(X_T) e^{-A_T} / g(x) is again a regular diffusion, with scale
s_g(dx) = g(x)^-2 s(dx) and speed m_g(dx) = g(x)^2 m(dx). Revuz measures
transform like the speed measure.
"""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .diffusion import (
    DiffusionSpec,
    ScaleFunction,
    TransienceReport,
    is_transient,
    potential_density,
    sde_coefficients,
)
from .exceptions import (
    InconclusiveError,
    InvalidIntervalError,
    NonFiniteError,
    NotTransientError,
    VanishingGError,
)
from .grid import GridFunction, merge_nodes
from .measures import RadonMeasure, Side, VerdictKind, improper_integral, quad
from .subharmonic import check_subharmonic, s_derivative

logger = logging.getLogger(__name__)

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


class TransformedScale(ScaleFunction):
    """
    s_g(x) = ∫_c^x g(y)^-2 s(dy).

    Values are accumulated cell by cell between the nodes of g, so kinks of g
    never sit inside a quadrature panel. Where g is only known on its grid it
    is linear in s between nodes and the cell integrals are exact:
    ∫ du / g(u)^2 = (u1 - u0) / (g0 g1).
    """

    def __init__(self, base: ScaleFunction, g: GridFunction, c: float) -> None:
        super().__init__(base.lower, base.upper, limits=(-math.inf, math.inf))
        self.base = base
        self.g = g
        self.c = float(c)
        knots = merge_nodes(np.asarray(g.grid, dtype=float), [self.c])
        if not knots[0] <= self.c <= knots[-1]:
            knots = np.unique(np.concatenate([knots, [self.c]]))
        self.knots = knots
        self.u_knots = np.asarray(base(knots), dtype=float)
        pieces = np.array([self._piece(a, b) for a, b in zip(knots[:-1], knots[1:])])
        cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
        anchor = int(np.searchsorted(knots, self.c))
        self.values = cumulative - cumulative[anchor]
        self._declared_limits = self._boundary_limits()
        self.limits_numeric = True

    def weight(self, x: float) -> float:
        value = float(self.g(x))
        if not value > 0:
            logger.error(f"g({x}) = {value} is not strictly positive")
            raise VanishingGError(f"g({x:.6g}) = {value:.6g} must be strictly positive")
        return value ** -2

    def _g_of_u(self, u: float) -> float:
        x = float(self.base.inverse(u))
        return float(self.g(x))

    def _piece(self, a: float, b: float) -> float:
        """∫_(a, b] g^-2 s(dy) for a, b inside one cell of g (or beyond its hull)."""
        if a == b:
            return 0.0
        sign = 1.0
        if a > b:
            a, b, sign = b, a, -1.0
        ua, ub = float(self.base(a)), float(self.base(b))
        if self.g.closed_form is None:
            ga, gb = float(self.g(a)), float(self.g(b))
            if not (ga > 0 and gb > 0):
                raise VanishingGError(f"g vanishes between {a:.6g} and {b:.6g}")
            return sign * (ub - ua) / (ga * gb)
        value = quad(lambda u: self._g_of_u(u) ** -2, ua, ub, QUAD_EPSABS, QUAD_EPSREL)
        return sign * value

    def _scalar(self, x: float) -> float:
        if x <= self.lower:
            return self.limit_left
        if x >= self.upper:
            return self.limit_right
        knots = self.knots
        if x <= knots[0]:
            return float(self.values[0]) - self._piece(x, float(knots[0]))
        if x >= knots[-1]:
            return float(self.values[-1]) + self._piece(float(knots[-1]), x)
        i = int(np.searchsorted(knots, x, side="right")) - 1
        if x == knots[i]:
            return float(self.values[i])
        return float(self.values[i]) + self._piece(float(knots[i]), x)

    def __call__(self, x: Any) -> Any:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return self._scalar(float(arr))
        return np.vectorize(self._scalar, otypes=[float])(arr)

    def derivative(self, x: Any) -> Any:
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self.base.derivative(arr), dtype=float) / np.asarray(self.g(arr), dtype=float) ** 2
        return out if out.ndim else float(out)

    @property
    def has_exact_derivative(self) -> bool:
        return self.base.has_exact_derivative

    def describe(self) -> str:
        return f"s_g(x) = ∫_{self.c:g}^x {self.g.name}(y)^-2 s(dy)"

    def _boundary_limits(self) -> Tuple[float, float]:
        return self._tail(Side.LEFT), self._tail(Side.RIGHT)

    def _tail(self, side: Side) -> float:
        """s_g at an endpoint: the end-knot value plus the improper integral beyond it."""
        if side is Side.LEFT:
            x_end, value, s_end = float(self.knots[0]), float(self.values[0]), self.base.limit_left
        else:
            x_end, value, s_end = float(self.knots[-1]), float(self.values[-1]), self.base.limit_right
        sign = -1.0 if side is Side.LEFT else 1.0
        u_end = float(self.base(x_end))
        if self.g.closed_form is None:
            return value + sign * self._linear_tail(side, u_end, s_end)

        weighted = self.base.measure.weighted(lambda y: self.weight(float(y)), label="g^-2")
        verdict = improper_integral(weighted, lambda y: 1.0, side, x_end)
        if verdict.kind is VerdictKind.INCONCLUSIVE:
            logger.error(f"Limit of s_g at the {side.value} endpoint is inconclusive")
            raise InconclusiveError(
                f"cannot decide whether s_g is bounded toward the {side.value} endpoint",
                diagnostics={"cutoffs": verdict.cutoffs, "partial_sums": verdict.partial_sums},
            )
        if verdict.is_divergent:
            return sign * math.inf
        lo, hi = (s_end, u_end) if side is Side.LEFT else (u_end, s_end)
        try:
            tail = quad(lambda u: self._g_of_u(u) ** -2, lo, hi, QUAD_EPSABS, QUAD_EPSREL)
        except (NonFiniteError, VanishingGError):
            logger.warning(f"Direct quadrature of the {side.value} tail of s_g failed, using the cutoff estimate")
            tail = float(verdict.value or 0.0)
        return value + sign * tail

    def _linear_tail(self, side: Side, u_end: float, s_end: float) -> float:
        """Tail integral for g continued linearly in s beyond its grid."""
        g = self.g
        if side is Side.LEFT:
            g_end, slope = float(g.values[0]), -float(g.slopes[0])
        else:
            g_end, slope = float(g.values[-1]), float(g.slopes[-1])
        length = abs(s_end - u_end)
        if math.isinf(length):
            return 1.0 / (slope * g_end) if slope > 0 else math.inf
        g_far = g_end + slope * length
        if not g_far > 0:
            raise VanishingGError(f"g continued beyond the grid vanishes before the {side.value} endpoint")
        return length / (g_end * g_far)


class Provenance(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda1: Optional[float] = None
    lambda2: Optional[float] = None


class TransformedDiffusion(BaseModel):
    """The diffusion under Q: base data, the reweighting g and the new (s_g, m_g)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base: DiffusionSpec
    g: GridFunction
    c: float
    spec_Q: DiffusionSpec
    provenance: Provenance = Field(default_factory=Provenance)

    @property
    def scale(self) -> TransformedScale:
        return self.spec_Q.scale  # type: ignore[return-value]

    @property
    def limits(self) -> Tuple[float, float]:
        return self.spec_Q.s_left, self.spec_Q.s_right

    def describe(self) -> str:
        sl, sr = self.limits
        return (
            f"{self.scale.describe()}; s_g(l+) = {sl:.17g}, s_g(r-) = {sr:.17g}\n"
            f"m_g = {self.g.name}^2 * ({self.base.speed.describe()})"
        )


def _provenance(g: GridFunction) -> Provenance:
    meta = g.metadata
    if "lambda1" in meta and "lambda2" in meta:
        return Provenance(lambda1=float(meta["lambda1"]), lambda2=float(meta["lambda2"]))
    if "nondecreasing" in g.tags:
        return Provenance(lambda1=1.0, lambda2=0.0)
    if "nonincreasing" in g.tags:
        return Provenance(lambda1=0.0, lambda2=1.0)
    return Provenance()


def transform(base: DiffusionSpec, g: GridFunction, c: float) -> TransformedDiffusion:
    """
    Build the diffusion of Q from a strictly positive subharmonic g.

    Args:
        base: The diffusion under P
        g: Strictly positive subharmonic function, typically from general_solution
        c: Anchor with s_g(c) = 0

    Returns:
        The transformed diffusion with s_g, m_g = g^2 m and the endpoint limits of s_g

    Raises:
        VanishingGError: If g is not strictly positive on its grid
        InconclusiveError: If a limit of s_g cannot be decided
    """
    if not base.lower < c < base.upper:
        raise InvalidIntervalError(f"anchor c={c} must lie inside ({base.lower}, {base.upper})")
    if g.minimum() <= 0:
        k = int(np.argmin(g.values))
        logger.error(f"{g.name} vanishes at x={g.grid[k]}")
        raise VanishingGError(
            f"min {g.name} on the grid is {g.values[k]:.6g} at x={g.grid[k]:.6g}",
            rule="a subharmonic function never vanishes inside (l, r) unless it vanishes identically",
        )
    check = check_subharmonic(g, base)
    if not check.ok:
        logger.warning(f"{g.name} is not subharmonic: {check.describe()}")

    scale = TransformedScale(base.scale, g, c)
    speed = base.speed.weighted(lambda y: float(g(y)) ** 2, label=f"{g.name}^2")
    spec_Q = DiffusionSpec(
        lower=base.lower,
        upper=base.upper,
        scale=scale,
        speed=speed,
        name=f"{base.name} under Q_{g.name}",
    )
    logger.info(f"Transformed {base.name} by {g.name}: s_g limits ({scale.limit_left:.6g}, {scale.limit_right:.6g})")
    return TransformedDiffusion(base=base, g=g, c=c, spec_Q=spec_Q, provenance=_provenance(g))


def revuz_under_Q(t: TransformedDiffusion, mu: RadonMeasure) -> RadonMeasure:
    """g^2 mu: density and atom masses multiplied by g^2."""
    g = t.g
    return mu.weighted(lambda y: float(g(y)) ** 2, label=f"{g.name}^2")


class QTransienceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    transience: TransienceReport
    provenance: Provenance
    consistent: Optional[bool] = None

    def describe(self) -> str:
        lines = [self.transience.describe()]
        p = self.provenance
        if p.lambda1 is not None:
            lines.append(f"g = {p.lambda1:g} psi + {p.lambda2:g} phi")
        if self.consistent is not None:
            lines.append(f"attraction probabilities {'match' if self.consistent else 'CONTRADICT'} the weights")
        return "\n".join(lines)


def transience_report(t: TransformedDiffusion, x: float) -> QTransienceReport:
    """
    Transience of X under Q and the probabilities of ending at r and at l.

    With g = λ₁ψ + λ₂φ: λ₂ = 0 sends X to r, λ₁ = 0 sends it to l, and both
    positive leave both probabilities in (0, 1).
    """
    report = is_transient(t.spec_Q, x)
    p = t.provenance
    consistent: Optional[bool] = None
    if p.lambda1 is not None and p.lambda2 is not None and report.transient and report.prob_right is not None:
        if p.lambda2 == 0 and p.lambda1 > 0:
            consistent = report.prob_right == 1.0
        elif p.lambda1 == 0 and p.lambda2 > 0:
            consistent = report.prob_left == 1.0
        elif p.lambda1 > 0 and p.lambda2 > 0:
            consistent = 0.0 < report.prob_right < 1.0
    if not report.transient:
        logger.info(f"{t.spec_Q.name} is recurrent: g does not come from an Itô–Watanabe pair with A != 0")
    return QTransienceReport(transience=report, provenance=p, consistent=consistent)


def _require_transient(t: TransformedDiffusion) -> None:
    sl, sr = t.limits
    if not (math.isfinite(sl) or math.isfinite(sr)):
        logger.error(f"{t.spec_Q.name} is recurrent")
        raise NotTransientError("both limits of s_g are infinite")


def q_hitting(t: TransformedDiffusion, y: float, x: float) -> float:
    """Q^y(T_x < ∞) = u_Q(y, x) / u_Q(x, x)."""
    _require_transient(t)
    if x == y:
        return 1.0
    return potential_density(t.spec_Q, y, x) / potential_density(t.spec_Q, x, x)


class ScaleSlopes(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    left: float
    right: float

    @property
    def kinked(self) -> bool:
        return not math.isclose(self.left, self.right, rel_tol=1e-9, abs_tol=1e-14)


def scale_slopes(t: TransformedDiffusion, x: float) -> ScaleSlopes:
    """One-sided derivatives of s_g at x, s'(x±) / g(x)^2."""
    base = t.base.scale
    gx = float(t.g(x))
    if not gx > 0:
        raise VanishingGError(f"g({x:.6g}) = {gx:.6g}")
    left = base.one_sided_derivative(x, Side.LEFT) / gx**2
    right = base.one_sided_derivative(x, Side.RIGHT) / gx**2
    return ScaleSlopes(x=x, left=left, right=right)


def q_local_time_mean(t: TransformedDiffusion, y: float, convention: str = "right") -> float:
    """
    Mean total local time at y under Q^y, 2 u_Q(y, y) / s_g'(y).

    ``convention`` picks the one-sided derivative of s_g where it is kinked:
    ``right`` (default), ``left`` or ``mean``.
    """
    _require_transient(t)
    slopes = scale_slopes(t, y)
    if slopes.kinked:
        logger.debug(f"s_g is kinked at {y}: left {slopes.left:.6g}, right {slopes.right:.6g}")
    if convention == "right":
        slope = slopes.right
    elif convention == "left":
        slope = slopes.left
    elif convention == "mean":
        slope = 0.5 * (slopes.left + slopes.right)
    else:
        raise ValueError(f"Unknown slope convention: {convention}")
    return 2.0 * potential_density(t.spec_Q, y, y) / slope


def q_drift(t: TransformedDiffusion, x: float) -> float:
    """
    Drift of X under Q at x: the base drift plus σ_X(x)^2 g'(x) / g(x).

    Needs a base diffusion expressible as an SDE (absolutely continuous speed).
    """
    coefficients = sde_coefficients(t.base, x)
    g = t.g
    g_prime = s_derivative(g, x, Side.RIGHT) * float(t.base.scale.derivative(x))
    return coefficients.drift_x + coefficients.sigma_x**2 * g_prime / float(g(x))


def likelihood_ratio(g: Any, a_T: Any, x0: float, x_T: Any) -> Any:
    """
    Radon-Nikodym weight g(X_T) e^{-A_T} / g(x0) of Q against P on [T < ζ].

    Raises:
        VanishingGError: If g(x0) is not strictly positive
    """
    g0 = float(g(x0))
    if not g0 > 0:
        logger.error(f"g({x0}) = {g0} cannot normalise the likelihood ratio")
        raise VanishingGError(f"g({x0:.6g}) = {g0:.6g}")
    x_arr = np.asarray(x_T, dtype=float)
    a_arr = np.asarray(a_T, dtype=float)
    out = np.asarray(g(x_arr), dtype=float) * np.exp(-a_arr) / g0
    return out if out.ndim else float(out)


class TransformRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    s_g: float
    g: float
    slope_left: float
    slope_right: float


def transform_table(t: TransformedDiffusion, points: Sequence[float]) -> List[TransformRow]:
    rows = []
    for x in points:
        slopes = scale_slopes(t, x)
        rows.append(
            TransformRow(x=x, s_g=float(t.scale(x)), g=float(t.g(x)), slope_left=slopes.left, slope_right=slopes.right)
        )
    return rows


def derived_quantities(
    t: TransformedDiffusion, hitting: Sequence[Tuple[float, float]], local_times: Sequence[float]
) -> Dict[str, List[Tuple[Any, float]]]:
    """Hitting probabilities Q^y(T_x < ∞) and local-time means for the requested points."""
    return {
        "q_hitting": [((y, x), q_hitting(t, y, x)) for y, x in hitting],
        "q_local_time_mean": [(y, q_local_time_mean(t, y)) for y in local_times],
    }
