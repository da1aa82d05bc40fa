"""
Regular one-dimensional diffusions given by a scale function and a speed measure.

Conventions: Brownian motion has s(x) = x and m(dx) = 2dx, so that its
generator ½ d²/dx² equals d/dm d/ds and the diffusion local time satisfies
E^x[L^y_{T_ab}] = u_ab(x, y). Revuz measures in the catalog are stated
relative to this m.
"""
import logging
import math
from abc import ABC, abstractmethod
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .exceptions import (
    InconclusiveError,
    InfiniteScaleError,
    InvalidIntervalError,
    NotTransientError,
    UnsupportedSpecError,
    ZeroMeasureError,
)
from .expressions import Expression
from .measures import (
    DEFAULT_EPSABS,
    DEFAULT_EPSREL,
    Density,
    IntegralVerdict,
    RadonMeasure,
    Side,
    integrate,
    improper_integral,
    quad,
)

logger = logging.getLogger(__name__)

Function = Callable[[Any], Any]


def _finite_or(value: float, fallback: float) -> float:
    return value if math.isfinite(value) else fallback


class ScaleFunction(ABC):
    """
    Strictly increasing continuous scale function on (lower, upper).

    Subclasses provide evaluation; the inverse defaults to root finding and
    the endpoint limits default to a numeric estimate (flagged by
    ``limits_numeric``) unless declared.
    """

    def __init__(
        self,
        lower: float = -math.inf,
        upper: float = math.inf,
        limits: Optional[Tuple[float, float]] = None,
    ) -> None:
        if not lower < upper:
            raise InvalidIntervalError(f"scale interval ({lower}, {upper}) is empty")
        self.lower = float(lower)
        self.upper = float(upper)
        self._declared_limits = limits
        self.limits_numeric = limits is None

    @abstractmethod
    def __call__(self, x: Any) -> Any:
        """Evaluate s (vectorised)."""
        pass

    @abstractmethod
    def describe(self) -> str:
        pass

    def derivative(self, x: Any) -> Any:
        """s'(x); central differences unless a subclass knows better."""
        arr = np.asarray(x, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(arr))
        lo = np.maximum(arr - h, self._inner(self.lower, arr))
        hi = np.minimum(arr + h, self._inner(self.upper, arr))
        out = (np.asarray(self(hi)) - np.asarray(self(lo))) / (hi - lo)
        return out if out.ndim else float(out)

    def _inner(self, end: float, arr: np.ndarray) -> Any:
        if not math.isfinite(end):
            return end
        return end + 0.5 * (arr - end)

    def inverse(self, u: Any) -> Any:
        """s⁻¹ by bracketed root finding."""
        arr = np.asarray(u, dtype=float)
        out = np.vectorize(self._inverse_scalar, otypes=[float])(arr)
        return out if out.ndim else float(out)

    def _inverse_scalar(self, u: float) -> float:
        lo, hi = self._bracket(u)
        if float(self(lo)) >= u:
            return self.lower if float(self(lo)) > u else lo
        if float(self(hi)) <= u:
            return self.upper if float(self(hi)) < u else hi
        return float(brentq(lambda x: float(self(x)) - u, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500))

    def _bracket(self, u: float) -> Tuple[float, float]:
        lo = _finite_or(self.lower, -1.0)
        hi = _finite_or(self.upper, 1.0)
        if math.isfinite(self.lower):
            lo = self.lower + 1e-300 if self.lower == 0 else self.lower + 1e-15 * max(1.0, abs(self.lower))
        if math.isfinite(self.upper):
            hi = self.upper - 1e-15 * max(1.0, abs(self.upper))
        if not math.isfinite(self.lower):
            lo = min(lo, hi - 1.0)
            for _ in range(1100):
                if float(self(lo)) <= u:
                    break
                lo = hi - 2.0 * (hi - lo)
        if not math.isfinite(self.upper):
            hi = max(hi, lo + 1.0)
            for _ in range(1100):
                if float(self(hi)) >= u:
                    break
                hi = lo + 2.0 * (hi - lo)
        return lo, hi

    @property
    def limit_left(self) -> float:
        return self._limits[0]

    @property
    def limit_right(self) -> float:
        return self._limits[1]

    @cached_property
    def _limits(self) -> Tuple[float, float]:
        if self._declared_limits is not None:
            return (float(self._declared_limits[0]), float(self._declared_limits[1]))
        left = self._estimate_limit(Side.LEFT)
        right = self._estimate_limit(Side.RIGHT)
        logger.warning(f"Scale limits of {self.describe()} estimated numerically: ({left}, {right})")
        return (left, right)

    def _reference_point(self) -> float:
        if math.isfinite(self.lower) and math.isfinite(self.upper):
            return 0.5 * (self.lower + self.upper)
        if math.isfinite(self.lower):
            return self.lower + 1.0
        if math.isfinite(self.upper):
            return self.upper - 1.0
        return 0.0

    def _estimate_limit(self, side: Side) -> float:
        b = self._reference_point()
        verdict = improper_integral(self.measure, lambda y: 1.0, side, b)
        if verdict.is_divergent:
            return -math.inf if side is Side.LEFT else math.inf
        if not verdict.is_finite or verdict.value is None:
            raise InconclusiveError(
                f"cannot decide whether s is bounded toward the {side.value} endpoint",
                diagnostics={"partial_sums": verdict.partial_sums},
            )
        sb = float(self(b))
        return sb - verdict.value if side is Side.LEFT else sb + verdict.value

    @cached_property
    def measure(self) -> RadonMeasure:
        """The Lebesgue-Stieltjes measure s(dy)."""
        return RadonMeasure(lower=self.lower, upper=self.upper, density=ScaleDensity(self), label="s(dy)")

    @property
    def is_identity(self) -> bool:
        return False

    def matches(self, other: "ScaleFunction") -> bool:
        """Equality by value: class, interval, declared limits and description."""
        if other is self:
            return True
        return (
            type(other) is type(self)
            and (self.lower, self.upper) == (other.lower, other.upper)
            and self._declared_limits == other._declared_limits
            and self.describe() == other.describe()
        )

    def at(self, x: float) -> float:
        """s(x) with the endpoint limits substituted at the endpoints."""
        if x <= self.lower:
            return self.limit_left
        if x >= self.upper:
            return self.limit_right
        return float(self(x))

    @property
    def has_exact_derivative(self) -> bool:
        return False

    def one_sided_derivative(self, x: float, side: Side) -> float:
        """Left or right derivative of s at x; one-sided quotients unless s' is known."""
        if self.has_exact_derivative:
            return float(self.derivative(x))
        h = 1e-7 * max(1.0, abs(x))
        if side is Side.RIGHT:
            if math.isfinite(self.upper):
                h = min(h, 0.5 * (self.upper - x))
            return (float(self(x + h)) - float(self(x))) / h
        if math.isfinite(self.lower):
            h = min(h, 0.5 * (x - self.lower))
        return (float(self(x)) - float(self(x - h))) / h

    def check_monotone(self, grid: Sequence[float]) -> bool:
        values = np.asarray(self(np.asarray(grid, dtype=float)), dtype=float)
        return bool(np.all(np.diff(values) > 0))


class AnalyticScale(ScaleFunction):
    """Scale function given by expressions (or callables) with an analytic inverse."""

    def __init__(
        self,
        expression: Any,
        inverse: Optional[Any] = None,
        derivative: Optional[Any] = None,
        lower: float = -math.inf,
        upper: float = math.inf,
        limits: Optional[Tuple[float, float]] = None,
        label: Optional[str] = None,
    ) -> None:
        super().__init__(lower, upper, limits)
        self._fn: Function = expression
        self._inv: Optional[Function] = inverse
        self._der: Optional[Function] = derivative
        self.label = label or getattr(expression, "source", "s")

    def __call__(self, x: Any) -> Any:
        return self._fn(x)

    def inverse(self, u: Any) -> Any:
        if self._inv is None:
            return super().inverse(u)
        return self._inv(u)

    def derivative(self, x: Any) -> Any:
        if self._der is None:
            if self.is_identity:
                arr = np.ones_like(np.asarray(x, dtype=float))
                return arr if arr.ndim else 1.0
            return super().derivative(x)
        return self._der(x)

    @property
    def is_identity(self) -> bool:
        return isinstance(self._fn, Expression) and self._fn.source.strip() == "x"

    @property
    def has_exact_derivative(self) -> bool:
        return self._der is not None or self.is_identity

    def describe(self) -> str:
        return f"s(x) = {self.label}"


class TableScale(ScaleFunction):
    """Monotone table with monotone cubic interpolation; the inverse uses root finding."""

    def __init__(
        self,
        x: Sequence[float],
        values: Sequence[float],
        lower: float = -math.inf,
        upper: float = math.inf,
        limits: Optional[Tuple[float, float]] = None,
    ) -> None:
        xs = np.asarray(x, dtype=float)
        vs = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
            raise ValueError("scale table needs matching 1-D arrays of length >= 2")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(vs) <= 0):
            raise ValueError("scale table must be strictly increasing in both columns")
        if limits is None:
            limits = (
                self._extrapolated_limit(xs, vs, lower, Side.LEFT),
                self._extrapolated_limit(xs, vs, upper, Side.RIGHT),
            )
        super().__init__(lower, upper, limits)
        self.limits_numeric = True
        self.x = xs
        self.values = vs
        self._interp = PchipInterpolator(xs, vs, extrapolate=False)
        self._slope_left = (vs[1] - vs[0]) / (xs[1] - xs[0])
        self._slope_right = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])

    @staticmethod
    def _extrapolated_limit(xs: np.ndarray, vs: np.ndarray, end: float, side: Side) -> float:
        if side is Side.LEFT:
            if math.isinf(end):
                return -math.inf
            return float(vs[0] - (vs[1] - vs[0]) / (xs[1] - xs[0]) * (xs[0] - end))
        if math.isinf(end):
            return math.inf
        return float(vs[-1] + (vs[-1] - vs[-2]) / (xs[-1] - xs[-2]) * (end - xs[-1]))

    def __call__(self, x: Any) -> Any:
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self._interp(arr), dtype=float)
        out = np.where(arr < self.x[0], self.values[0] + self._slope_left * (arr - self.x[0]), out)
        out = np.where(arr > self.x[-1], self.values[-1] + self._slope_right * (arr - self.x[-1]), out)
        return out if out.ndim else float(out)

    def derivative(self, x: Any) -> Any:
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self._interp.derivative()(arr), dtype=float)
        out = np.where(arr < self.x[0], self._slope_left, out)
        out = np.where(arr > self.x[-1], self._slope_right, out)
        return out if out.ndim else float(out)

    @property
    def has_exact_derivative(self) -> bool:
        return True

    def describe(self) -> str:
        return f"tabulated scale ({self.x.size} nodes)"

    def matches(self, other: ScaleFunction) -> bool:
        if not super().matches(other):
            return False
        assert isinstance(other, TableScale)
        return bool(np.array_equal(self.x, other.x) and np.array_equal(self.values, other.values))


class ScaleDensity(Density):
    """s(dy) as a density; integrals use the substitution u = s(y)."""

    def __init__(self, scale: ScaleFunction) -> None:
        self.scale = scale

    def __call__(self, x: Any) -> Any:
        return self.scale.derivative(x)

    def describe(self) -> str:
        return f"s(dy) for {self.scale.describe()}"

    def integrate(
        self,
        f: Function,
        a: float,
        b: float,
        epsabs: float = DEFAULT_EPSABS,
        epsrel: float = DEFAULT_EPSREL,
        points: Optional[Iterable[float]] = None,
    ) -> float:
        ua, ub = self.scale.at(a), self.scale.at(b)
        upoints = None
        if points is not None:
            upoints = [float(self.scale(p)) for p in points if a < p < b]
        inverse = self.scale.inverse
        return quad(lambda u: f(inverse(u)), ua, ub, epsabs, epsrel, upoints)


class DiffusionSpec(BaseModel):
    """Interval, scale function and speed measure of a regular diffusion."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: float = -math.inf
    upper: float = math.inf
    scale: ScaleFunction
    speed: RadonMeasure
    name: str = "diffusion"

    @model_validator(mode="after")
    def _check(self) -> "DiffusionSpec":
        if not self.lower < self.upper:
            raise ValueError(f"state interval ({self.lower}, {self.upper}) is empty")
        if (self.scale.lower, self.scale.upper) != (self.lower, self.upper):
            raise ValueError("scale function and diffusion live on different intervals")
        if (self.speed.lower, self.speed.upper) != (self.lower, self.upper):
            raise ValueError("speed measure and diffusion live on different intervals")
        return self

    def check_speed_charges(self, points: Sequence[float]) -> bool:
        """Regularity surrogate: m((a, b]) > 0 for consecutive sampled points."""
        pts = sorted(float(p) for p in points)
        return all(self.speed.mass(a, b) > 0 for a, b in zip(pts, pts[1:]))

    @property
    def s_left(self) -> float:
        return self.scale.limit_left

    @property
    def s_right(self) -> float:
        return self.scale.limit_right

    def midpoint(self) -> float:
        lo = self.lower if math.isfinite(self.lower) else None
        hi = self.upper if math.isfinite(self.upper) else None
        if lo is not None and hi is not None:
            return 0.5 * (lo + hi)
        if lo is not None:
            return lo + 1.0
        if hi is not None:
            return hi - 1.0
        return 0.0


class TransienceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    transient: bool
    limit_left: float
    limit_right: float
    x: Optional[float] = None
    prob_right: Optional[float] = None
    prob_left: Optional[float] = None

    def describe(self) -> str:
        if not self.transient:
            return "recurrent (both scale limits infinite)"
        text = f"transient: s(l+)={self.limit_left:.17g}, s(r-)={self.limit_right:.17g}"
        if self.prob_right is not None:
            text += f"; from x={self.x:.6g}: P(->r)={self.prob_right:.17g}, P(->l)={self.prob_left:.17g}"
        return text


class PCAFFiniteness(str, Enum):
    ALWAYS_INFINITE = "AlwaysInfinite"
    FINITE_AT_BOUNDARY = "FiniteAtBoundary"
    UNREACHED = "Unreached"


class PCAFFinitenessReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    left: PCAFFiniteness
    right: PCAFFiniteness
    verdict_left: Optional[IntegralVerdict] = None
    verdict_right: Optional[IntegralVerdict] = None

    def describe(self) -> str:
        return f"left: {self.left.value}; right: {self.right.value}"


def _check_inside(spec: DiffusionSpec, a: float, b: float) -> None:
    if not (spec.lower <= a < b <= spec.upper):
        raise InvalidIntervalError(
            f"need l <= a < b <= r, got a={a}, b={b} on ({spec.lower}, {spec.upper})"
        )


def _finite_scale_pair(spec: DiffusionSpec, a: float, b: float) -> Tuple[float, float]:
    sa, sb = spec.scale.at(a), spec.scale.at(b)
    if not (math.isfinite(sa) and math.isfinite(sb)):
        logger.error(f"Scale is infinite at a={a} or b={b}")
        raise InfiniteScaleError(f"s(a)={sa} and s(b)={sb} must both be finite")
    return sa, sb


def hitting_prob(spec: DiffusionSpec, x: float, a: float, b: float) -> float:
    """
    P^x(T_b < T_a) = (s(x) - s(a)) / (s(b) - s(a)).

    Raises:
        InvalidIntervalError: If not l <= a < x < b <= r
        InfiniteScaleError: If s(a) or s(b) is infinite
    """
    _check_inside(spec, a, b)
    if not a < x < b:
        raise InvalidIntervalError(f"x={x} must lie strictly between a={a} and b={b}")
    sa, sb = _finite_scale_pair(spec, a, b)
    return (float(spec.scale(x)) - sa) / (sb - sa)


def green_kernel(spec: DiffusionSpec, a: float, b: float, x: float, y: float) -> float:
    """u_ab(x, y) = (s(x∧y) - s(a)) (s(b) - s(x∨y)) / (s(b) - s(a))."""
    _check_inside(spec, a, b)
    if not (a <= x <= b and a <= y <= b):
        raise InvalidIntervalError(f"x={x}, y={y} must lie in [a, b] = [{a}, {b}]")
    sa, sb = _finite_scale_pair(spec, a, b)
    lo = spec.scale.at(min(x, y))
    hi = spec.scale.at(max(x, y))
    return max((lo - sa) * (sb - hi) / (sb - sa), 0.0)


def killed_potential_density(spec: DiffusionSpec, x: float, y: float, a: float, b: float) -> float:
    """Green kernel of the process killed at a and b, either side possibly of infinite scale."""
    _check_inside(spec, a, b)
    sa, sb = spec.scale.at(a), spec.scale.at(b)
    lo = spec.scale.at(min(x, y))
    hi = spec.scale.at(max(x, y))
    if math.isfinite(sa) and math.isfinite(sb):
        return max((lo - sa) * (sb - hi) / (sb - sa), 0.0)
    if math.isfinite(sb):
        return max(sb - hi, 0.0)
    if math.isfinite(sa):
        return max(lo - sa, 0.0)
    raise NotTransientError("both scale limits are infinite, the potential density is infinite")


def potential_density(spec: DiffusionSpec, x: float, y: float) -> float:
    """
    Potential density u(x, y) with respect to m of a transient diffusion.

    Raises:
        NotTransientError: If s(l+) = -inf and s(r-) = +inf
    """
    return killed_potential_density(spec, x, y, spec.lower, spec.upper)


def is_transient(spec: DiffusionSpec, x: Optional[float] = None) -> TransienceReport:
    """Scale-limit criterion with the endpoint attraction probabilities from x."""
    sl, sr = spec.s_left, spec.s_right
    transient = math.isfinite(sl) or math.isfinite(sr)
    prob_right: Optional[float] = None
    prob_left: Optional[float] = None
    if transient and x is not None:
        if math.isfinite(sl) and math.isfinite(sr):
            prob_right = (float(spec.scale(x)) - sl) / (sr - sl)
        elif math.isfinite(sr):
            prob_right = 1.0
        else:
            prob_right = 0.0
        prob_left = 1.0 - prob_right
    return TransienceReport(
        transient=transient,
        limit_left=sl,
        limit_right=sr,
        x=x,
        prob_right=prob_right,
        prob_left=prob_left,
    )


def exit_distribution(spec: DiffusionSpec, x: float) -> TransienceReport:
    return is_transient(spec, x)


def pcaf_potential(spec: DiffusionSpec, mu_A: RadonMeasure, f: Function, x: float) -> float:
    """
    E^x[∫_0^ζ f(X_t) dA_t] = ∫ u(x, y) f(y) mu_A(dy).

    Raises:
        NotTransientError: If the diffusion is recurrent
    """
    if not is_transient(spec).transient:
        raise NotTransientError("the PCAF potential is infinite for a recurrent diffusion")
    if mu_A.is_zero():
        return 0.0

    def integrand(y: float) -> float:
        value = float(f(y))
        if value == 0.0:
            return 0.0
        return potential_density(spec, x, y) * value

    left = integrate(mu_A, integrand, spec.lower, x, points=[x])
    right = integrate(mu_A, integrand, x, spec.upper, points=[x])
    return left + right


def pcaf_finiteness(spec: DiffusionSpec, mu_A: RadonMeasure, c: Optional[float] = None) -> PCAFFinitenessReport:
    """
    Whether A_ζ is finite on the event that X exits through each endpoint.

    Raises:
        ZeroMeasureError: If mu_A vanishes
        InconclusiveError: If a boundary integral cannot be decided
    """
    if mu_A.is_zero():
        raise ZeroMeasureError("mu_A(l, r) = 0")
    sl, sr = spec.s_left, spec.s_right
    if not (math.isfinite(sl) or math.isfinite(sr)):
        return PCAFFinitenessReport(left=PCAFFiniteness.ALWAYS_INFINITE, right=PCAFFiniteness.ALWAYS_INFINITE)
    c = spec.midpoint() if c is None else c
    results = {}
    verdicts = {}
    for side, limit in ((Side.LEFT, sl), (Side.RIGHT, sr)):
        if not math.isfinite(limit):
            results[side] = PCAFFiniteness.UNREACHED
            verdicts[side] = None
            continue
        kernel = (lambda y: float(spec.scale(y)) - sl) if side is Side.LEFT else (lambda y: sr - float(spec.scale(y)))
        verdict = improper_integral(mu_A, kernel, side, c, override_key=f"{side.value}:e")
        if verdict.kind.value == "inconclusive":
            logger.error(f"PCAF finiteness at the {side.value} endpoint is inconclusive")
            raise InconclusiveError(
                f"cannot decide finiteness of the {side.value} boundary integral",
                diagnostics={"partial_sums": verdict.partial_sums, "cutoffs": verdict.cutoffs},
            )
        results[side] = PCAFFiniteness.FINITE_AT_BOUNDARY if verdict.is_finite else PCAFFiniteness.ALWAYS_INFINITE
        verdicts[side] = verdict
    return PCAFFinitenessReport(
        left=results[Side.LEFT],
        right=results[Side.RIGHT],
        verdict_left=verdicts[Side.LEFT],
        verdict_right=verdicts[Side.RIGHT],
    )


class SDECoefficients(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_y: float
    sigma_x: float
    drift_x: float


def speed_density(spec: DiffusionSpec, x: Any) -> Any:
    """m'(x); only defined for speed measures without atoms."""
    if spec.speed.density is None or spec.speed.atoms:
        raise UnsupportedSpecError(f"speed measure of {spec.name} is not absolutely continuous")
    return spec.speed.density(x)


def sde_coefficients(spec: DiffusionSpec, x: float) -> SDECoefficients:
    """Coefficients of dY = σ_Y dW for Y = s(X), and of the SDE for X itself."""
    sp = float(spec.scale.derivative(x))
    mp = float(speed_density(spec, x))
    sigma2_y = 2.0 * sp / mp
    sigma2_x = sigma2_y / (sp * sp)
    h = 1e-5 * max(1.0, abs(x))
    spp = (float(spec.scale.derivative(x + h)) - float(spec.scale.derivative(x - h))) / (2 * h)
    drift = -0.5 * sigma2_x * spp / sp
    return SDECoefficients(sigma_y=math.sqrt(sigma2_y), sigma_x=math.sqrt(sigma2_x), drift_x=drift)
