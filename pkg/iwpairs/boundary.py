"""
Boundary classification relative to a continuous additive functional.

For the left endpoint ℓ and a reference point b the two diagnostic integrals are

    x-integral:  ∫_ℓ^b mu_A((z, b)) s(dz) = ∫_(ℓ,b) (s(y) - s(ℓ)) mu_A(dy)
    e-integral:  ∫_ℓ^b (s(b) - s(z)) mu_A(dz)

and the right endpoint is handled by mirroring. When s(ℓ) = -inf the
x-integral is divergent without computation.
"""
import logging
import math
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict

from .diffusion import DiffusionSpec
from .exceptions import InconclusiveError, InvalidIntervalError, NonFiniteError, WrongClassError, ZeroMeasureError
from .measures import IntegralVerdict, RadonMeasure, Side, VerdictKind, improper_integral, integrate

logger = logging.getLogger(__name__)


class BoundaryKind(str, Enum):
    A_REGULAR = "ARegular"
    A_ENTRANCE = "AEntrance"
    A_EXIT = "AExit"
    A_NATURAL = "ANatural"

    @classmethod
    def from_verdicts(cls, x_finite: bool, e_finite: bool) -> "BoundaryKind":
        if x_finite and e_finite:
            return cls.A_REGULAR
        if x_finite:
            return cls.A_EXIT
        if e_finite:
            return cls.A_ENTRANCE
        return cls.A_NATURAL


class BoundaryClass(BaseModel):
    model_config = ConfigDict(frozen=True)

    endpoint: Side
    kind: BoundaryKind
    verdict_x: IntegralVerdict
    verdict_e: IntegralVerdict
    b: float

    def describe(self) -> str:
        return (
            f"{self.endpoint.value}: {self.kind.value} (b={self.b:.6g}; "
            f"x-integral {self.verdict_x.describe()}; e-integral {self.verdict_e.describe()})"
        )


class BoundaryReport(BaseModel):
    """Both endpoints plus the outcome of the reference-point invariance check."""

    model_config = ConfigDict(frozen=True)

    left: BoundaryClass
    right: BoundaryClass
    check_points: Tuple[float, float]
    b_invariant: Optional[bool] = None

    def describe(self) -> str:
        check = {None: "not run", True: "passed", False: "FAILED"}[self.b_invariant]
        points = ", ".join(f"{p:.6g}" for p in self.check_points)
        return f"{self.left.describe()}\n{self.right.describe()}\nb-invariance at ({points}): {check}"


def _forced_divergent() -> IntegralVerdict:
    return IntegralVerdict(kind=VerdictKind.DIVERGENT, source="infinite scale limit")


def _decided(verdict: IntegralVerdict, endpoint: Side, which: str) -> IntegralVerdict:
    if verdict.kind is VerdictKind.INCONCLUSIVE:
        logger.error(f"{which}-integral at the {endpoint.value} endpoint is inconclusive")
        raise InconclusiveError(
            f"cannot decide the {which}-integral at the {endpoint.value} endpoint; "
            f"supply the override '{endpoint.value}:{which}'",
            diagnostics={"cutoffs": verdict.cutoffs, "partial_sums": verdict.partial_sums},
        )
    return verdict


def classify(
    spec: DiffusionSpec, mu_A: RadonMeasure, endpoint: Side, b: Optional[float] = None
) -> BoundaryClass:
    """
    Classify one endpoint as A-regular, A-entrance, A-exit or A-natural.

    Args:
        spec: The diffusion
        mu_A: Revuz measure of the additive functional
        endpoint: Which endpoint to classify
        b: Reference point inside the state space, defaults to the midpoint

    Returns:
        The class together with both verdicts

    Raises:
        ZeroMeasureError: If mu_A does not charge the state space
        InconclusiveError: If either integral cannot be decided
    """
    if mu_A.is_zero():
        logger.error("Cannot classify boundaries of a zero Revuz measure")
        raise ZeroMeasureError("mu_A(l, r) = 0")
    b = spec.midpoint() if b is None else float(b)
    if not spec.lower < b < spec.upper:
        raise InvalidIntervalError(f"reference point b={b} must lie inside ({spec.lower}, {spec.upper})")

    scale = spec.scale
    sb = float(scale(b))
    if endpoint is Side.LEFT:
        limit = spec.s_left
        kernel_x = lambda y: float(scale(y)) - limit  # noqa: E731
        kernel_e = lambda y: sb - float(scale(y))  # noqa: E731
    else:
        limit = spec.s_right
        kernel_x = lambda y: limit - float(scale(y))  # noqa: E731
        kernel_e = lambda y: float(scale(y)) - sb  # noqa: E731

    key = endpoint.value
    if math.isfinite(limit):
        verdict_x = improper_integral(mu_A, kernel_x, endpoint, b, override_key=f"{key}:x")
    else:
        verdict_x = _forced_divergent()
    verdict_x = _decided(verdict_x, endpoint, "x")
    verdict_e = _decided(improper_integral(mu_A, kernel_e, endpoint, b, override_key=f"{key}:e"), endpoint, "e")

    kind = BoundaryKind.from_verdicts(verdict_x.is_finite, verdict_e.is_finite)
    logger.debug(f"{key} endpoint of {spec.name} classified {kind.value} at b={b}")
    return BoundaryClass(endpoint=endpoint, kind=kind, verdict_x=verdict_x, verdict_e=verdict_e, b=b)


def reference_points(spec: DiffusionSpec) -> Tuple[float, float]:
    """Two interior points on either side of the midpoint, used for the b-invariance check."""
    lo, hi = spec.lower, spec.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)
    if math.isfinite(lo):
        return lo + 0.5, lo + 2.0
    if math.isfinite(hi):
        return hi - 2.0, hi - 0.5
    return -1.0, 1.0


def classify_both(spec: DiffusionSpec, mu_A: RadonMeasure, b: Optional[float] = None) -> BoundaryReport:
    """
    Classify both endpoints and re-run the classification at two other
    reference points; a disagreement is logged and reported, not raised.
    """
    left = classify(spec, mu_A, Side.LEFT, b)
    right = classify(spec, mu_A, Side.RIGHT, b)
    points = reference_points(spec)
    invariant: Optional[bool] = True
    try:
        for p in points:
            if classify(spec, mu_A, Side.LEFT, p).kind is not left.kind:
                invariant = False
            if classify(spec, mu_A, Side.RIGHT, p).kind is not right.kind:
                invariant = False
    except InconclusiveError as e:
        logger.warning(f"b-invariance check skipped: {e}")
        invariant = None
    if invariant is False:
        logger.warning(f"Boundary classes of {spec.name} change with the reference point")
    logger.info(f"{spec.name}: left {left.kind.value}, right {right.kind.value}")
    return BoundaryReport(left=left, right=right, check_points=points, b_invariant=invariant)


def entrance_escape_bound(
    spec: DiffusionSpec, mu_A: RadonMeasure, y: float, endpoint: Side = Side.LEFT
) -> float:
    """
    Limit of E^x[A_{T_y}] as x tends to an A-entrance endpoint.

    For the left endpoint this is ∫_(ℓ,y) (s(y) - s(z)) mu_A(dz); it bounds the
    time needed to leave the boundary in the Chebyshev sense.

    Raises:
        WrongClassError: If the endpoint is not A-entrance
    """
    cls = classify(spec, mu_A, endpoint, y)
    if cls.kind is not BoundaryKind.A_ENTRANCE:
        logger.error(f"{endpoint.value} endpoint is {cls.kind.value}, not AEntrance")
        raise WrongClassError(f"the {endpoint.value} endpoint is {cls.kind.value}")
    sy = float(spec.scale(y))
    try:
        if endpoint is Side.LEFT:
            value = integrate(mu_A, lambda z: sy - float(spec.scale(z)), spec.lower, y)
        else:
            value = integrate(mu_A, lambda z: float(spec.scale(z)) - sy, y, spec.upper)
    except NonFiniteError:
        logger.warning("Direct quadrature of the escape bound failed, using the cutoff estimate")
        value = cls.verdict_e.value if cls.verdict_e.value is not None else math.nan
    return max(float(value), 0.0)
