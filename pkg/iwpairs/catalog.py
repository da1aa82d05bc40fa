"""
Built-in diffusions, Revuz measures and runnable configs.

Measures are stated relative to the speed measure m(dx) = 2dx of Brownian
motion, so that mu_A = 2dx is the clock A_t = t.
"""
import logging
import math
from typing import Callable, Dict, List, Tuple

import numpy as np

from .diffusion import AnalyticScale, DiffusionSpec
from .expressions import compile_expression
from .grid import GridFunction, uniform_grid
from .measures import CallableDensity, RadonMeasure
from .transform import TransformedDiffusion, transform

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.5


def _natural_scale(lower: float, upper: float) -> AnalyticScale:
    identity = compile_expression("x")
    return AnalyticScale(identity, inverse=identity, lower=lower, upper=upper, limits=(lower, upper), label="x")


def brownian_motion(lower: float = -math.inf, upper: float = math.inf, name: str = "standard-bm") -> DiffusionSpec:
    """Brownian motion on (lower, upper) with s(x) = x and m(dx) = 2dx, absorbed at finite ends."""
    return DiffusionSpec(
        lower=lower,
        upper=upper,
        scale=_natural_scale(lower, upper),
        speed=RadonMeasure.lebesgue(2.0, lower, upper),
        name=name,
    )


def standard_bm() -> DiffusionSpec:
    return brownian_motion()


def bm_half_line() -> DiffusionSpec:
    return brownian_motion(0.0, math.inf, name="bm-half-line")


def delta_atom(delta: float = DEFAULT_DELTA) -> RadonMeasure:
    """Atom of mass 1/delta at 1: A = L^1 / delta in the diffusion normalisation."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return RadonMeasure(atoms=((1.0, 1.0 / delta),), label=f"atom at 1 of mass 1/{delta:g}")


def inverse_square() -> RadonMeasure:
    """(2/y^2)dy on (0, inf); g(x) = x^2 solves the equation."""
    expr = compile_expression("2/x^2")
    return RadonMeasure(lower=0.0, upper=math.inf, density=CallableDensity(expr, "2/x^2"), label="2/x^2 dx")


def exp_entrance() -> RadonMeasure:
    """(1 + e^-x)^-1 dy on the line: -inf is A-entrance, +inf A-natural."""
    expr = compile_expression("1/(1+exp(-x))")
    return RadonMeasure(density=CallableDensity(expr, "1/(1+exp(-x))"), label="(1+exp(-x))^-1 dx")


def lebesgue_2() -> RadonMeasure:
    """2dy = m for Brownian motion, i.e. A_t = t; g(x) = exp(sqrt(2) x) is the increasing solution."""
    return RadonMeasure.lebesgue(2.0)


def delta_psi(delta: float = DEFAULT_DELTA, lower: float = -5.0, upper: float = 5.0, points: int = 201) -> GridFunction:
    """psi = delta + (x - 1)^+ sampled on a uniform grid containing 1."""
    spec = standard_bm()
    closed = lambda x: delta + np.maximum(np.asarray(x, dtype=float) - 1.0, 0.0)  # noqa: E731
    g = GridFunction.from_function(closed, uniform_grid(lower, upper, points, [1.0]), spec.scale, name="psi")
    return g.with_values(
        g.values,
        closed_form=closed,
        tags={"subharmonic", "nondecreasing"},
        metadata={"lambda1": 1.0, "lambda2": 0.0, "delta": delta},
    )


def delta_transformed(delta: float = DEFAULT_DELTA) -> TransformedDiffusion:
    """Brownian motion transformed by psi = delta + (x - 1)^+, anchored at 1; transient to +inf."""
    return transform(standard_bm(), delta_psi(delta), 1.0)


DIFFUSIONS: Dict[str, Tuple[Callable[[], DiffusionSpec], str]] = {
    "standard-bm": (standard_bm, "Brownian motion on the line, s(x) = x, m = 2dx"),
    "bm-half-line": (bm_half_line, "Brownian motion on (0, inf) absorbed at 0"),
    "delta-transformed": (
        lambda: delta_transformed().spec_Q,
        f"Brownian motion under the measure change by {DEFAULT_DELTA:g} + (x-1)^+",
    ),
}

MEASURES: Dict[str, Tuple[Callable[[], RadonMeasure], str]] = {
    "delta-atom": (delta_atom, f"atom at 1 of mass 1/delta (delta = {DEFAULT_DELTA:g})"),
    "inverse-square": (inverse_square, "(2/y^2)dy on (0, inf): 0 is A-natural"),
    "exp-entrance": (exp_entrance, "(1+e^-y)^-1 dy: -inf is A-entrance"),
    "lebesgue-2": (lebesgue_2, "2dy: A_t = t for Brownian motion"),
}

CONFIGS: Dict[str, Tuple[str, str]] = {
    "delta": (
        """\
[diffusion]
catalog = "standard-bm"

[measures.A]
catalog = "delta-atom"
params = { delta = 0.5 }

[task]
kind = "solve"
measure = "A"
c = 1.0
alpha_psi = 0.5
alpha_phi = 0.5
expected_psi = "0.5 + max(x - 1, 0)"
expected_phi = "0.5 + max(1 - x, 0)"

[task.grid]
lower = -5.0
upper = 5.0
points = 201
""",
        "fundamental pair of the atom example: delta + (x-1)^+ and delta + (1-x)^+",
    ),
    "inverse-square": (
        """\
[diffusion]
catalog = "bm-half-line"

[measures.A]
catalog = "inverse-square"

[task]
kind = "classify"
measure = "A"
""",
        "boundary classes of (2/y^2)dy on (0, inf)",
    ),
    "exp-entrance": (
        """\
[diffusion]
catalog = "standard-bm"

[measures.A]
catalog = "exp-entrance"

[task]
kind = "classify"
measure = "A"
""",
        "boundary classes of (1+e^-y)^-1 dy on the line",
    ),
    "exp-natural": (
        """\
[diffusion]
catalog = "standard-bm"

[measures.A]
catalog = "lebesgue-2"

[task]
kind = "solve"
mode = "natural"
measure = "A"
endpoint = "left"
c = 0.0
alpha = 1.0
expected = "exp(sqrt(2) * x)"
expected_tol = 1e-5

[task.grid]
lower = -3.0
upper = 3.0
points = 3001
""",
        "increasing solution for A_t = t normalised at 0: exp(sqrt(2) x)",
    ),
}


def diffusion(name: str) -> DiffusionSpec:
    if name not in DIFFUSIONS:
        logger.error(f"Unknown catalog diffusion: {name}")
        raise KeyError(f"Unknown catalog diffusion: {name}; choose from {', '.join(DIFFUSIONS)}")
    return DIFFUSIONS[name][0]()


def measure(name: str, **params: float) -> RadonMeasure:
    if name not in MEASURES:
        logger.error(f"Unknown catalog measure: {name}")
        raise KeyError(f"Unknown catalog measure: {name}; choose from {', '.join(MEASURES)}")
    if name == "delta-atom":
        return delta_atom(**params)
    if params:
        raise ValueError(f"catalog measure {name} takes no parameters")
    return MEASURES[name][0]()


def config_text(name: str) -> str:
    if name not in CONFIGS:
        logger.error(f"Unknown catalog config: {name}")
        raise KeyError(f"Unknown catalog config: {name}; choose from {', '.join(CONFIGS)}")
    return CONFIGS[name][0]


def listing() -> List[str]:
    """One line per catalog entry, grouped by kind."""
    lines = ["diffusions:"]
    lines += [f"  {name}: {text}" for name, (_, text) in DIFFUSIONS.items()]
    lines.append("measures:")
    lines += [f"  {name}: {text}" for name, (_, text) in MEASURES.items()]
    lines.append("configs (use --config catalog:<name>):")
    lines += [f"  {name}: {text}" for name, (_, text) in CONFIGS.items()]
    return lines
