"""
Error hierarchy for iwpairs.

Every error carries the mathematical rule it enforces in ``rule`` so that the
command line can print "<ErrorName>: <rule>" without knowing the call site.
"""
from typing import Optional


class IWPairsError(ValueError):
    """Base error for the package."""

    default_rule: str = ""

    def __init__(self, message: str, rule: Optional[str] = None) -> None:
        super().__init__(message)
        self.rule = rule if rule is not None else self.default_rule

    @property
    def name(self) -> str:
        return type(self).__name__.removesuffix("Error")

    def describe(self) -> str:
        """One-line summary used by the CLI."""
        text = f"{self.name}: {self}"
        if self.rule:
            text += f" [{self.rule}]"
        return text


class NonFiniteError(IWPairsError):
    default_rule = "integrands must be integrable on compact subintervals"


class InvalidIntervalError(IWPairsError):
    default_rule = "integration bounds must satisfy a < b inside the state space"


class InfiniteScaleError(IWPairsError):
    default_rule = "exit formulas need finite scale values at both ends"


class NotTransientError(IWPairsError):
    default_rule = "the potential density exists only if s(l+) > -inf or s(r-) < inf"


class ZeroMeasureError(IWPairsError):
    default_rule = "the Revuz measure must charge the state space"


class InconclusiveError(IWPairsError):
    default_rule = "divergence detection is heuristic; supply an analytic override"

    def __init__(
        self, message: str, rule: Optional[str] = None, diagnostics: Optional[dict] = None
    ) -> None:
        super().__init__(message, rule)
        self.diagnostics = diagnostics or {}


class WrongClassError(IWPairsError):
    default_rule = "the operation is defined for one boundary class only"


class UnsupportedError(IWPairsError):
    default_rule = "s-derivatives at an endpoint need a finite scale limit"


class NotSubharmonicError(IWPairsError):
    default_rule = "subharmonic means nonnegative and convex in the scale coordinate"


class NonIntegrableError(IWPairsError):
    default_rule = "kernel integrals against the measure must be finite"


class InadmissibleError(IWPairsError):
    default_rule = "boundary data must match the boundary class of the Revuz measure"


class NoConvergenceError(IWPairsError):
    default_rule = "monotone iteration must converge within max_iter steps"


class HypothesisFailsError(IWPairsError):
    default_rule = "the a>0, kappa=0 branch needs the integral of (s(b)-s(y)) mu_A(dy) to be finite"


class NotNaturalError(IWPairsError):
    default_rule = "truncation solutions are only used at A-natural boundaries"


class SingularError(IWPairsError):
    default_rule = "psi and phi must be linearly independent at the fitting points"


class VanishingGError(IWPairsError):
    default_rule = "the measure change needs g strictly positive on the state space"


class UnsupportedSpecError(IWPairsError):
    default_rule = "simulation needs absolutely continuous scale and speed"


class UnsupportedMeasureError(IWPairsError):
    default_rule = "the Revuz measure density must be expressible against the speed measure"


class PreconditionError(IWPairsError):
    default_rule = "operation precondition violated"


class ConfigParseError(IWPairsError):
    """Config or expression syntax error with a source position."""

    default_rule = "config files follow the documented TOML layout and expression grammar"

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        rule: Optional[str] = None,
    ) -> None:
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + location, rule)
        self.line = line
        self.column = column

    @property
    def name(self) -> str:
        return "ParseError"
