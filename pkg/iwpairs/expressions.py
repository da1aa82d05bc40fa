"""
Restricted arithmetic expressions for densities, scale functions and test functions.

Grammar: numbers, the constants ``pi``, ``e`` and ``inf``, the free variable
(``x`` by default), ``+ - * / ^`` (``**`` is accepted as a synonym of ``^``),
unary minus, parentheses and the functions
``exp log abs min max sqrt sinh cosh``. Expressions compile into numpy
vectorised callables; nothing is passed to ``eval``.
"""
import ast
import logging
from typing import Any, Callable, Dict, Optional

import numpy as np

from .exceptions import ConfigParseError

logger = logging.getLogger(__name__)

_Node = Callable[[np.ndarray], Any]

_CONSTANTS: Dict[str, float] = {"pi": float(np.pi), "e": float(np.e), "inf": float(np.inf)}

_UNARY_FUNCS: Dict[str, Callable[[Any], Any]] = {
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
}

_BINARY_OPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """A compiled expression in one free variable.

    Calling the object evaluates it elementwise; scalars in, float out.
    """

    def __init__(self, source: str, variable: str = "x") -> None:
        self.source = source
        self.variable = variable
        self._fn = _compile(source, variable)

    def __call__(self, x: Any) -> Any:
        arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(arr), dtype=float)
        if out.shape != arr.shape:
            out = np.broadcast_to(out, arr.shape).copy()
        if out.ndim == 0:
            return float(out)
        return out

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expression) and (self.source, self.variable) == (
            other.source,
            other.variable,
        )

    def __hash__(self) -> int:
        return hash((self.source, self.variable))


def compile_expression(source: str, variable: str = "x") -> Expression:
    """
    Compile an expression string.

    Args:
        source: Expression text, e.g. ``"2/x^2"`` or ``"0.5 + max(x-1, 0)"``
        variable: Name of the free variable

    Returns:
        A vectorised callable

    Raises:
        ConfigParseError: If the text is outside the grammar
    """
    return Expression(source, variable)


def _compile(source: str, variable: str) -> _Node:
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        column = e.offset if e.offset is not None else None
        logger.error(f"Cannot parse expression {source!r}: {e.msg}")
        raise ConfigParseError(f"invalid expression {source!r}: {e.msg}", line=None, column=column)
    return _build(tree.body, source, variable)


def _fail(node: ast.AST, source: str, what: str) -> ConfigParseError:
    column: Optional[int] = getattr(node, "col_offset", None)
    if column is not None:
        column += 1
    return ConfigParseError(f"{what} not allowed in expression {source!r}", column=column)


def _build(node: ast.AST, source: str, variable: str) -> _Node:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise _fail(node, source, f"literal {node.value!r}")
        value = float(node.value)
        return lambda x: value

    if isinstance(node, ast.Name):
        if node.id == variable:
            return lambda x: x
        if node.id in _CONSTANTS:
            const = _CONSTANTS[node.id]
            return lambda x: const
        raise _fail(node, source, f"name {node.id!r}")

    if isinstance(node, ast.UnaryOp):
        operand = _build(node.operand, source, variable)
        if isinstance(node.op, ast.USub):
            return lambda x: np.negative(operand(x))
        if isinstance(node.op, ast.UAdd):
            return operand
        raise _fail(node, source, "unary operator")

    if isinstance(node, ast.BinOp):
        op = _BINARY_OPS.get(type(node.op))
        if op is None:
            raise _fail(node, source, f"operator {type(node.op).__name__}")
        left = _build(node.left, source, variable)
        right = _build(node.right, source, variable)
        return lambda x: op(left(x), right(x))

    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise _fail(node, source, "call form")
        name = node.func.id
        args = [_build(arg, source, variable) for arg in node.args]
        if name in _UNARY_FUNCS:
            if len(args) != 1:
                raise _fail(node, source, f"{name} with {len(args)} arguments")
            func = _UNARY_FUNCS[name]
            inner = args[0]
            return lambda x: func(inner(x))
        if name in ("min", "max"):
            if len(args) < 2:
                raise _fail(node, source, f"{name} with fewer than two arguments")
            reduce = np.minimum if name == "min" else np.maximum

            def _fold(x: np.ndarray) -> Any:
                acc = args[0](x)
                for arg in args[1:]:
                    acc = reduce(acc, arg(x))
                return acc

            return _fold
        raise _fail(node, source, f"function {name!r}")

    raise _fail(node, source, type(node).__name__)
