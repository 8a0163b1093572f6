"""Safe compilation of scalar expressions in ``t`` used by config files.

Allowed: numbers (including ``1j``), ``t``, ``pi``, arithmetic operators and
the functions ``sin``, ``cos``, ``exp``, ``sqrt``, ``sinh``, ``cosh``.
"""

from __future__ import annotations

import ast
import cmath
import math
from typing import Callable

import numpy as np

_FUNCS = {
    "sin": cmath.sin,
    "cos": cmath.cos,
    "exp": cmath.exp,
    "sqrt": cmath.sqrt,
    "sinh": cmath.sinh,
    "cosh": cmath.cosh,
}
_NAMES = {"pi": math.pi}
_ALLOWED = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Load,
    ast.Call,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


class ExpressionError(ValueError):
    pass


def compile_scalar(source) -> Callable[[float], complex]:
    """Compile ``source`` (string or number) into ``f(t) -> complex``."""
    if isinstance(source, (int, float, complex)) and not isinstance(source, bool):
        value = complex(source)
        return lambda t: value
    if not isinstance(source, str):
        raise ExpressionError(f"expected a number or expression string, got {source!r}")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ExpressionError(f"{type(node).__name__} not allowed in {source!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float, complex)):
            raise ExpressionError(f"constant {node.value!r} not allowed in {source!r}")
        if isinstance(node, ast.Name) and node.id != "t" and node.id not in _NAMES and node.id not in _FUNCS:
            raise ExpressionError(f"unknown name {node.id!r} in {source!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ExpressionError(f"only {sorted(_FUNCS)} may be called in {source!r}")
    code = compile(tree, "<expr>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_NAMES}

    def f(t: float) -> complex:
        return complex(eval(code, env, {"t": t}))

    return f


def compile_matrix(rows) -> tuple[Callable[[float], np.ndarray], int]:
    """Compile a square nested list of entries into ``f(t) -> ndarray``."""
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ExpressionError("matrix must be a non-empty list of rows")
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ExpressionError(f"matrix must be square, got row lengths {[len(r) for r in rows]}")
    entries = [[compile_scalar(x) for x in r] for r in rows]

    def f(t: float) -> np.ndarray:
        return np.array([[e(t) for e in r] for r in entries], dtype=complex)

    return f, n
