"""Tiny arithmetic-expression evaluator for config-supplied fields.

Initial states and sources arrive in config files as strings like
"x * exp(-x**2)".  Evaluating them with eval() would hand config authors the
whole interpreter, so this walks the AST instead and admits only arithmetic,
the node coordinates, and a short list of numpy functions.
"""

from __future__ import annotations

import ast

import numpy as np

__all__ = ["evaluate_expression", "ExpressionError"]

_FUNCTIONS = {
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "atan": np.arctan,
    "max": np.maximum,
    "min": np.minimum,
    "sign": np.sign,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
    ast.Mod: lambda a, b: a % b,
}


class ExpressionError(ValueError):
    pass


def _eval(node: ast.AST, names: dict) -> object:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return node.value
        raise ExpressionError(f"literal {node.value!r} is not a number")
    if isinstance(node, ast.Name):
        if node.id in names:
            return names[node.id]
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, names), _eval(node.right, names))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _eval(node.operand, names)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError("only the documented function names may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments are not supported")
        args = [_eval(a, names) for a in node.args]
        return _FUNCTIONS[node.func.id](*args)
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def evaluate_expression(text: str, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Evaluate an arithmetic expression of x (and y in 2d) on node arrays."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as err:
        raise ExpressionError(f"cannot parse {text!r}: {err.msg}") from None
    names = {"x": x}
    if y is not None:
        names["y"] = y
    out = _eval(tree.body, names)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy()
