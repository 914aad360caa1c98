"""Small arithmetic-expression evaluator for initial data.

Supports numbers, the variable ``x``, named parameters, the constants ``pi``
and ``e``, the operators + - * / with parentheses and unary signs, and the
functions sin, cos and exp.  Anything else is rejected before evaluation.
"""
from __future__ import annotations

import ast
import math

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}


class ExpressionError(ValueError):
    pass


def compile_expression(text: str, names=()):
    """Parse and check ``text``; returns a function of x (and keyword parameters)."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"invalid expression {text!r}: {exc.msg}") from None
    allowed = set(names) | {"x"} | set(CONSTANTS)
    _check(tree.body, allowed)

    def evaluate(x, **params):
        env = dict(CONSTANTS)
        env.update(params)
        env["x"] = np.asarray(x, dtype=float)
        value = _eval(tree.body, env)
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(env["x"])).copy()

    return evaluate


def evaluate_expression(text: str, x, params=None):
    params = dict(params or {})
    return compile_expression(text, params)(x, **params)


def _check(node, allowed):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in allowed:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, allowed)
        _check(node.right, allowed)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.operand, allowed)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], allowed)
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    return FUNCTIONS[node.func.id](_eval(node.args[0], env))
