"""A small arithmetic expression language for custom drifts.

Grammar: numbers, the variables t, x, u, mean_x, mean_u and any declared
parameters, the operators + - * / ** and unary minus, and calls to exp, log,
sqrt, tanh, sin, cos, abs, min, max, clip. Everything is evaluated with numpy
broadcasting.
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from ..errors import ParseError

FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "clip": np.clip,
}
VARIABLES = ("t", "x", "u", "mean_x", "mean_u")
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


class Expression:
    def __init__(self, source: str, params: dict | None = None):
        self.source = source
        self.params = dict(params or {})
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ParseError([(exc.lineno or 1, f"invalid expression {source!r}: {exc.msg}")]) from None
        self.names = set()
        self._check(tree.body)
        self.tree = tree.body

    @property
    def uses_measures(self) -> bool:
        return bool(self.names & {"mean_x", "mean_u"})

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in self.params:
                raise ParseError([(1, f"unknown name {node.id!r} in expression {self.source!r}")])
            self.names.add(node.id)
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS:
            if node.keywords:
                raise ParseError([(1, "keyword arguments are not allowed in expressions")])
            for a in node.args:
                self._check(a)
            return
        raise ParseError([(1, f"unsupported construct {ast.dump(node)[:40]} in {self.source!r}")])

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return FUNCTIONS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, **values):
        env = dict(self.params)
        env.update(values)
        missing = self.names - set(env)
        if missing:
            raise ValueError(f"expression {self.source!r} needs {sorted(missing)}")
        return self._eval(self.tree, env)
