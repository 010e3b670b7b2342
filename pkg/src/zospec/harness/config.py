"""INI model descriptions with sections ``[model]``, ``[grid]``, ``[fit]``, ``[mc]``.

Field values may be arithmetic expressions. Direction fields use ``w1, w2, w3``
(components of the unit direction), kappa fields use ``x1, x2``. Matrices are
written as nested lists, e.g. ``[[1 + w1**2, 0], [0, 1]]``.

Example::

    [model]
    kind = scalar_psdo
    d = 2
    g = 1
    h = 1 + 0.2*cos(2*atan2(w2, w1))

    [grid]
    L = 1.0
    n = 48, 64
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..asymptotics import DirectionFunction
from ..npelast import KappaField
from .models import (
    ModelProblem,
    build_hydrogen_model,
    build_scalar_model,
    build_schrodinger_model,
    build_vector_model,
)


class ConfigError(ValueError):
    pass


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh, "atan2": np.arctan2,
    "arctan2": np.arctan2, "minimum": np.minimum, "maximum": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}


class Expression:
    """Arithmetic expression over named variables, evaluated with numpy broadcasting."""

    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.variables = variables
        try:
            self._tree = ast.parse(text.strip(), mode="eval").body
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"only numeric constants are allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"operator not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ConfigError(f"operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"function call not allowed in {self.text!r}")
            for a in node.args:
                self._check(a)
        elif isinstance(node, ast.List):
            for e in node.elts:
                self._check(e)
        else:
            raise ConfigError(f"syntax {type(node).__name__} not allowed in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](*[self._eval(a, env) for a in node.args])
        if isinstance(node, ast.List):
            return [self._eval(e, env) for e in node.elts]
        raise ConfigError("unreachable")

    @property
    def is_matrix(self) -> bool:
        return isinstance(self._tree, ast.List)

    def __call__(self, **env):
        return self._eval(self._tree, env)


def _broadcast_matrix(rows, P: int) -> np.ndarray:
    d = len(rows)
    out = np.empty((P, d, d))
    for i, row in enumerate(rows):
        if len(row) != d:
            raise ConfigError("matrix expressions must be square")
        for j, v in enumerate(row):
            out[:, i, j] = np.broadcast_to(np.asarray(v, float), (P,))
    return out


def direction_function(text: str, d: int, form: bool) -> DirectionFunction:
    """Compile an expression in ``w1..wd`` into a :class:`DirectionFunction`."""
    names = tuple(f"w{i + 1}" for i in range(d))
    expr = Expression(str(text), names)

    def ev(om):
        P = om.shape[0]
        val = expr(**{k: om[:, i] for i, k in enumerate(names)})
        if expr.is_matrix:
            if not form:
                raise ConfigError(f"scalar field expected, got a matrix: {text!r}")
            m = _broadcast_matrix(val, P)
            if m.shape[1] != d:
                raise ConfigError(f"matrix field must be {d}x{d}")
            return m
        v = np.broadcast_to(np.asarray(val, float), (P,))
        return v[:, None, None] * np.eye(d) if form else v.copy()

    return DirectionFunction(d, ev, form, text)


def kappa_field(section: configparser.SectionProxy) -> KappaField:
    expr = Expression(section.get("expr"), ("x1", "x2"))
    x0 = tuple(_floats(section.get("maximizer", "0, 0")))
    b = _floats(section.get("bounds", "-1, 1, -1, 1"))
    if len(x0) != 2 or len(b) != 4:
        raise ConfigError("maximizer needs 2 values and bounds 4")

    def ev(x):
        return np.broadcast_to(np.asarray(expr(x1=x[:, 0], x2=x[:, 1]), float), (x.shape[0],))

    H = None
    if "hessian" in section:
        hv = _floats(section["hessian"])
        H = np.array(hv).reshape(2, 2)
    return KappaField(ev, x0, H, ((b[0], b[1]), (b[2], b[3])), section.get("expr"))


def _floats(text: str) -> list[float]:
    return [float(Expression(v, ())()) for v in str(text).split(",") if v.strip()]


@dataclass
class ModelConfig:
    model: ModelProblem
    ladder: tuple[tuple[float, int], ...]
    window: tuple[float, float] | None = None
    mc: dict = field(default_factory=dict)
    kappa: KappaField | None = None
    raw: configparser.ConfigParser | None = None


def parse_config(text: str) -> ModelConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "model" not in cp:
        raise ConfigError("missing [model] section")
    m = cp["model"]
    kind = m.get("kind", "scalar_psdo")
    d = m.getint("d", 1)

    ladder = None
    if "grid" in cp:
        g = cp["grid"]
        Ls = _floats(g.get("L", "1"))
        ns = [int(v) for v in _floats(g.get("n", "64"))]
        if len(Ls) == 1:
            Ls = Ls * len(ns)
        if len(ns) == 1:
            ns = ns * len(Ls)
        if len(Ls) != len(ns):
            raise ConfigError("grid L and n lists must have equal length")
        ladder = tuple(zip(Ls, ns))

    if kind == "hydrogen":
        model = build_hydrogen_model(m.getfloat("q", 1.0), ladder)
    elif kind == "schrodinger":
        model = build_schrodinger_model(
            d, direction_function(m.get("a2", "1"), d, True), direction_function(m.get("h", "1"), d, False),
            m.getfloat("potential_scale", 1.0), ladder, m.get("id"),
        )
    elif kind == "scalar_psdo":
        model = build_scalar_model(
            d, direction_function(m.get("g", "1"), d, True), direction_function(m.get("h", "1"), d, False),
            beta=m.getfloat("beta", 0.0), freeze=m.getboolean("freeze", False), ladder=ladder,
            quantization=cp.get("grid", "quantization", fallback="weyl"), model_id=m.get("id"),
        )
    elif kind == "vector_psdo":
        glue = m.get("glue_radius")
        model = build_vector_model(
            d, direction_function(m.get("g", "1"), d, True), direction_function(m.get("h", "1"), d, False),
            projector=m.get("projector", "block"), N=m.getint("N", None), level=m.getfloat("level", 2.0),
            glue_radius=float(glue) if glue else None, ladder=ladder, model_id=m.get("id"),
        )
    else:
        raise ConfigError(f"unknown model kind {kind!r}")

    window = None
    if "fit" in cp and cp["fit"].get("window", "auto").strip() != "auto":
        w = _floats(cp["fit"]["window"])
        if len(w) != 2:
            raise ConfigError("fit window needs two values")
        window = (w[0], w[1])
    mc = {}
    if "mc" in cp:
        s = cp["mc"]
        mc = {
            "samples": int(float(s.get("samples", "1000000"))),
            "seed": s.getint("seed", 0),
            "streams": s.getint("streams", 4),
        }
    kappa = kappa_field(cp["kappa"]) if "kappa" in cp else None
    return ModelConfig(model, ladder or model.ladder, window, mc, kappa, cp)


def load_config(path) -> ModelConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def model_fields(cfg: ModelConfig) -> tuple[DirectionFunction, DirectionFunction, int]:
    """Quadratic form and amplitude of a Schrodinger or scalar config (for coefficient commands)."""
    m = cfg.raw["model"]
    d = m.getint("d", 1)
    form_key = "a2" if m.get("kind") == "schrodinger" else "g"
    if m.get("kind") == "hydrogen":
        return DirectionFunction.constant(3, np.eye(3)), DirectionFunction.constant(3, m.getfloat("q", 1.0)), 3
    return direction_function(m.get(form_key, "1"), d, True), direction_function(m.get("h", "1"), d, False), d
