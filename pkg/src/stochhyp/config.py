"""Experiment configuration: schema, defaults, presets and builders.

A configuration is a JSON document.  Coefficients and forcings are either
numbers, sample lists, or expressions in ``x`` (and ``t`` where time
dependence makes sense) over a small whitelist of numpy functions.
Initial data may also be a named preset or a list of Fourier
coefficients.
"""
from __future__ import annotations

import ast
import copy
import json
import operator
from pathlib import Path

import jsonschema
import numpy as np

from .evolve import EvolveConfig, SpdeProblem
from .grid import Field, Grid1D
from .noise import CameronMartinPath
from .symbols import SeparableSymbol, TimeSymbolFamily, make_symmetrized_transport, make_transport

__all__ = [
    "ConfigError",
    "SUBCOMMANDS",
    "SCHEMA",
    "DEFAULTS",
    "load_config",
    "validate",
    "with_defaults",
    "evaluate_expression",
    "preset",
    "build_grid",
    "build_problem",
    "build_evolve_config",
    "build_h",
    "initial_function",
]

SUBCOMMANDS = ("simulate", "characteristics", "wavefront", "wong-zakai", "small-noise", "ldp", "support",
               "malliavin", "check-conditions", "selftest")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


# -- expressions ------------------------------------------------------------

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "sinh": np.sinh, "cosh": np.cosh, "arctan": np.arctan,
    "sign": np.sign, "minimum": np.minimum, "maximum": np.maximum, "mod": np.mod,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow, ast.Mod: operator.mod}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_CMPOPS = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt, ast.GtE: operator.ge}


def evaluate_expression(expr: str, **variables):
    """Evaluate an arithmetic expression over whitelisted names only.

    >>> float(evaluate_expression("1 + 0.5*sin(x)", x=0.0))
    1.0
    """
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            if node.id == "j":
                return 1j
            raise ConfigError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
            res = _CMPOPS[type(node.ops[0])](ev(node.left), ev(node.comparators[0]))
            return np.asarray(res, dtype=float)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ConfigError(f"unsupported construct {type(node).__name__} in {expr!r}")

    return ev(tree)


# -- presets ----------------------------------------------------------------

def preset(name: str, L: float = 2 * np.pi, center: float | None = None, width: float | None = None,
           amplitude: float = 1.0):
    """Closed-form periodic initial data as callables of ``x``.

    * ``gaussian_bump``: ``exp((cos(2 pi (x - c)/L) - 1) / k^2)`` with
      ``k = 2 pi width / L``; smooth, Gaussian of std ``width`` near ``c``.
    * ``triangle_kink``: ``|sin(pi (x - c) / L)|``, one kink per period at ``c``.
    * ``step``: 1 on ``[c - L/4, c + L/4)``, 0 elsewhere.
    * ``sine``: ``sin(2 pi (x - c) / L)``.
    """
    c = L / 2 if center is None else float(center)
    w = L / (2 * np.pi) if width is None else float(width)
    if name == "gaussian_bump":
        k2 = (2 * np.pi * w / L) ** 2
        return lambda x: amplitude * np.exp((np.cos(2 * np.pi * (np.asarray(x) - c) / L) - 1.0) / k2)
    if name == "triangle_kink":
        return lambda x: amplitude * np.abs(np.sin(np.pi * (np.asarray(x) - c) / L))
    if name == "step":
        return lambda x: amplitude * (np.mod(np.asarray(x) - c + L / 4, L) < L / 2).astype(float)
    if name == "sine":
        return lambda x: amplitude * np.sin(2 * np.pi * (np.asarray(x) - c) / L)
    raise ConfigError(f"unknown preset {name!r}")


def preset_kinks(spec: dict, L: float) -> list[float]:
    """Positions of the non-smooth points of a preset datum."""
    c = L / 2 if spec.get("center") is None else float(spec["center"])
    name = spec.get("preset")
    if name == "triangle_kink":
        return [float(np.mod(c, L))]
    if name == "step":
        return sorted([float(np.mod(c - L / 4, L)), float(np.mod(c + L / 4, L))])
    return []


# -- schema -----------------------------------------------------------------

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM}
_COEF = {"oneOf": [_NUM, {"type": "string"}, _NUMS, {"type": "null"}]}
_SYMBOL = {
    "oneOf": [
        {"type": "null"},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["symmetrized_transport", "transport", "terms"]},
                "alpha": _COEF,
                "a0": _COEF,
                "order": _NUM,
                "terms": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["x_coef", "xi_mult"],
                        "properties": {
                            "x_coef": _COEF,
                            "x_coef_im": _COEF,
                            "xi_mult": {"oneOf": [{"enum": ["i*xi", "1", "abs(xi)"]}, _NUMS]},
                            "side": {"enum": ["left", "right"]},
                        },
                    },
                },
            },
        },
    ]
}
_U0 = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": ["gaussian_bump", "triangle_kink", "step", "sine"]},
        "center": {"oneOf": [_NUM, {"type": "null"}]},
        "width": {"oneOf": [_NUM, {"type": "null"}]},
        "amplitude": _NUM,
        "expr": {"type": "string"},
        "fourier": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3}},
        "samples": _NUMS,
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["subcommand"],
    "properties": {
        "subcommand": {"enum": list(SUBCOMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"N": {"type": "integer", "minimum": 8}, "L": {"type": "number", "exclusiveMinimum": 0}},
        },
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": _SYMBOL,
                "b": _SYMBOL,
                "u0": _U0,
                "f": _COEF,
                "g": _COEF,
                "s": _NUM,
                "T": {"type": "number", "exclusiveMinimum": 0},
                "noise_scale": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["heun", "midpoint", "euler"]},
                "mollifier_eps": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "null"}]},
                "substeps": {"type": "integer", "minimum": 1},
                "dealias": {"type": "boolean"},
                "record_every": {"type": "integer", "minimum": 1},
                "stability_budget": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "null"}]},
                "energy": {"type": "boolean"},
            },
        },
        "study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "P": {"type": "integer", "minimum": 2},
                "path_index": {"type": "integer", "minimum": 0},
                "ns": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "eps_list": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "h": {"oneOf": [{"type": "string"}, {"type": "null"}]},
                "skeletons": {"type": "array", "items": {"type": "string"}},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"oneOf": [_NUM, _NUMS]},
                "norm_index": {"oneOf": [_NUM, {"type": "null"}]},
                "theta": _NUM,
                "t": _NUM,
                "x_point": _NUM,
                "stride": {"type": "integer", "minimum": 1},
                "threshold": _NUM,
                "thresholds": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: _NUM for k in ("A", "B", "L", "M")},
                },
                "trials": {"type": "integer", "minimum": 1},
                "sign": {"enum": [-1, 1]},
                "output_stride": {"type": "integer", "minimum": 1},
                "window_width": {"oneOf": [_NUM, {"type": "null"}]},
                "band_fraction": _NUM,
                "rel_threshold": _NUM,
                "record_every": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULTS = {
    "seed": 12345,
    "output_dir": "stochhyp-out",
    "grid": {"N": 256, "L": 2 * np.pi},
    "problem": {
        "a": {"kind": "symmetrized_transport", "alpha": 1.0},
        "b": None,
        "u0": {"preset": "gaussian_bump", "center": None, "width": None, "amplitude": 1.0},
        "f": None,
        "g": None,
        "s": 0.0,
        "T": 1.0,
        "noise_scale": 1.0,
    },
    "solver": {
        "M": 4096,
        "scheme": "heun",
        "mollifier_eps": None,
        "substeps": 1,
        "dealias": False,
        "record_every": 1,
        "stability_budget": 1.0,
        "energy": True,
    },
    "study": {
        "P": 64,
        "path_index": 0,
        "ns": [8, 16, 32, 64, 128],
        "eps_list": [1e-1, 1e-2, 1e-3, 1e-4],
        "h": None,
        "skeletons": ["0*t"],
        "eta": 0.1,
        "delta": [0.5, 0.25],
        "norm_index": None,
        "theta": 0.25,
        "t": 1.0,
        "x_point": 1.0,
        "stride": 16,
        "threshold": 1e-10,
        "thresholds": {"A": 1e-8, "B": 1e3, "L": 1e-8, "M": 1e-8},
        "trials": 8,
        "sign": -1,
        "output_stride": 64,
        "window_width": None,
        "band_fraction": 1.0 / 3.0,
        "rel_threshold": 0.5,
        "record_every": 256,
    },
}


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("a", "b", "u0"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def with_defaults(cfg: dict) -> dict:
    """Validated config with every default filled in (what the manifest records)."""
    validate(cfg)
    full = _merge(DEFAULTS, cfg)
    if "u0" in cfg.get("problem", {}):
        full["problem"]["u0"] = copy.deepcopy(cfg["problem"]["u0"])
    n = full["grid"]["N"]
    if n & (n - 1):
        raise ConfigError(f"grid/N: {n} is not a power of two")
    validate(full)
    return full


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    validate(cfg)
    return cfg


# -- builders ---------------------------------------------------------------

def build_grid(cfg: dict) -> Grid1D:
    try:
        return Grid1D(cfg["grid"]["N"], cfg["grid"]["L"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _samples(grid: Grid1D, spec, name: str, t: float | None = None, complex_ok: bool = True):
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return np.full(grid.num_points, float(spec))
    if isinstance(spec, list):
        v = np.asarray(spec, dtype=float)
        if v.shape != (grid.num_points,):
            raise ConfigError(f"{name}: sample list must have {grid.num_points} entries")
        return v
    vars_ = {"x": grid.nodes}
    if t is not None:
        vars_["t"] = t
    v = evaluate_expression(spec, **vars_)
    v = np.broadcast_to(np.asarray(v, dtype=complex if complex_ok else float), (grid.num_points,)).copy()
    return v


def _symbol(grid: Grid1D, spec) -> SeparableSymbol | None:
    if spec is None:
        return None
    kind = spec["kind"]
    try:
        if kind in ("symmetrized_transport", "transport"):
            alpha = _samples(grid, spec.get("alpha", 1.0), "alpha")
            if np.any(np.abs(np.imag(alpha)) > 0):
                raise ConfigError("alpha must be real")
            alpha = np.real(alpha)
            a0 = _samples(grid, spec.get("a0"), "a0")
            maker = make_symmetrized_transport if kind == "symmetrized_transport" else make_transport
            return maker(grid, alpha, a0)
        terms = []
        for term in spec["terms"]:
            c = _samples(grid, term["x_coef"], "x_coef").astype(complex)
            if term.get("x_coef_im") is not None:
                c = c + 1j * _samples(grid, term["x_coef_im"], "x_coef_im")
            m = term["xi_mult"]
            if isinstance(m, list):
                m = np.asarray(m, dtype=complex)
                if m.shape != (grid.num_points,):
                    raise ConfigError(f"xi_mult: sample list must have {grid.num_points} entries")
            terms.append((c, m, term.get("side", "left")))
        return SeparableSymbol(grid, terms, order=spec.get("order"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"symbol: {exc}") from None


def initial_function(cfg: dict):
    """Callable ``x -> u0(x)`` when the datum has a closed form, else ``None``."""
    spec = cfg["problem"]["u0"]
    L = cfg["grid"]["L"]
    if "preset" in spec:
        return preset(spec["preset"], L, spec.get("center"), spec.get("width"), spec.get("amplitude", 1.0))
    if "expr" in spec:
        return lambda x: evaluate_expression(spec["expr"], x=np.asarray(x, dtype=float))
    if "fourier" in spec:
        modes = [(int(m[0]), m[1] + 1j * (m[2] if len(m) > 2 else 0.0)) for m in spec["fourier"]]

        def fn(x):
            x = np.asarray(x, dtype=float)
            return sum(c * np.exp(2j * np.pi * k * x / L) for k, c in modes)
        return fn
    return None


def build_initial(cfg: dict, grid: Grid1D) -> Field:
    spec = cfg["problem"]["u0"]
    keys = [k for k in ("preset", "expr", "fourier", "samples") if k in spec]
    if len(keys) != 1:
        raise ConfigError("problem/u0: give exactly one of preset, expr, fourier, samples")
    if "samples" in spec:
        v = np.asarray(spec["samples"], dtype=float)
        if v.shape != (grid.num_points,):
            raise ConfigError(f"problem/u0/samples: need {grid.num_points} entries")
        return Field(grid, v)
    fn = initial_function(cfg)
    return Field(grid, np.broadcast_to(fn(grid.nodes), (grid.num_points,)))


def _forcing(grid: Grid1D, spec):
    if spec is None:
        return None
    if isinstance(spec, str) and "t" in _names(spec):
        return lambda t: _samples(grid, spec, "forcing", t=t)
    return _samples(grid, spec, "forcing")


def _names(expr: str) -> set:
    try:
        return {n.id for n in ast.walk(ast.parse(expr, mode="eval")) if isinstance(n, ast.Name)}
    except SyntaxError:
        raise ConfigError(f"cannot parse expression {expr!r}") from None


def build_problem(cfg: dict) -> SpdeProblem:
    grid = build_grid(cfg)
    pr = cfg["problem"]
    T = float(pr["T"])
    sa = _symbol(grid, pr["a"])
    sb = _symbol(grid, pr["b"])
    fam_a = TimeSymbolFamily.constant(sa, T) if sa is not None else None
    fam_b = TimeSymbolFamily.constant(sb, T) if sb is not None else None
    try:
        return SpdeProblem(build_initial(cfg, grid), fam_a, fam_b, _forcing(grid, pr["f"]), _forcing(grid, pr["g"]),
                           float(pr["s"]), T, float(pr["noise_scale"]))
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None


def build_evolve_config(cfg: dict) -> EvolveConfig:
    so = cfg["solver"]
    try:
        return EvolveConfig(steps=so["M"], mollifier_eps=so["mollifier_eps"], scheme=so["scheme"],
                            substeps_per_segment=so["substeps"], record_every=so["record_every"],
                            dealias=so["dealias"], stability_budget=so["stability_budget"], energy=so["energy"])
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def build_h(expr: str | None, T: float, steps: int) -> CameronMartinPath:
    """Cameron-Martin path from an expression ``h(t)`` (shifted so ``h(0) = 0``)."""
    if expr is None:
        return CameronMartinPath.zero(T, steps)
    t = np.linspace(0.0, T, steps + 1)
    v = np.broadcast_to(np.asarray(evaluate_expression(expr, t=t), dtype=float), t.shape)
    return CameronMartinPath.from_values(T, v - v[0])
