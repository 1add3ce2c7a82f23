"""Experiment configuration files.

INI-style text: ``[section]`` headers and ``key = value`` lines, ``#``
comments. Values are Python literals (numbers, quoted strings, lists,
``true``/``false``); coefficient keys hold arithmetic expressions in
``x1 .. xn``. Unknown sections or keys are errors.

Example::

    [problem]
    name = "sign-switch-drift"
    f2 = "1 + 0.5*sin(pi*x1)"

    [grid]
    nodes = 101

    [generator]
    kind = "entropy"

    [run]
    eps = [0.4, 0.2, 0.1]
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import math
import operator
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .problems import BUILTIN

DEFAULT_EPS = (0.4, 0.2, 0.1, 0.05, 0.025)
GENERATORS = ("max", "entropy", "chks", "zang")

_COEF = re.compile(r"^(?:a(\d+)(?:_(\d)(\d))?|b(\d+)_(\d)|c(\d+)|f(\d+)|g)$")
_DELTA = re.compile(r"^d(?:a(\d+)(?:_(\d)(\d))?|b(\d+)_(\d)|c(\d+)|f(\d+)|g)$")


# ---------------------------------------------------------------------------
# expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}


class Expression:
    """Arithmetic expression in ``x1 .. xn`` evaluated on node coordinates."""

    def __init__(self, text: str, n: int | None = None):
        self.text = text
        src = text.replace("^", "**").replace("·", "*")
        try:
            self._tree = ast.parse(src, mode="eval").body
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self.max_var = 0
        self._check(self._tree)
        if n is not None and self.max_var > n:
            raise ConfigError(f"expression {text!r} uses x{self.max_var} in a {n}D problem")

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name):
            m = re.fullmatch(r"x([1-9]\d*)", node.id)
            if m:
                self.max_var = max(self.max_var, int(m.group(1)))
            elif node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in expression {self.text!r}")
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            self._check(node.args[0])
        else:
            raise ConfigError(f"unsupported syntax in expression {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        return _FUNCS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        env = {f"x{i + 1}": coords[:, i] for i in range(coords.shape[1])}
        with np.errstate(all="raise"):
            try:
                out = self._eval(self._tree, env)
            except (FloatingPointError, ZeroDivisionError, KeyError) as exc:
                raise ConfigError(f"cannot evaluate {self.text!r}: {exc}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), (coords.shape[0],)).copy()


# ---------------------------------------------------------------------------
# config record


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "uniform-f"
    K: int | None = None
    nu: float | None = None  # required for inline problems
    domain: tuple | None = None  # ((lo, hi), ...) for inline problems
    coefficients: dict = field(default_factory=dict)  # key -> expression text
    nodes: int | tuple = 101
    generator: str = "entropy"
    eps: tuple = DEFAULT_EPS
    beta: float = 0.5
    seed: int = 0
    threads: int = 1
    tol: float = 1e-10
    max_iter: int = 200
    tie_tol: float = 1e-9
    t: tuple = (1e-1, 5e-2, 2.5e-2)
    perturbation: dict = field(default_factory=dict)  # key -> expression text
    x0: tuple = (0.5,)
    n_paths: int = 10000
    dt: float = 1e-4
    bridge: bool = True
    gap_threshold: float = 0.5
    surface_range: float = 2.0
    surface_points: int = 41
    simplex_points: int = 20
    out: str = "out"


# section -> {file key: config attribute}
_LAYOUT = {
    "problem": {"name": "problem", "K": "K", "nu": "nu", "domain": "domain"},
    "grid": {"nodes": "nodes"},
    "generator": {"kind": "generator"},
    "run": {"eps": "eps", "beta": "beta", "seed": "seed", "threads": "threads"},
    "solver": {"tol": "tol", "max_iter": "max_iter", "tie_tol": "tie_tol"},
    "perturbation": {"t": "t"},
    "montecarlo": {"x0": "x0", "n_paths": "n_paths", "dt": "dt", "bridge": "bridge"},
    "exact_reg": {"gap_threshold": "gap_threshold"},
    "surface": {"range": "surface_range", "points": "surface_points",
                "simplex_points": "simplex_points"},
    "output": {"dir": "out"},
}


def _literal(text, section, key, lineno):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        if re.fullmatch(r"[A-Za-z0-9_.\-]+", t):
            return t  # bare word such as a generator name
        raise ConfigError(f"cannot parse value {t!r}", line=lineno, key=f"{section}.{key}") from None


def _expr_text(text):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        t = t[1:-1]
    return t


def _tuple_of(value, typ, key, allow_scalar=True):
    if isinstance(value, (list, tuple)):
        items = value
    elif allow_scalar:
        items = [value]
    else:
        raise ConfigError("expected a list", key=key)
    try:
        return tuple(typ(v) for v in items)
    except (TypeError, ValueError):
        raise ConfigError(f"bad entries in {value!r}", key=key) from None


def _coerce(attr, value, key):
    """Type-check one parsed value for attribute ``attr``."""
    try:
        if attr in ("problem", "generator", "out"):
            if not isinstance(value, str):
                raise TypeError
            return value
        if attr in ("K", "seed", "threads", "max_iter", "n_paths", "surface_points", "simplex_points"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if attr == "bridge":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if attr in ("nu", "beta", "tol", "tie_tol", "dt", "gap_threshold", "surface_range"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if attr == "nodes":
            if isinstance(value, (list, tuple)):
                return tuple(int(v) for v in value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
            return value
        if attr in ("eps", "t", "x0"):
            return _tuple_of(value, float, key)
        if attr == "domain":
            dom = tuple(tuple(float(v) for v in pair) for pair in value)
            if any(len(p) != 2 for p in dom):
                raise TypeError
            return dom
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r}", key=key) from None
    raise ConfigError("unknown key", key=key)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    def bad(key, msg):
        raise ConfigError(msg, key=key)

    if cfg.problem != "custom" and cfg.problem not in BUILTIN:
        bad("problem.name", f"unknown problem {cfg.problem!r}; builtin: {', '.join(BUILTIN)} or custom")
    if cfg.problem == "custom":
        if cfg.nu is None or cfg.domain is None or cfg.K is None:
            bad("problem", "custom problems need K, nu and domain")
    if cfg.K is not None and cfg.K < 1:
        bad("problem.K", "K must be positive")
    if cfg.nu is not None and not cfg.nu > 0:
        bad("problem.nu", "nu must be positive")
    if cfg.generator not in GENERATORS:
        bad("generator.kind", f"unknown generator {cfg.generator!r}")
    if not cfg.eps or any(not (e >= 0 and math.isfinite(e)) for e in cfg.eps):
        bad("run.eps", "eps entries must be finite and nonnegative")
    if not 0 < cfg.beta <= 1:
        bad("run.beta", "beta must lie in (0, 1]")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        bad("run.seed", "seed must be an unsigned 64-bit integer")
    if cfg.threads < 1:
        bad("run.threads", "threads must be at least 1")
    if not cfg.tol > 0:
        bad("solver.tol", "tol must be positive")
    if cfg.max_iter < 1:
        bad("solver.max_iter", "max_iter must be at least 1")
    if not cfg.tie_tol >= 0:
        bad("solver.tie_tol", "tie_tol must be nonnegative")
    if any(t < 0 for t in cfg.t):
        bad("perturbation.t", "t entries must be nonnegative")
    if cfg.n_paths < 2:
        bad("montecarlo.n_paths", "need at least 2 paths")
    if not cfg.dt > 0:
        bad("montecarlo.dt", "dt must be positive")
    if not cfg.gap_threshold > 0:
        bad("exact_reg.gap_threshold", "gap_threshold must be positive")
    nodes = cfg.nodes if isinstance(cfg.nodes, tuple) else (cfg.nodes,)
    if any(m < 3 for m in nodes):
        bad("grid.nodes", "need at least 3 nodes per axis")
    for key, text in cfg.coefficients.items():
        if not _COEF.match(key):
            bad(f"problem.{key}", "unknown coefficient key")
        Expression(text)
    for key, text in cfg.perturbation.items():
        if not _DELTA.match(key):
            bad(f"perturbation.{key}", "unknown perturbation key")
        Expression(text)
    return cfg


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None, strict=True)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line=lineno) from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(exc.message.splitlines()[0], line=line) from None
    lines = text.splitlines()

    def lineno_of(section, key):
        current = None
        for i, raw in enumerate(lines, 1):
            s = raw.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
            elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
                return i
        return None

    values = {}
    coefs, deltas = {}, {}
    for section in parser.sections():
        if section not in _LAYOUT:
            raise ConfigError(f"unknown section [{section}]", line=_section_line(lines, section))
        for key, raw in parser.items(section):
            where = dict(line=lineno_of(section, key), key=f"{section}.{key}")
            if section == "problem" and key not in _LAYOUT[section]:
                if not _COEF.match(key):
                    raise ConfigError("unknown key", **where)
                coefs[key] = _expr_text(raw)
                continue
            if section == "perturbation" and key != "t":
                if not _DELTA.match(key):
                    raise ConfigError("unknown key", **where)
                deltas[key] = _expr_text(raw)
                continue
            attr = _LAYOUT[section].get(key)
            if attr is None:
                raise ConfigError("unknown key", **where)
            try:
                values[attr] = _coerce(attr, _literal(raw, section, key, where["line"]), where["key"])
            except ConfigError as exc:
                if exc.line is None:
                    raise ConfigError(exc.message, **where) from None
                raise
    cfg = ExperimentConfig(coefficients=coefs, perturbation=deltas, **values)
    try:
        return validate_config(cfg)
    except ConfigError as exc:
        if exc.key and exc.line is None:
            sec, _, k = exc.key.partition(".")
            raise ConfigError(exc.message, line=lineno_of(sec, k) if k else None, key=exc.key) from None
        raise


def _section_line(lines, section):
    for i, raw in enumerate(lines, 1):
        if raw.strip() == f"[{section}]":
            return i
    return None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, str):
        return '"' + value + '"'
    return repr(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config_text(serialize(c)) == c``."""
    out = []
    for section, keys in _LAYOUT.items():
        body = []
        for key, attr in keys.items():
            v = getattr(cfg, attr)
            if v is not None:
                body.append(f"{key} = {_fmt(v)}")
        extra = cfg.coefficients if section == "problem" else (
            cfg.perturbation if section == "perturbation" else {})
        body += [f'{k} = "{extra[k]}"' for k in sorted(extra)]
        out.append(f"[{section}]\n" + "\n".join(body) + "\n")
    return "\n".join(out)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode("utf-8")).hexdigest()


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return validate_config(replace(cfg, **kw)) if kw else cfg


__all__ = ["ExperimentConfig", "Expression", "parse_config", "parse_config_text", "serialize",
           "config_hash", "validate_config", "with_overrides", "DEFAULT_EPS"]
