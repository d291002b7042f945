"""TOML model configuration.

Schema::

    [model]
    name = "two_patch"
    description = "free text"
    stages = 2                  # m
    patches = 2                 # n

    [parameters]                # optional named scalars, evaluated in order
    R = "1/4"
    d = 1

    [[patch]]                   # one table per patch, in patch order
    fecundity = [0, "R/s"]      # m values
    stay = [0, 0]               # m values
    advance = ["s"]             # m-1 values

    [dispersion]
    layout = "destination-rows" # or "source-rows"
    stage1 = [["1-d", 0], ["d", 1]]   # n x n; omitted stages do not disperse

    [[initial]]                 # optional initial population
    stage = 1
    patch = 2
    count = 1

Every number may be written as a TOML number, a fraction string ("3/7") or
an arithmetic expression over earlier parameters ("R/(p*s)", "1 - d").
Supported operators are + - * / ** and the function sqrt. Stage and patch
numbers are 1-based throughout.
"""
from __future__ import annotations

import ast
import copy
import math
import operator
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .demography import StageVitals, build_usher
from .dispersion import STOCHASTIC_TOL, DispersionSpec
from .errors import ValidationError
from .model import GlobalModel, assemble

RENORMALIZE_TOL = 1e-9

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sqrt": math.sqrt}


class ConfigError(ValidationError):
    """Config file problem, addressed by field path."""

    def __init__(self, where, message, condition="input"):
        super().__init__(f"{where}: {message}", condition)
        self.where = where


def evaluate(expr, names=None, where="value"):
    """Evaluate a number, fraction string or arithmetic expression exactly
    where possible (Fraction arithmetic) and return a float."""
    names = names or {}
    if isinstance(expr, bool):
        raise ConfigError(where, "expected a number, got a boolean")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise ConfigError(where, f"expected a number or expression, got {type(expr).__name__}")
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(where, f"cannot parse expression {expr!r}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return Fraction(node.value) if isinstance(node.value, int) else node.value
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ConfigError(where, f"unknown parameter {node.id!r} in {expr!r}")
            return names[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Div) and right == 0:
                raise ConfigError(where, f"division by zero in {expr!r}")
            out = _BINOPS[type(node.op)](left, right)
            return out if isinstance(out, (Fraction, float)) else float(out)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](float(ev(node.args[0])))
        raise ConfigError(where, f"unsupported syntax in {expr!r}")

    value = ev(tree)
    if isinstance(value, complex):
        raise ConfigError(where, f"{expr!r} is not real")
    return float(value)


def _exact(expr, names, where):
    # keep Fractions for parameters so later expressions stay exact
    if isinstance(expr, int) and not isinstance(expr, bool):
        return Fraction(expr)
    if isinstance(expr, str):
        try:
            return Fraction(expr.strip())
        except (ValueError, ZeroDivisionError):
            pass
        try:
            tree = ast.parse(expr.strip(), mode="eval")
        except SyntaxError:
            raise ConfigError(where, f"cannot parse expression {expr!r}") from None
        if isinstance(tree.body, ast.Name) and tree.body.id in names:
            return names[tree.body.id]
        value = evaluate(expr, names, where)
        # re-evaluate with Fractions when the expression is rational
        try:
            exact = _rational(tree.body, names)
        except (TypeError, ValueError, ZeroDivisionError):
            return value
        return exact if exact is not None else value
    return evaluate(expr, names, where)


def _rational(node, names):
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return Fraction(node.value)
    if isinstance(node, ast.Name):
        v = names[node.id]
        return v if isinstance(v, Fraction) else None
    if isinstance(node, ast.UnaryOp):
        v = _rational(node.operand, names)
        return None if v is None else (-v if isinstance(node.op, ast.USub) else v)
    if isinstance(node, ast.BinOp) and type(node.op) in (ast.Add, ast.Sub, ast.Mult, ast.Div):
        a, b = _rational(node.left, names), _rational(node.right, names)
        if a is None or b is None:
            return None
        return _BINOPS[type(node.op)](a, b)
    return None


@dataclass(frozen=True)
class ModelConfig:
    name: str
    description: str
    m: int
    n: int
    vitals: tuple
    dispersion: DispersionSpec
    initial: Optional[np.ndarray]
    parameters: dict
    raw: dict = field(repr=False, compare=False)

    def build_model(self) -> GlobalModel:
        return assemble([build_usher(v) for v in self.vitals], self.dispersion)

    def with_value(self, path: str, value) -> "ModelConfig":
        """Copy of this config with the scalar at dotted ``path`` replaced.

        ``path`` addresses the raw TOML document, e.g. ``parameters.d`` or
        ``patch.2.stay.1`` (list positions are 1-based).
        """
        raw = copy.deepcopy(self.raw)
        node = raw
        parts = path.split(".")
        for depth, key in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(key) - 1
                except ValueError:
                    raise ConfigError(path, f"{key!r} is not a list position") from None
                if not 0 <= idx < len(node):
                    raise ConfigError(path, f"position {key} out of range")
                if last:
                    _check_scalar(node[idx], path)
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if key not in node:
                    raise ConfigError(path, f"no field {key!r}")
                if last:
                    _check_scalar(node[key], path)
                    node[key] = value
                else:
                    node = node[key]
            else:
                raise ConfigError(path, "path descends into a scalar")
        return parse_config(raw)


def _check_scalar(v, path):
    if isinstance(v, (dict, list)) or isinstance(v, bool):
        raise ConfigError(path, "path does not address a numeric scalar")


def _table(doc, key, where=None):
    v = doc.get(key)
    if not isinstance(v, dict):
        raise ConfigError(where or key, "missing table")
    return v


def _int(table, key, where):
    v = table.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"{where}.{key}", "expected a positive integer")
    return v


def _vector(values, length, names, where):
    if not isinstance(values, list) or len(values) != length:
        raise ConfigError(where, f"expected a list of {length} values")
    return [evaluate(v, names, f"{where}[{i + 1}]") for i, v in enumerate(values)]


def parse_config(doc: dict) -> ModelConfig:
    model = _table(doc, "model")
    m = _int(model, "stages", "model")
    n = _int(model, "patches", "model")
    if m < 2:
        raise ConfigError("model.stages", "need at least 2 stages")

    names = {}
    for key, expr in (doc.get("parameters") or {}).items():
        names[key] = _exact(expr, names, f"parameters.{key}")
    fnames = {k: float(v) for k, v in names.items()}

    patches = doc.get("patch")
    if not isinstance(patches, list) or len(patches) != n:
        raise ConfigError("patch", f"expected {n} [[patch]] tables")
    vitals = []
    for i, p in enumerate(patches, start=1):
        where = f"patch[{i}]"
        f = _vector(p.get("fecundity"), m, fnames, f"{where}.fecundity")
        s = _vector(p.get("stay"), m, fnames, f"{where}.stay")
        a = _vector(p.get("advance"), m - 1, fnames, f"{where}.advance")
        try:
            vitals.append(StageVitals(tuple(f), tuple(s), tuple(a)))
        except ValidationError as exc:
            raise ConfigError(where, str(exc), exc.condition) from None

    disp = doc.get("dispersion") or {}
    layout = disp.get("layout", "destination-rows")
    if layout not in ("destination-rows", "source-rows"):
        raise ConfigError("dispersion.layout", "must be 'destination-rows' or 'source-rows'")
    d = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    for key in disp:
        if key == "layout":
            continue
        if not (key.startswith("stage") and key[5:].isdigit() and 1 <= int(key[5:]) <= m):
            raise ConfigError(f"dispersion.{key}", f"expected keys stage1..stage{m}")
    for k in range(m):
        key = f"stage{k + 1}"
        if key not in disp:
            continue
        rows = disp[key]
        where = f"dispersion.{key}"
        if not isinstance(rows, list) or len(rows) != n:
            raise ConfigError(where, f"expected an {n}x{n} table")
        table = np.array([_vector(r, n, fnames, f"{where}[{i + 1}]") for i, r in enumerate(rows)])
        if layout == "source-rows":
            table = table.T
        if (table < 0).any() or (table > 1).any():
            raise ConfigError(where, "probabilities must lie in [0, 1]", "dispersal-conservation")
        sums = table.sum(axis=0)
        for j, total in enumerate(sums, start=1):
            if abs(total - 1.0) > RENORMALIZE_TOL:
                raise ConfigError(
                    where,
                    f"probabilities leaving patch {j} sum to {total:.12g}, must sum to 1 "
                    "(dispersal conservation)",
                    "dispersal-conservation",
                )
        if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
            table = table / sums
        d[k] = table
    spec = DispersionSpec(d)

    initial = None
    if "initial" in doc:
        entries = doc["initial"]
        if not isinstance(entries, list):
            raise ConfigError("initial", "expected [[initial]] tables")
        initial = np.zeros(m * n)
        for idx, e in enumerate(entries, start=1):
            where = f"initial[{idx}]"
            k = _int(e, "stage", where)
            i = _int(e, "patch", where)
            if k > m or i > n:
                raise ConfigError(where, f"stage/patch out of range for m={m}, n={n}")
            count = evaluate(e.get("count"), fnames, f"{where}.count")
            if count < 0:
                raise ConfigError(where, "count must be nonnegative")
            initial[(k - 1) + (i - 1) * m] += count

    return ModelConfig(
        name=str(model.get("name", "")),
        description=str(model.get("description", "")),
        m=m,
        n=n,
        vitals=tuple(vitals),
        dispersion=spec,
        initial=initial,
        parameters=fnames,
        raw=copy.deepcopy(doc),
    )


def load_config(path) -> ModelConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML syntax error: {exc}") from None
    return parse_config(doc)


BUNDLED_DIR = Path(__file__).parent / "configs"


def bundled_config_path(name: str) -> Path:
    path = BUNDLED_DIR / f"{name}.toml"
    if not path.exists():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return path


def bundled_names() -> list:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.toml"))
