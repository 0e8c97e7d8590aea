"""Scenario configuration: TOML text validated against a JSON schema.

Expressions are quoted strings in the scalar-field language and are parsed
during loading, so a malformed expression is reported with its config key
and column before any task runs.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from . import dsl
from .geometry import METRIC_FAMILIES, ChartedManifold, ConnectionSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = (
    "curvature",
    "tm-homothety",
    "srm-homothety",
    "scal-spaceform",
    "radius-search",
    "integrability",
    "dmu-identity",
    "chern-weil",
    "einstein-check",
    "all",
)

_expr = {"type": ["string", "number"]}
_interval = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "manifold": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "metric"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1, "maximum": 6},
                "metric": {"enum": list(METRIC_FAMILIES)},
                "R": {"type": "number", "exclusiveMinimum": 0},
                "factor": _expr,
                "matrix": {"type": "array", "items": {"type": "array", "items": _expr}},
                "domain": {"type": "array", "items": _interval},
            },
        },
        "connection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"conformal": _expr, "torsion": _expr},
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"phi1": _expr, "phi2": _expr, "f1": _expr, "f2": _expr},
        },
        "radius": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"r": _expr, "s": _expr},
        },
        "homothety": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": _expr,
                "source_lambda": _expr,
                "t": _expr,
                "f1p": _expr,
                "f2p": _expr,
                "expected": {"enum": ["homothety", "isometry", "not-homothety"]},
                "expected_psi": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "spaceform": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target": {"enum": ["positive", "negative", "both"]},
                "s": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    """Bad config: ``location`` names the offending key (and column for expressions)."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
        self.column: Optional[int] = None


@dataclass
class ScenarioConfig:
    raw: dict
    task: Optional[str]
    manifold: Optional[ChartedManifold]
    connection: Optional[ConnectionSpec]
    weights: dict = field(default_factory=dict)
    radius: dict = field(default_factory=dict)
    homothety: dict = field(default_factory=dict)
    spaceform: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return self.raw


def _expression(value: Any, where: str, dim: Optional[int]) -> dsl.Expr:
    text = repr(float(value)) if isinstance(value, (int, float)) else value
    try:
        return dsl.parse(text, dim)
    except dsl.ParseError as exc:
        err = ConfigError(str(exc), where)
        err.column = exc.column
        raise err from exc
    except dsl.DSLError as exc:
        raise ConfigError(str(exc), where) from exc


def parse_config(raw: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(exc.message, where) from exc

    man = raw.get("manifold")
    M = None
    dim = None
    if man is not None:
        dim = man["dim"]
        fam = man["metric"]
        domain = [tuple(iv) for iv in man["domain"]] if "domain" in man else None
        if domain is not None and len(domain) != dim:
            raise ConfigError("needs one interval per coordinate", "manifold.domain")
        try:
            if fam == "euclidean":
                M = ChartedManifold.euclidean(dim, domain)
            elif fam in ("sphere-stereographic", "hyperbolic-ball"):
                if "R" not in man:
                    raise ConfigError("space-form metrics need R", "manifold.R")
                ctor = ChartedManifold.sphere if fam == "sphere-stereographic" else ChartedManifold.hyperbolic
                M = ctor(dim, man["R"], domain)
            elif fam == "conformally-flat":
                if "factor" not in man:
                    raise ConfigError("conformally-flat metric needs a factor", "manifold.factor")
                M = ChartedManifold.conformally_flat(dim, _expression(man["factor"], "manifold.factor", dim), domain)
            else:
                rows = man.get("matrix")
                if rows is None:
                    raise ConfigError("explicit metric needs a matrix", "manifold.matrix")
                exprs = [
                    [_expression(e, f"manifold.matrix[{i}][{j}]", dim) for j, e in enumerate(row)]
                    for i, row in enumerate(rows)
                ]
                M = ChartedManifold.explicit(exprs, domain)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), "manifold") from exc

    def exprs(section: str, keys) -> dict:
        block = raw.get(section, {})
        out = {}
        for k in keys:
            if k in block:
                out[k] = _expression(block[k], f"{section}.{k}", dim)
        return out

    conn = exprs("connection", ("conformal", "torsion"))
    C = ConnectionSpec(M, conn.get("conformal"), conn.get("torsion")) if M is not None else None
    weights = exprs("weights", ("phi1", "phi2", "f1", "f2"))
    for a, b in (("phi1", "f1"), ("phi2", "f2")):
        if a in weights and b in weights:
            raise ConfigError(f"give either {a} or {b}, not both", f"weights.{b}")
    hom = exprs("homothety", ("lambda", "source_lambda", "t", "f1p", "f2p"))
    for k in ("expected", "expected_psi"):
        if k in raw.get("homothety", {}):
            hom[k] = raw["homothety"][k]
    return ScenarioConfig(
        raw=raw,
        task=raw.get("task"),
        manifold=M,
        connection=C,
        weights=weights,
        radius=exprs("radius", ("r", "s")),
        homothety=hom,
        spaceform=dict(raw.get("spaceform", {})),
        sampling=dict(raw.get("sampling", {})),
    )


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), str(p)) from exc
    return parse_config(raw)
