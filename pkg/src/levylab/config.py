"""Run configuration: TOML documents validated against a JSON schema.

Every schema violation is collected (with its key path) before any
computation starts.  Semantic checks that a schema cannot express, such as
unit directions or ``sigma_1 = 1``, are reported the same way.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field

import jsonschema
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import MildSchedule, PaperSchedule, StarSet
from .measures import Atoms, RadialPower
from .normalizers import Const, ExpLogLogPow, Normalizer, PowLog, PowLogLog


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_unit = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_int1 = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_vecs = {"type": "array", "items": _vec, "minItems": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj(
    {
        "seed": {"type": "integer", "minimum": 0},
        "output": _obj({"dir": {"type": "string"}, "formats": {"type": "array", "items": {"enum": ["csv", "svg"]}}}),
        "measure": _obj(
            {
                "type": {"enum": ["atoms", "radial", "construct"]},
                "points": _vecs,
                "masses": {"type": "array", "items": _pos, "minItems": 1},
                "gamma": _vec,
                "dim": _int1,
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "coef": _pos,
                "directions": _vecs,
                "weights": {"type": "array", "items": _pos},
                "symmetric": {"type": "boolean"},
            },
            ["type"],
        ),
        "normalizer": _obj(
            {
                "family": {"enum": ["const", "powloglog", "powlog", "exploglogpow"]},
                "c": _pos,
                "gamma": _pos,
                "scale": _pos,
                "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "t0": _unit,
            },
            ["family"],
        ),
        "alpha0": _obj(
            {
                "profile": {"enum": ["measure", "synthetic"]},
                "lam": {"type": "number", "minimum": 0},
                "r": _unit,
                "n_max": {"type": "integer", "minimum": 10000},
                "alpha_max": _pos,
                "samples": {"type": "integer", "minimum": 8},
                "use_v1": {"type": "boolean"},
            }
        ),
        "lil": _obj(
            {
                "profile": {"enum": ["measure", "loglog_power"]},
                "beta": _num,
                "p": {"type": "number", "exclusiveMaximum": 0.5},
                "u_max": {"type": "number", "exclusiveMinimum": math.e},
                "points": {"type": "integer", "minimum": 8},
            }
        ),
        "construct": _obj(
            {
                "directions": _vecs,
                "sigmas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "schedule": {"enum": ["mild", "paper"]},
                "beta": _pos,
                "k_max": {"type": "integer", "minimum": 2, "maximum": 64},
                "probes": {"type": "integer", "minimum": 2},
            },
            ["directions", "sigmas"],
        ),
        "membership": _obj(
            {
                "profile": {"enum": ["synthetic", "measure"]},
                "lam": _pos,
                "shape": _vecs,
                "points": _vecs,
                "epsilon": _pos,
                "r": _unit,
                "n_max": {"type": "integer", "minimum": 10000},
                "grid_points": {"type": "integer", "minimum": 8},
                "mc_budget": {"type": "integer", "minimum": 2},
            },
            ["points", "epsilon"],
        ),
        "simulate": _obj(
            {
                "r": _unit,
                "n_min": _int1,
                "n_max": _int1,
                "replications": _int1,
                "lambda_pn": {"type": "number", "minimum": 100},
                "eps_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "window": {"type": "array", "items": _int1, "minItems": 2, "maxItems": 2},
                "hit_point": _vec,
                "hit_epsilon": {"type": "number", "minimum": 0},
            }
        ),
        "inequalities": _obj(
            {
                "t": _pos,
                "b": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "delta": _pos,
                "x": {"type": "array", "items": _pos, "minItems": 1},
                "u": {"type": "array", "items": _pos, "minItems": 1},
                "mc": {"type": "integer", "minimum": 100},
                "substeps": _int1,
                "third_moment_t": {"type": "array", "items": _pos, "minItems": 1},
            }
        ),
    },
    ["measure", "normalizer"],
)


@dataclass
class RunConfig:
    raw: dict
    text_hash: str
    seed: int | None
    out_dir: str
    formats: tuple
    normalizer: Normalizer
    blocks: dict = field(default_factory=dict)

    def block(self, name: str) -> dict:
        return dict(self.blocks.get(name, {}))


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def _unit_rows(rows, where: str, errors: list[str]) -> None:
    for i, z in enumerate(rows):
        if abs(float(np.linalg.norm(z)) - 1.0) > 1e-12:
            errors.append(f"{where}.{i}: direction must be a unit vector")


def _semantic(doc: dict, errors: list[str]) -> None:
    m = doc.get("measure", {})
    kind = m.get("type")
    if kind == "atoms":
        for key in ("points", "masses"):
            if key not in m:
                errors.append(f"measure.{key}: required for atoms")
        if "points" in m and "masses" in m:
            if len(m["points"]) != len(m["masses"]):
                errors.append("measure.masses: one mass per point required")
            if len({len(p) for p in m["points"]}) > 1:
                errors.append("measure.points: inconsistent dimensions")
            for i, p in enumerate(m["points"]):
                r = float(np.linalg.norm(p))
                if not 0 < r <= 1:
                    errors.append(f"measure.points.{i}: radius must lie in (0, 1]")
    elif kind == "radial":
        for key in ("dim", "alpha", "coef"):
            if key not in m:
                errors.append(f"measure.{key}: required for radial")
    elif kind == "construct" and "construct" not in doc:
        errors.append("construct: block required when measure.type = construct")
    n = doc.get("normalizer", {})
    fam = n.get("family")
    need = {"powloglog": ("gamma",), "powlog": ("gamma",), "exploglogpow": ("scale", "theta"), "const": ()}
    for key in need.get(fam, ()):
        if key not in n:
            errors.append(f"normalizer.{key}: required for family {fam}")
    c = doc.get("construct")
    if c is not None:
        if c["sigmas"] and c["sigmas"][0] != 1:
            errors.append("construct.sigmas.0: the first segment must have sigma = 1")
        if len(c["sigmas"]) != len(c["directions"]):
            errors.append("construct.sigmas: one sigma per direction required")
        _unit_rows(c["directions"], "construct.directions", errors)
    s = doc.get("simulate")
    if s is not None and s.get("n_min", 1) > s.get("n_max", 30):
        errors.append("simulate.n_min: must not exceed n_max")


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"<document>: {exc}"]) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{_path(e)}: {e.message}" for e in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    try:
        _semantic(doc, errors)
    except (TypeError, KeyError, ValueError, AttributeError):
        # shapes already reported by the schema pass
        pass
    norm = None
    if not errors:
        try:
            norm = build_normalizer(doc["normalizer"])
        except ValueError as exc:
            errors.append(f"normalizer: {exc}")
    if errors:
        raise ConfigError(errors)
    out = doc.get("output", {})
    blocks = {k: v for k, v in doc.items() if isinstance(v, dict)}
    return RunConfig(
        raw=doc,
        text_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        seed=doc.get("seed"),
        out_dir=out.get("dir", "levylab-out"),
        formats=tuple(out.get("formats", ["csv"])),
        normalizer=norm,
        blocks=blocks,
    )


# -- builders ----------------------------------------------------------------------


def build_normalizer(spec: dict) -> Normalizer:
    fam = spec["family"]
    if fam == "const":
        h = Const(spec.get("c", 1.0))
    elif fam == "powloglog":
        h = PowLogLog(spec["gamma"])
    elif fam == "powlog":
        h = PowLog(spec["gamma"])
    else:
        h = ExpLogLogPow(spec["scale"], spec["theta"])
    return Normalizer(h, spec["t0"]) if "t0" in spec else Normalizer(h)


def build_star(block: dict) -> StarSet:
    return StarSet(np.array(block["directions"], dtype=float), np.array(block["sigmas"], dtype=float))


def build_schedule(block: dict):
    if block.get("schedule", "mild") == "paper":
        return PaperSchedule(k_max=block.get("k_max", 2))
    return MildSchedule(beta=block.get("beta", 2.0), k_max=block.get("k_max", 8))


def build_measure(cfg: RunConfig):
    """The configured measure; for ``construct`` also returns the construction."""
    m = cfg.block("measure")
    if m["type"] == "atoms":
        return Atoms(np.array(m["points"], float), np.array(m["masses"], float), m.get("gamma")), None
    if m["type"] == "radial":
        return (
            RadialPower(
                m["dim"], m["alpha"], m["coef"], m.get("directions"), m.get("weights"), m.get("symmetric", True), m.get("gamma")
            ),
            None,
        )
    from .cluster import construct_pi0

    c = cfg.block("construct")
    con = construct_pi0(build_star(c), cfg.normalizer, build_schedule(c))
    return con.measure, con
