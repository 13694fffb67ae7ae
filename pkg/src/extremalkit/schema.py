"""File formats: system definitions, queries, trajectories and reports.

Definitions and reports are JSON with a ``schema_version`` field.  Channel
indices in files are 1-based.  Rational numbers may be written as JSON
integers, floats or strings such as ``"3/5"``; an angle coordinate of a state
is either radians or a ``[cos, sin]`` pair.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .expr import ANGLE, ExprError, ParseError, VariableRegistry, parse_expr
from .lie import VectorField
from .mech import AffineSystem, BuildError, MechanicalSystemSpec, build_affine

SCHEMA_VERSION = 1
TOOL_VERSION = "0.1.0"


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scalars
# ---------------------------------------------------------------------------


def parse_number(v, what: str = "value"):
    """JSON scalar -> Fraction (ints, rational strings) or float."""
    if isinstance(v, bool):
        raise SchemaError(f"{what}: booleans are not numbers")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return v
    if isinstance(v, str):
        text = v.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            pass
        try:
            return float(text)
        except ValueError:
            raise SchemaError(f"{what}: cannot read number {v!r}") from None
    raise SchemaError(f"{what}: expected a number, got {type(v).__name__}")


def number_to_json(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else str(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def parse_state(registry: VariableRegistry, values, what: str = "state") -> list:
    if not isinstance(values, (list, tuple)):
        raise SchemaError(f"{what}: expected a list")
    if len(values) != registry.n:
        raise SchemaError(f"{what}: expected {registry.n} entries, got {len(values)}")
    out = []
    for i, v in enumerate(values):
        if registry.is_angle(i) and isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise SchemaError(f"{what}: angle {registry.names[i]} needs [cos, sin]")
            c, s = (parse_number(x, what) for x in v)
            if c * c + s * s != 1 and not (isinstance(c, float) or isinstance(s, float)):
                raise SchemaError(f"{what}: [cos, sin] for {registry.names[i]} is not on the unit circle")
            out.append((c, s))
        else:
            out.append(parse_number(v, what))
    return out


def state_to_json(values) -> list:
    return [[number_to_json(c) for c in v] if isinstance(v, tuple) else number_to_json(v) for v in values]


def parse_channels(values, m: int, what: str) -> frozenset:
    if not isinstance(values, (list, tuple)):
        raise SchemaError(f"{what}: expected a list of channels")
    out = set()
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= m:
            raise SchemaError(f"{what}: channel {v!r} outside 1..{m}")
        out.add(v - 1)
    return frozenset(out)


# ---------------------------------------------------------------------------
# system definitions
# ---------------------------------------------------------------------------


def _check_version(obj: dict, what: str):
    if not isinstance(obj, dict):
        raise SchemaError(f"{what}: expected a JSON object")
    v = obj.get("schema_version")
    if v != SCHEMA_VERSION:
        raise SchemaError(f"{what}: unsupported schema_version {v!r} (expected {SCHEMA_VERSION})")


def _bounds(obj, m: int):
    raw = obj.get("bounds")
    if raw is None:
        raise SchemaError("bounds are required")
    if not isinstance(raw, list) or len(raw) != m:
        raise SchemaError(f"bounds: expected {m} [alpha, beta] pairs")
    out = []
    for pair in raw:
        if not isinstance(pair, list) or len(pair) != 2:
            raise SchemaError("bounds: each entry must be [alpha, beta]")
        out.append(tuple(parse_number(v, "bounds") for v in pair))
    return out


def _registry(obj) -> VariableRegistry:
    variables = obj.get("variables")
    if not isinstance(variables, list) or not variables:
        raise SchemaError("variables: expected a nonempty list")
    names, angles, blocks = [], [], []
    for v in variables:
        if not isinstance(v, dict) or "name" not in v:
            raise SchemaError("variables: each entry needs a name")
        kind = v.get("kind", "poly")
        if kind not in ("poly", ANGLE):
            raise SchemaError(f"variables: unknown kind {kind!r}")
        block = v.get("block", "x1")
        if block not in ("x1", "x2"):
            raise SchemaError(f"variables: unknown block {block!r}")
        names.append(v["name"])
        blocks.append(block)
        if kind == ANGLE:
            angles.append(v["name"])
    split = blocks.count("x1")
    if blocks != ["x1"] * split + ["x2"] * (len(blocks) - split):
        raise SchemaError("variables: all x1 variables must precede the x2 variables")
    try:
        return VariableRegistry.build(names, angles=angles, split=split)
    except ExprError as exc:
        raise SchemaError(f"variables: {exc}") from None


def _parse(text, reg, what):
    if not isinstance(text, str):
        raise SchemaError(f"{what}: expected an expression string")
    try:
        return parse_expr(text, reg)
    except (ParseError, ExprError) as exc:
        raise SchemaError(f"{what}: {exc}") from None


def _matrix(rows, reg, what):
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SchemaError(f"{what}: expected a list of rows")
    return [[_parse(t, reg, what) for t in row] for row in rows]


def system_from_dict(obj: dict) -> AffineSystem:
    """Build an :class:`AffineSystem` from a definition object."""
    _check_version(obj, "system definition")
    preset = obj.get("preset")
    if preset is not None:
        if preset != "uuv":
            raise SchemaError(f"unknown system preset {preset!r}")
        from .uuv import UUVParams, build_uuv

        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError("params: expected an object")
        kw = {}
        for key in ("m1", "m3", "I"):
            if key in params:
                kw[key] = parse_number(params[key], key)
        if "bounds" in obj:
            kw["bounds"] = tuple(_bounds(obj, 3))
        try:
            return build_uuv(UUVParams(**kw))
        except ValueError as exc:
            raise SchemaError(str(exc)) from None
    reg = _registry(obj)
    try:
        if "mechanical" in obj:
            mech = obj["mechanical"]
            if not isinstance(mech, dict):
                raise SchemaError("mechanical: expected an object")
            for key in ("M", "M_inv", "N", "Q"):
                if key not in mech:
                    raise SchemaError(f"mechanical: missing {key}")
            opt = {k: _matrix(mech[k], reg, k) for k in ("dpsi", "P", "P_inv") if k in mech}
            dP = None
            if "dP" in mech:
                dP = [_matrix(mat, reg, "dP") for mat in mech["dP"]]
            if not isinstance(mech["N"], list):
                raise SchemaError("N: expected a list")
            spec = MechanicalSystemSpec(
                reg, _matrix(mech["M"], reg, "M"), _matrix(mech["M_inv"], reg, "M_inv"),
                [_parse(t, reg, "N") for t in mech["N"]], _matrix(mech["Q"], reg, "Q"),
                dP=dP, state_names=mech.get("state_names"), **opt)
            m = spec.m
            sys = build_affine(spec, _bounds(obj, m))
        else:
            drift = obj.get("drift")
            controls = obj.get("controls")
            if not isinstance(drift, list) or len(drift) != reg.n:
                raise SchemaError(f"drift: expected {reg.n} expressions")
            if not isinstance(controls, list) or not controls:
                raise SchemaError("controls: expected a nonempty list of vectors")
            f = VectorField(reg, [_parse(t, reg, "drift") for t in drift])
            gs = []
            for g in controls:
                if not isinstance(g, list) or len(g) != reg.n:
                    raise SchemaError(f"controls: each vector needs {reg.n} expressions")
                gs.append(VectorField(reg, [_parse(t, reg, "controls") for t in g]))
            sys = _raw_system(obj, f, gs, reg)
    except BuildError as exc:
        raise SchemaError(f"system definition: {exc}") from None
    sys.name = obj.get("name", "")
    return sys


def _raw_system(obj, f, gs, reg) -> AffineSystem:
    structure = obj.get("structure", {})
    bounds = _bounds(obj, len(gs))
    if structure.get("provenance") != "mechanical":
        return AffineSystem(f, gs, bounds)
    r = structure.get("r")
    if not isinstance(r, int) or r * 2 != reg.n or reg.split != r:
        raise SchemaError("structure: mechanical systems need r with n = 2r and r x1 variables")
    x2 = reg.names[r:]
    for g in gs:
        if any(not c.is_zero() for c in g.components[:r]):
            raise SchemaError("structure: control fields of a mechanical system have a zero x1 block")
        if any(c.depends_on(v) for c in g.components for v in x2):
            raise SchemaError("structure: control fields of a mechanical system depend on x1 only")
    G_hat = [[g.components[r + i] for g in gs] for i in range(r)]
    return AffineSystem(f, gs, bounds, provenance="mechanical", r=r, G_hat=G_hat)


def system_to_dict(sys: AffineSystem) -> dict:
    """Explicit definition (drift and control expressions) of a system."""
    reg = sys.registry
    out = {
        "schema_version": SCHEMA_VERSION,
        "name": getattr(sys, "name", ""),
        "variables": [
            {"name": n, "kind": reg.kinds[i], "block": "x1" if i < reg.split else "x2"}
            for i, n in enumerate(reg.names)
        ],
        "drift": [str(c) for c in sys.drift.components],
        "controls": [[str(c) for c in g.components] for g in sys.controls],
        "bounds": [[number_to_json(a), number_to_json(b)] for a, b in sys.bounds],
    }
    if sys.mechanical:
        out["structure"] = {"provenance": "mechanical", "r": sys.r}
    return out


def uuv_definition(params=None) -> dict:
    from .uuv import UUVParams

    params = params or UUVParams()
    return {
        "schema_version": SCHEMA_VERSION,
        "preset": "uuv",
        "params": {"m1": number_to_json(params.m1), "m3": number_to_json(params.m3),
                   "I": number_to_json(params.I)},
        "bounds": [[number_to_json(a), number_to_json(b)] for a, b in params.bounds],
    }


def systems_equal(a: AffineSystem, b: AffineSystem) -> bool:
    return (a.registry == b.registry and a.drift == b.drift and a.controls == b.controls
            and [tuple(x) for x in a.bounds] == [tuple(x) for x in b.bounds]
            and a.provenance == b.provenance)


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_system(path) -> AffineSystem:
    return system_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


def query_from_dict(obj: dict, sys: AffineSystem):
    """Theorem-one query: K1, K2, J chain (1-based) and evaluation points.

    Points are listed under ``points`` or drawn with ``random_points``
    (count) and an optional ``seed``.
    """
    from .singular import TheoremOneQuery, random_points

    _check_version(obj, "query")
    m = sys.m
    K1 = parse_channels(obj.get("K1", []), m, "K1")
    K2 = parse_channels(obj.get("K2", []), m, "K2")
    J = obj.get("J")
    if not isinstance(J, list):
        raise SchemaError("J: expected a list of channel lists")
    chain = [parse_channels(j, m, f"J_{l}") for l, j in enumerate(J)]
    Jp = obj.get("J_prime")
    Jp = None if Jp is None else [parse_channels(j, m, "J_prime") for j in Jp]
    if "points" in obj:
        pts = [parse_state(sys.registry, p, "points") for p in obj["points"]]
    else:
        count = obj.get("random_points", 50)
        if not isinstance(count, int) or count < 1:
            raise SchemaError("random_points: expected a positive integer")
        pts = random_points(sys, count, obj.get("seed"))
    return TheoremOneQuery(K1, K2, chain, Jp, pts)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def dumps(obj) -> str:
    """Deterministic JSON: insertion key order, shortest round-trip floats."""
    return json.dumps(obj, indent=2, allow_nan=False, ensure_ascii=True) + "\n"


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def trajectory_csv(ext) -> str:
    n, m = ext.n, ext.m
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"lam{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(m)] + [f"phi{i + 1}" for i in range(m)] + ["H"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for k in range(len(ext.t)):
        row = [ext.t[k], *ext.x[k], *ext.lam[k], *ext.u[k], *ext.phi[k], ext.H[k]]
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def plot_data_csv(ext, state_names) -> str:
    """Tidy long format: ``t,series,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "series", "value"])
    series = [(name, ext.x[:, i]) for i, name in enumerate(state_names)]
    series += [(f"lam{i + 1}", ext.lam[:, i]) for i in range(ext.n)]
    series += [(f"u{i + 1}", ext.u[:, i]) for i in range(ext.m)]
    series += [(f"phi{i + 1}", ext.phi[:, i]) for i in range(ext.m)]
    series += [("H", ext.H)]
    for name, col in series:
        for t, v in zip(ext.t, col):
            w.writerow([repr(float(t)), name, repr(float(v))])
    return buf.getvalue()


def events_json(ext) -> list:
    return [e.to_dict() for e in ext.events]


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def report(command: str, config: dict, body: dict, artifacts: list | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        **body,
        "artifacts": artifacts or [],
    }
