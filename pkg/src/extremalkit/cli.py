"""Command-line front end.

Exit status: 0 success, 1 a check failed or a run aborted, 2 usage or input
error.  JSON reports go to stdout (and to ``--out`` when given); trajectories
are written as CSV under ``--out``.
"""
from __future__ import annotations

import argparse
import sys as _sys
from pathlib import Path

import numpy as np

from . import schema
from .expr import ExprError
from .lie import DEFAULT_RANK_TOL, degree_class
from .mech import BuildError, alpha_decomposition, check_commutativity, structural_degree_audit
from .pmp import IntegrationError, IntegratorOptions, classify_extremal, integrate_extremal
from .schema import SchemaError

PRESETS = ("uuv-rotation", "uuv-translate-1", "uuv-translate-3", "uuv-bangbang")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _floats(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _channels(text: str | None, m: int, what: str) -> frozenset:
    if text is None or text.strip() == "":
        return frozenset()
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated channel numbers") from None
    try:
        return schema.parse_channels(vals, m, what)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None


def _chain(text: str, m: int, what: str) -> list:
    """``"1,2;1,2"`` -> [J_0, J_1]."""
    return [_channels(part, m, what) for part in text.split(";")]


def _state(text: str, registry, what: str) -> list:
    """Entries are numbers or rationals; an angle may be written ``cos:sin``."""
    parts = text.split(",")
    vals = []
    for p in parts:
        if ":" in p:
            vals.append(p.split(":"))
        else:
            vals.append(p)
    try:
        return schema.parse_state(registry, vals, what)
    except SchemaError as exc:
        raise UsageError(str(exc)) from None


def _load_system(args):
    if getattr(args, "system", None):
        return schema.load_system(args.system), schema.load_json(args.system)
    definition = schema.uuv_definition()
    return schema.system_from_dict(definition), definition


def _emit(args, name: str, rep: dict):
    text = schema.dumps(rep)
    if getattr(args, "out", None):
        schema.write_text(Path(args.out) / f"{name}.json", text)
    if not getattr(args, "quiet", False):
        _sys.stdout.write(text)


def _options(args) -> IntegratorOptions:
    return IntegratorOptions(step=args.step, sg_tol=args.sg_tol, in_band=args.in_band)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_brackets(args) -> int:
    sys, definition = _load_system(args)
    if args.depth < 0:
        raise UsageError("--depth must be nonnegative")
    rows = []
    for s in range(args.depth + 1):
        for i in range(sys.m):
            X = sys.ad(s, i)
            rows.append({"label": f"ad_f^{s} g_{i + 1}", "components": [str(c) for c in X.components],
                         "degree_class": _dc(X)})
    for s in range(args.depth):
        for i in range(sys.m):
            for j in range(sys.m):
                X = sys.bracket_with_control(j, s, i)
                rows.append({"label": f"[g_{j + 1}, ad_f^{s} g_{i + 1}]",
                             "components": [str(c) for c in X.components], "degree_class": _dc(X)})
    artifacts = []
    if args.echo_system:
        schema.write_text(Path(args.echo_system), schema.dumps(schema.system_to_dict(sys)))
        artifacts.append(str(args.echo_system))
    config = {"system": definition, "depth": args.depth}
    rep = schema.report("brackets", config, {"variables": list(sys.registry.names),
                                             "drift": [str(c) for c in sys.drift.components],
                                             "drift_class": _dc(sys.drift), "brackets": rows}, artifacts)
    _emit(args, "brackets", rep)
    return 0


def _dc(X):
    d = degree_class(X)
    return [d.a, d.b]


def cmd_audit(args) -> int:
    sys, definition = _load_system(args)
    body = {"mechanical": sys.mechanical}
    comm = check_commutativity(sys)
    body["commutativity"] = comm.to_dict()
    passed = comm.passed
    try:
        audit = structural_degree_audit(sys, s_max=args.depth)
        body["degree_audit"] = audit.to_dict()
        passed = passed and audit.passed
    except ExprError as exc:
        body["degree_audit"] = {"passed": False, "error": str(exc)}
        passed = False
    if sys.fully_actuated:
        try:
            table = alpha_decomposition(sys)
            body["alpha"] = {
                "exact": table.exact,
                "x1_only": table.x1_only,
                "nonzero": [{"i": i + 1, "j": j + 1, "k": k + 1, "value": str(v)}
                            for (i, j, k), v in sorted(table.alpha.items()) if not v.is_zero()],
            }
            passed = passed and table.exact and table.x1_only
        except BuildError as exc:
            body["alpha"] = {"error": str(exc)}
    if not sys.mechanical:
        body["note"] = "system is not a mechanical build: structural properties are not guaranteed"
    body["passed"] = bool(passed)
    _emit(args, "audit", schema.report("audit", {"system": definition, "depth": args.depth}, body))
    return 0 if passed else 1


def _trajectory_outputs(args, sys, ext, name: str, config: dict, extra: dict) -> tuple:
    out = Path(args.out)
    csv_name = f"{name}.csv"
    schema.write_text(out / csv_name, schema.trajectory_csv(ext))
    artifacts = [csv_name]
    events_name = f"{name}.events.json"
    schema.write_text(out / events_name, schema.dumps(schema.events_json(ext)))
    artifacts.append(events_name)
    if args.emit_plot_data:
        plot_name = f"{name}.plot.csv"
        schema.write_text(out / plot_name, schema.plot_data_csv(ext, sys.registry.names))
        artifacts.append(plot_name)
    cls = classify_extremal(ext)
    body = {
        "system": {"name": getattr(sys, "name", ""), "n": sys.n, "m": sys.m},
        "options": ext.options.to_dict(),
        "in_band_policy": ext.meta.get("in_band_policy"),
        "policy_note": ext.meta.get("note"),
        "nodes": int(len(ext.t)),
        "events": schema.events_json(ext),
        "classification": cls.to_dict(),
        "hamiltonian": {"H0": float(ext.H[0]), "max_abs_drift": float(np.max(np.abs(ext.H - ext.H[0])))},
        "final_state": [float(v) for v in ext.x[-1]],
        **extra,
    }
    rep = schema.report(config.pop("_command"), config, body, artifacts)
    text = schema.dumps(rep)
    schema.write_text(out / f"{name}.json", text)
    if not args.quiet:
        _sys.stdout.write(text)
    return rep, cls


def cmd_simulate(args) -> int:
    sys, definition = _load_system(args)
    x0 = _floats(args.x0, "--x0")
    lam0 = _floats(args.lam0, "--lam0")
    if len(x0) != sys.n or len(lam0) != sys.n:
        raise UsageError(f"--x0 and --lam0 need {sys.n} entries")
    if not args.T > 0:
        raise UsageError("--T must be positive")
    try:
        opts = _options(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ext = integrate_extremal(sys, x0, lam0, args.T, opts)
    config = {"_command": "simulate", "system": definition, "x0": x0, "lam0": lam0, "T": args.T,
              "options": opts.to_dict()}
    _trajectory_outputs(args, sys, ext, args.name, config, {})
    return 0


def cmd_preset(args) -> int:
    from .acceptance import BANGBANG_LAM0, BANGBANG_X0
    from .uuv import KINDS, PureMotionSpec, build_uuv, pure_motion_extremal, verify_prop8

    sys = build_uuv()
    try:
        opts = _options(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = {"_command": "preset", "preset": args.name, "options": opts.to_dict()}
    extra = {}
    if args.name == "uuv-bangbang":
        T = 5.0 if args.T is None else args.T
        if not T > 0:
            raise UsageError("--T must be positive")
        ext = integrate_extremal(sys, BANGBANG_X0, BANGBANG_LAM0, T, opts)
        config.update(T=T, x0=list(BANGBANG_X0), lam0=list(BANGBANG_LAM0))
        rep_prop8 = verify_prop8(ext, sys)
        extra["pure_motion_check"] = rep_prop8.to_dict()
        ok = True
    else:
        kind = dict(zip(PRESETS[:3], KINDS))[args.name]
        T = 2.0 if args.T is None else args.T
        try:
            spec = PureMotionSpec(kind, velocity=args.velocity, seeds=(args.mu, args.lam_seed), T=T)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ext = pure_motion_extremal(sys, spec, opts)
        config.update(T=T, velocity=args.velocity, seeds=[args.mu, args.lam_seed])
        rep_prop8 = verify_prop8(ext, sys)
        extra["pure_motion_check"] = rep_prop8.to_dict()
        t_ref = spec.closed_form_switch(sys.params)
        extra["closed_form_switch"] = t_ref
        ok = rep_prop8.passed
    _trajectory_outputs(args, sys, ext, args.name, config, extra)
    return 0 if ok else 1


def cmd_theorem1(args) -> int:
    from .singular import theorem1_check

    sys, definition = _load_system(args)
    qobj = schema.load_json(args.query)
    query = schema.query_from_dict(qobj, sys)
    verdict = theorem1_check(sys, query, tol=args.tol, debug=args.debug)
    body = {"verdict": verdict.to_dict(evidence=args.evidence)}
    if not verdict.asserted:
        body["failures"] = verdict.failures()[:20]
    _emit(args, "theorem1", schema.report("theorem1", {"system": definition, "query": qobj,
                                                         "tol": args.tol}, body))
    return 0 if verdict.asserted else 1


def cmd_prop1(args) -> int:
    from .singular import TheoremOneQuery, prop1_check, random_points

    sys, definition = _load_system(args)
    m = sys.m
    K1, K2, K = (_channels(args.K1, m, "--K1"), _channels(args.K2, m, "--K2"), _channels(args.K, m, "--K"))
    chain = TheoremOneQuery(K1, K2, _chain(args.chain, m, "--chain"))
    pts = random_points(sys, args.points, args.seed)
    verdict = prop1_check(sys, K1, K2, K, chain, pts, tol=args.tol)
    config = {"system": definition, "K1": args.K1, "K2": args.K2, "K": args.K, "chain": args.chain,
              "points": args.points, "seed": args.seed, "tol": args.tol}
    _emit(args, "prop1", schema.report("prop1", config, {"verdict": verdict.to_dict(evidence=args.evidence)}))
    return 0 if verdict.asserted else 1


def cmd_singular_control(args) -> int:
    from .singular import PreconditionError, SingularSystemError, singular_control_solve

    sys, definition = _load_system(args)
    x = _state(args.x, sys.registry, "--x")
    try:
        lam = [schema.parse_number(v, "--lam") for v in args.lam.split(",")]
        u_k = schema.parse_number(args.uk, "--uk")
    except SchemaError as exc:
        raise UsageError(str(exc)) from None
    if len(lam) != sys.n:
        raise UsageError(f"--lam needs {sys.n} entries")
    if not 1 <= args.k <= sys.m:
        raise UsageError(f"--k must be in 1..{sys.m}")
    config = {"system": definition, "x": args.x, "lam": args.lam, "k": args.k, "uk": args.uk}
    try:
        sol = singular_control_solve(sys, x, lam, args.k - 1, u_k)
    except (SingularSystemError, PreconditionError) as exc:
        _emit(args, "singular-control", schema.report("singular-control", config,
                                                      {"solved": False, "error": str(exc)}))
        return 1
    _emit(args, "singular-control", schema.report("singular-control", config,
                                                  {"solved": True, "solution": sol.to_dict()}))
    return 0


def cmd_concat(args) -> int:
    from .singular import concat_check

    sys, definition = _load_system(args)
    m = sys.m
    S1, S2 = _channels(args.S1, m, "--S1"), _channels(args.S2, m, "--S2")
    chains = None
    if args.chain1 or args.chain2:
        chains = [_chain(args.chain1, m, "--chain1") if args.chain1 else [S1, S1],
                  _chain(args.chain2, m, "--chain2") if args.chain2 else [S2, S2]]
    junction = _state(args.junction, sys.registry, "--junction") if args.junction else None
    verdict = concat_check(sys, S1, S2, chains, junction, tol=args.tol, force_general=args.general)
    config = {"system": definition, "S1": args.S1, "S2": args.S2, "chain1": args.chain1,
              "chain2": args.chain2, "junction": args.junction, "general": args.general}
    _emit(args, "concat-check", schema.report("concat-check", config, {"verdict": verdict.to_dict()}))
    return 0 if verdict.asserted else 1


def cmd_verify(args) -> int:
    from .acceptance import run_all

    results = run_all()
    for r in results:
        print(r.line())
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    if args.out:
        rep = schema.report("verify", {}, {"criteria": [r.to_dict() for r in results], "passed": passed})
        schema.write_text(Path(args.out) / "verify.json", schema.dumps(rep))
    return 0 if passed else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="extremalkit", description="Lie-bracket and extremal analysis of "
                                "time-optimal control-affine systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--system", help="system definition JSON (default: planar vehicle)")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="do not print the JSON report")

    def integ(sp):
        sp.add_argument("--step", type=float, default=1e-3)
        sp.add_argument("--sg-tol", type=float, default=1e-9)
        sp.add_argument("--in-band", choices=("hold", "zero"), default="hold",
                        help="control on channels with |phi| <= sg-tol")
        sp.add_argument("--emit-plot-data", action="store_true", help="also write tidy long-format CSV")

    sp = sub.add_parser("brackets", help="bracket table up to a depth")
    common(sp)
    sp.add_argument("--depth", type=int, default=2)
    sp.add_argument("--echo-system", metavar="PATH", help="write the explicit system definition")
    sp.set_defaults(func=cmd_brackets)

    sp = sub.add_parser("audit", help="commutativity and degree structure checks")
    common(sp)
    sp.add_argument("--depth", type=int, default=2)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("simulate", help="integrate an extremal")
    common(sp, "out")
    integ(sp)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--lam0", required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--name", default="simulate", help="base name of the output files")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("theorem1", help="span-condition chain from a query file")
    common(sp)
    sp.add_argument("query")
    sp.add_argument("--tol", type=float, default=DEFAULT_RANK_TOL)
    sp.add_argument("--debug", action="store_true", help="confirm commuting controls symbolically")
    sp.add_argument("--evidence", action="store_true", help="include per-point evidence")
    sp.set_defaults(func=cmd_theorem1)

    sp = sub.add_parser("prop1", help="no common zero of the remaining switching functions")
    common(sp)
    sp.add_argument("--K1", default="")
    sp.add_argument("--K2", default="")
    sp.add_argument("--K", required=True)
    sp.add_argument("--chain", required=True, help="J_0;J_1;... e.g. '1,2;1,2'")
    sp.add_argument("--points", type=int, default=50)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--tol", type=float, default=DEFAULT_RANK_TOL)
    sp.add_argument("--evidence", action="store_true")
    sp.set_defaults(func=cmd_prop1)

    sp = sub.add_parser("singular-control", help="singular controls with one bang channel")
    common(sp)
    sp.add_argument("--x", required=True, help="state; an angle may be given as cos:sin")
    sp.add_argument("--lam", required=True)
    sp.add_argument("--k", type=int, required=True, help="nonsingular channel (1-based)")
    sp.add_argument("--uk", required=True, help="value of the nonsingular control")
    sp.set_defaults(func=cmd_singular_control)

    sp = sub.add_parser("concat-check", help="concatenation of singular pieces")
    common(sp)
    sp.add_argument("--S1", required=True)
    sp.add_argument("--S2", required=True)
    sp.add_argument("--chain1")
    sp.add_argument("--chain2")
    sp.add_argument("--junction", help="junction state")
    sp.add_argument("--general", action="store_true", help="skip the fully actuated shortcut")
    sp.add_argument("--tol", type=float, default=DEFAULT_RANK_TOL)
    sp.set_defaults(func=cmd_concat)

    sp = sub.add_parser("preset", help="planar-vehicle scenarios")
    sp.add_argument("name", choices=PRESETS)
    sp.add_argument("--out", default="out")
    sp.add_argument("--quiet", action="store_true")
    integ(sp)
    sp.add_argument("--T", type=float)
    sp.add_argument("--mu", type=float, default=1.0, help="constant adjoint seed")
    sp.add_argument("--lam-seed", type=float, default=0.5, help="initial adjoint of the bang channel")
    sp.add_argument("--velocity", type=float, default=0.0, help="initial speed along the motion")
    sp.set_defaults(func=cmd_preset)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    except (BuildError, ValueError, ExprError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
