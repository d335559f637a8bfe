"""heisenlab command line: group arithmetic, automorphisms, verification and conjugacies.

Exit codes: 0 when everything passes, 1 when a check fails (any report is still
written), 2 for malformed input or a scenario rejected at the gate.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import conjugacy as cj
from . import group, lemmas
from .automorphisms import (GMatrix, NotAnAutomorphism, algebraic_part, conjugate_to_diagonal,
                            from_derivative, is_partially_hyperbolic)
from .report import assemble, check_rng, dumps
from .scenario import EXAMPLE_MATRIX, Scenario, ScenarioError, example_scenario

CHECKS = ("xbound", "boxgrow", "yexpand", "curve-separation", "volume-growth", "cs-bounded",
          "splitting", "constants")


class InputError(ValueError):
    pass


# -- formatting -------------------------------------------------------------------------------

def _num(x):
    """Integral floats print as integers; others use 15 significant digits, which hides
    the last-bit noise of a single group operation."""
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return int(x)
    return float(format(x, ".15g"))


def compact(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{compact(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(compact(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    return json.dumps(_num(obj))


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: not valid JSON ({exc.msg})") from None


def _point(text: str, what: str) -> np.ndarray:
    p = np.asarray(_json_arg(text, what), dtype=float) if text is not None else None
    if p is None or p.shape[-1:] != (3,) or p.ndim > 2 or not np.isfinite(p).all():
        raise InputError(f"{what}: expected a point [x,y,z] or a list of points")
    return p


def _matrix(text: str) -> GMatrix:
    data = _json_arg(text, "--A")
    try:
        return GMatrix(data)
    except (ValueError, TypeError) as exc:
        raise InputError(f"--A: {exc}") from None


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- group ------------------------------------------------------------------------------------

def cmd_group(args) -> int:
    op = args.op
    if op == "mul":
        res = group.mul(_point(args.a, "--a"), _point(args.b, "--b"))
    elif op == "inv":
        res = group.inv(_point(args.a, "--a"))
    elif op == "exp":
        res = group.exp_h(_point(args.a, "--a"))
    elif op == "log":
        res = group.log_h(_point(args.a if args.p is None else args.p, "--a"))
    else:
        if args.k < 1:
            raise InputError("--k must be >= 1")
        gamma, q = group.reduce(_point(args.p, "--p"), group.Lattice(args.k))
        print(compact({"gamma": gamma, "q": q}))
        return 0
    print(compact(res))
    return 0


# -- automorphisms ----------------------------------------------------------------------------

def cmd_auto(args) -> int:
    if args.op == "algebraic-part":
        sc = _scenario(args)
        f = sc.system()
        phi = algebraic_part(f.apply, f.lattice, rng=sc.seed)
        print(compact(phi.to_json()))
        return 0
    T = _matrix(args.A)
    T = GMatrix(T.A, args.alpha, args.beta)
    ok, eig = is_partially_hyperbolic(T)
    if args.op == "check-ph":
        eig = [str(e) if isinstance(e, complex) else e for e in eig]
        print(compact({"pass": ok, "eigenvalues": eig}))
        return 0 if ok else 1
    if args.op == "from-derivative":
        try:
            print(compact(from_derivative(T).to_json()))
        except NotAnAutomorphism as exc:
            raise InputError(str(exc)) from None
        return 0
    try:
        P, D = conjugate_to_diagonal(T)
    except (NotAnAutomorphism, ValueError) as exc:
        raise InputError(str(exc)) from None
    print(compact({"P": P.matrix, "normal_form": D.matrix, "eigenvalues": eig}))
    return 0


# -- verification -----------------------------------------------------------------------------

def _scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        return Scenario.load(args.scenario)
    return example_scenario(0.0, k=getattr(args, "k", None) or 2)


def _parse_checks(text: str | None) -> list:
    if not text:
        return list(CHECKS)
    names = [c.strip() for c in text.split(",") if c.strip()]
    unknown = sorted(set(names) - set(CHECKS))
    if unknown:
        raise InputError(f"unknown checks {unknown}; choose from {', '.join(CHECKS)}")
    return sorted(set(names))


def run_checks(sc: Scenario, names, seed: int, samples: int | None = None,
               horizon: int | None = None, tol: float | None = None) -> tuple:
    """Run the named verifiers on the diagonal normal form; returns (reports, timings)."""
    f = sc.normal_form()
    hz = horizon or sc.horizons.get("splitting")
    kw = {
        "xbound": lambda: {"samples": samples} if samples else {},
        "boxgrow": lambda: {"samples": samples} if samples else {},
        "yexpand": lambda: {"pairs": samples} if samples else {},
        "curve-separation": lambda: {"curves": samples} if samples else {},
        "volume-growth": lambda: {"samples": samples} if samples else {},
        "cs-bounded": lambda: {"side_samples": samples} if samples else {},
        "splitting": lambda: {**({"samples": samples} if samples else {}),
                              **({"horizon": hz} if hz else {}),
                              **({"residual_tol": tol} if tol else {})},
        "constants": lambda: {**({"samples": samples} if samples else {}),
                              **({"horizon": hz} if hz else {})},
    }
    fns = {"xbound": lemmas.verify_xbound, "boxgrow": lemmas.verify_boxgrow,
           "yexpand": lemmas.verify_yexpand, "curve-separation": lemmas.verify_curve_separation,
           "volume-growth": lemmas.verify_volume_growth, "cs-bounded": lemmas.verify_cs_bounded,
           "splitting": lemmas.verify_splitting, "constants": lemmas.verify_constants}
    reports, timings = [], {}
    for name in names:
        t0 = time.perf_counter()
        rep = fns[name](f, rng=check_rng(seed, name), **kw[name]())
        timings[rep.name] = time.perf_counter() - t0
        reports.append(rep)
    return reports, timings


def cmd_verify(args) -> int:
    sc = _scenario(args)
    seed = sc.seed if args.seed is None else args.seed
    names = _parse_checks(args.checks)
    reports, timings = run_checks(sc, names, seed, args.samples, args.horizon, args.tol)
    doc = assemble(reports, sc.to_json(), seed, timings if args.timing else None)
    _emit(dumps(doc) + "\n", args.out)
    for r in sorted(reports, key=lambda r: r.name):
        print(f"{r.name}: {'pass' if r.passed else 'FAIL'}", file=sys.stderr)
    return 0 if doc["pass"] else 1


# -- conjugacies ------------------------------------------------------------------------------

def cmd_conjugacy(args) -> int:
    sc = _scenario(args)
    seed = sc.seed if args.seed is None else args.seed
    f = sc.system()
    if args.op == "center-test":
        return _center_test(f, args)
    H = cj.semiconjugacy(f, rng=check_rng(seed, "semiconjugacy"))
    timings = {}
    t0 = time.perf_counter()
    if args.op == "semiconj":
        rep = cj.semiconjugacy_report(H, samples=args.samples or 1000, rng=check_rng(seed, "semiconjugacy"))
        fn = H
    else:
        rep, fn = cj.leaf_conjugacy_report(H, samples=args.samples or 100,
                                           rng=check_rng(seed, "leaf-conjugacy"))
    timings[rep.name] = time.perf_counter() - t0
    doc = assemble([rep], sc.to_json(), seed, timings if args.timing else None)
    _emit(dumps(doc) + "\n", args.out)
    if args.csv:
        Path(args.csv).write_text(cj.grid_csv(fn, n=args.grid))
    print(f"{rep.name}: {'pass' if rep.passed else 'FAIL'}", file=sys.stderr)
    return 0 if rep.passed else 1


def _center_test(f, args) -> int:
    p, q = _point(args.p, "--p"), _point(args.q, "--q")
    if p.shape != q.shape:
        raise InputError("--p and --q must have the same shape")
    H = cj.semiconjugacy(f, rng=0)
    if H.f.shift is not None:
        # H belongs to the lift conjugated by right translation; move the points along
        back = group.inv(np.asarray(H.f.shift))
        p, q = group.mul(p, back), group.mul(q, back)
    by_h = cj.center_leaf_test(H, p, q)
    _, by_orbit, _ = cj.orbit_probe(H, p, q, args.horizon or 30)
    print(compact(by_h))
    if np.any(by_h != by_orbit):
        print("H test and orbit probe disagree", file=sys.stderr)
        return 1
    return 0


# -- entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heisenlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("group", help="Heisenberg group arithmetic")
    g.add_argument("op", choices=("mul", "inv", "reduce", "exp", "log"))
    g.add_argument("--a", help="point [x,y,z] (for exp: algebra element [u,v,w])")
    g.add_argument("--b")
    g.add_argument("--p")
    g.add_argument("--k", type=int, default=1)
    g.set_defaults(fn=cmd_group)

    a = sub.add_parser("auto", help="automorphisms and normal forms")
    a.add_argument("op", choices=("check-ph", "normalize", "from-derivative", "algebraic-part"))
    a.add_argument("--A", default=json.dumps(EXAMPLE_MATRIX), help="2x2 block as JSON")
    a.add_argument("--alpha", type=float, default=0.0)
    a.add_argument("--beta", type=float, default=0.0)
    a.add_argument("--scenario")
    a.set_defaults(fn=cmd_auto)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON (default: unperturbed example)")
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--timing", action="store_true", help="include per-check runtime")

    v = sub.add_parser("verify", parents=[common], help="run the slab and growth verifiers")
    v.add_argument("--tol", type=float)
    v.add_argument("--checks", help="comma separated subset of " + ",".join(CHECKS))
    v.set_defaults(fn=cmd_verify)

    c = sub.add_parser("conjugacy", parents=[common], help="semiconjugacy and leaf conjugacy")
    c.add_argument("op", choices=("semiconj", "leafconj", "center-test"))
    c.add_argument("--csv", help="write an evaluation grid here")
    c.add_argument("--grid", type=int, default=11)
    c.add_argument("--p")
    c.add_argument("--q")
    c.add_argument("--k", type=int)
    c.set_defaults(fn=cmd_conjugacy)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, ScenarioError) as exc:
        print(f"heisenlab: error: {exc}", file=sys.stderr)
        return 2
    except (cj.GPSFailure, cj.GluingError, cj.FlowEventError, cj.SectionError) as exc:
        print(f"heisenlab: check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
