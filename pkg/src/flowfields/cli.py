"""Command line: ``flowfields eval | verify | validate``.

Exit codes: 0 success, 1 check or evaluation failure, 2 usage or scene error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .dsl import ExprDomainError
from .fields import evaluate_grid
from .flow import validate_flow
from .retarded import OnMatterError, RetardedSolveError
from .scene import GridSpec, Scene, SceneError, builtin_scenes, load_scene
from .verify import SUITES, format_report, run_verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CSV_HEADER = ["x", "y", "z", "t", "phi", "Ax", "Ay", "Az", "Ex", "Ey", "Ez", "Bx", "By", "Bz", "on_matter"]
QUERY_SPAN = 10.0


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _validate(scene: Scene, t_lo: float, t_hi: float) -> tuple[bool, str]:
    f = scene.flow
    window = (min(f.t0, t_lo) - QUERY_SPAN, max(f.t0, t_hi) + QUERY_SPAN)
    report = validate_flow(f, window)
    return report.passed, report.summary()


def cmd_eval(args) -> int:
    scene = load_scene(args.scene)
    grid = GridSpec.parse(args.grid)
    pts = grid.points()
    if not args.skip_validate:
        ok, summary = _validate(scene, float(pts[:, 3].min()), float(pts[:, 3].max()))
        if not ok:
            print(summary, file=sys.stderr)
            print("error: flow validation failed", file=sys.stderr)
            return EXIT_FAIL
    vals, on_matter = evaluate_grid(scene.flow, scene.charge, pts)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out != "-" else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, p in enumerate(pts):
            row = [_fmt(v) for v in p]
            if on_matter[i]:
                row += [""] * 10 + ["1"]
            else:
                row += [_fmt(vals["phi"][i])] + [_fmt(v) for k in ("A", "E", "B") for v in vals[k][i]]
                row.append("0")
            w.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_verify(args) -> int:
    scene = load_scene(args.scene)
    if args.samples < 1:
        raise SceneError("--samples must be >= 1")
    if not args.skip_validate:
        ok, summary = _validate(scene, scene.flow.t0, scene.flow.t0)
        if not ok:
            print(summary, file=sys.stderr)
            print("error: flow validation failed", file=sys.stderr)
            return EXIT_FAIL
    report = run_verify(scene, args.suite, args.samples, args.tol, args.seed)
    print(format_report(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    ok, summary = _validate(scene, scene.flow.t0, scene.flow.t0)
    print(summary)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flowfields",
        description="Retarded potentials and fields of prescribed matter flows.",
        epilog=f"built-in scenes: {', '.join(builtin_scenes())}",
    )
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", help="evaluate phi, A, E, B on a grid and write CSV")
    e.add_argument("--scene", required=True, help="scene JSON file or built-in scene name")
    e.add_argument("--grid", required=True, help='e.g. "x=1:4:4,y=0,z=0,t=0"')
    e.add_argument("--out", required=True, help="output CSV path ('-' for stdout)")
    e.add_argument("--skip-validate", action="store_true")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run seeded verification suites")
    v.add_argument("--scene", required=True)
    v.add_argument("--suite", required=True, choices=SUITES + ("all",))
    v.add_argument("--samples", type=int, default=20)
    v.add_argument("--tol", type=float, default=None, help="override every suite tolerance")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", default=None, help="also write the report as JSON")
    v.add_argument("--skip-validate", action="store_true")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("validate", help="check speed bound, identity at t0 and injectivity")
    c.add_argument("--scene", required=True)
    c.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RetardedSolveError, ExprDomainError, OnMatterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SceneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
