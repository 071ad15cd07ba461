"""Command-line interface: ``atlas <command> [options]``.

Exit status: 0 when everything ran (and every check passed), 2 when a
compatibility check failed, 1 on any execution error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import brute_force_preimages
from .critical import Window
from .pipeline import PipelineConfig, load_map, resolve, run_pipeline
from .render import FIGURES, render_svg
from .report import emit_report, load_report

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2


def parse_floats(text: str, n: int, what: str) -> tuple:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: not a number in {text!r}") from None


def point(text: str) -> tuple:
    return parse_floats(text, 2, "point")


def window(text: str) -> tuple:
    return parse_floats(text, 4, "window")


def point_list(text: str) -> list:
    return [point(p) for p in text.split(";") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--map", default=None, help="builtin:F0 .. builtin:F3")
    src.add_argument("--expr", default=None, help='map expression, e.g. "z^3 + 2.5*zbar^2 + z" or "(x, y^2)"')
    common.add_argument("--mode", choices=("z", "xy"), default=None,
                        help="expression mode: complex z (default) or a real pair in x, y")
    common.add_argument("--window", type=window, default=None, metavar="x0,y0,x1,y1")
    common.add_argument("--grid", type=int, default=None, metavar="N", help="seed scan grid size")
    common.add_argument("--step", type=float, default=None, metavar="h", help="tracing step")
    common.add_argument("--tol", type=float, default=1e-9, metavar="t", help="relative Newton residual tolerance")
    common.add_argument("--out", default=None, metavar="file", help="write the report (.json) or figure (.svg)")
    common.add_argument("--seed-base", type=point, default=None, metavar="x,y",
                        help="base point with known complete preimages")
    common.add_argument("--base-preimages", type=point_list, default=None, metavar="x,y;x,y;...",
                        help="all preimages of the seed base")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="atlas", description="Global numerical study of plane maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("trace", parents=[common], help="critical curves and cusps")
    sub.add_parser("image", parents=[common], help="critical curves and their images")
    sub.add_parser("flower", parents=[common], help="preimages of the images of the critical curves")
    p = sub.add_parser("preimages", parents=[common], help="all preimages of a target by continuation")
    p.add_argument("--target", type=point, required=True, metavar="x,y")
    c = sub.add_parser("check", parents=[common], help="rotation-number compatibility checks")
    c.add_argument("--annulus", action="store_true", help="also run one annulus check per curve")
    r = sub.add_parser("render", parents=[common], help="SVG figure")
    r.add_argument("--figure", required=True, metavar="NAME",
                   help=f"one of {', '.join(FIGURES)}; circles accepts radii as circles:0.1,1,10")
    r.add_argument("--report", default=None, help="render from an existing report instead of recomputing")
    r.add_argument("--target", type=point, action="append", default=None, metavar="x,y",
                   help="targets for the paths figure (default 0,0)")
    o = sub.add_parser("oracle", parents=[common], help="brute-force multistart preimages")
    o.add_argument("--target", type=point, required=True, metavar="x,y")
    return parser


def config_from(args, **overrides) -> PipelineConfig:
    if args.expr is not None:
        spec = args.expr
    else:
        spec = args.map or "builtin:F0"
    mode = args.mode or "z"
    if args.map and not args.map.startswith("builtin:"):
        raise ValueError(f"--map expects builtin:<tag>; use --expr for expressions (got {args.map!r})")
    fields = dict(map=spec, mode=mode, window=args.window, grid=args.grid, step=args.step, tol=args.tol,
                  seed_base=args.seed_base, base_preimages=args.base_preimages, targets=[], checks=False)
    fields.update(overrides)
    return PipelineConfig(**fields)


def _fmt_point(p) -> str:
    return f"{p[0] + 0.0:.9f} {p[1] + 0.0:.9f}".replace("-0.000000000", "0.000000000")


def _write(args, report, figure=None, **kw):
    if not args.out:
        return
    if args.out.endswith(".svg"):
        Path(args.out).write_text(render_svg(report, figure or "critical", **kw))
    else:
        emit_report(report, args.out)


def _print_curves(report):
    print(f"curves: {report['curves']}  cusps: {report['cusps']}")
    for i, c in enumerate(report["critical_curves"]):
        sides = [k["side"] for k in c["cusp_list"]]
        shape = "closed" if c["closed"] else "open (truncated)"
        print(f"  curve {i + 1}: {shape}, {len(c['points'])} points, {c['cusps']} cusps "
              f"(left {sides.count('left')}, right {sides.count('right')})")


def _print_errors(report) -> bool:
    for e in report["errors"]:
        print(f"error [{e['stage']}]: {e['message']}", file=sys.stderr)
    for s in report["skipped"]:
        print(f"skipped: {s}", file=sys.stderr)
    return bool(report["errors"])


def cmd_trace(args) -> int:
    report = run_pipeline(config_from(args))
    _print_curves(report)
    _write(args, report, "critical")
    return EXIT_ERROR if _print_errors(report) else EXIT_OK


def cmd_image(args) -> int:
    report = run_pipeline(config_from(args))
    _print_curves(report)
    for i, c in enumerate(report["image_curves"]):
        pts = np.array(c["points"])
        lo, hi = pts.min(0), pts.max(0)
        print(f"  image {i + 1}: box [{lo[0]:.4g}, {hi[0]:.4g}] x [{lo[1]:.4g}, {hi[1]:.4g}]")
    _write(args, report, "image")
    return EXIT_ERROR if _print_errors(report) else EXIT_OK


def cmd_flower(args) -> int:
    report = run_pipeline(config_from(args, flower=True))
    flower = report["flower"] or []
    ncrit = report["curves"]
    print(f"flower: {len(flower)} polylines ({ncrit} critical, {len(flower) - ncrit} noncritical arcs)")
    _write(args, report, "flower")
    return EXIT_ERROR if _print_errors(report) else EXIT_OK


def cmd_preimages(args) -> int:
    report = run_pipeline(config_from(args, targets=[args.target]))
    failed = _print_errors(report)
    if failed or not report["preimages"]:
        return EXIT_ERROR
    ps = report["preimages"][0]
    q = ps["target"]
    print(f"# {ps['preimage_count']} preimages of ({q[0]:g}, {q[1]:g}); base: {ps['base']}")
    for p in ps["points"]:
        print(_fmt_point(p))
    _write(args, report, "paths")
    return EXIT_OK


def cmd_check(args) -> int:
    report = run_pipeline(config_from(args, checks=True, annulus=args.annulus))
    _print_curves(report)
    for c in report["checks"]:
        status = "pass" if c["pass"] else "FAIL"
        rel = "=" if c["pass"] else "!="
        print(f"{status}  {c['kind']:<8} {c['lhs']} {rel} {c['rhs']}  {c['note']}")
    _write(args, report, "critical")
    if _print_errors(report):
        return EXIT_ERROR
    if not report["checks"]:
        print("no checks could be set up", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if report.checks_passed else EXIT_CHECK_FAILED


def cmd_render(args) -> int:
    figure, _, extra = args.figure.partition(":")
    radii = [float(r) for r in extra.split(",") if r] if extra else None
    if args.report:
        report = load_report(args.report)
    else:
        targets = args.target or ([(0.0, 0.0)] if figure == "paths" else [])
        report = run_pipeline(config_from(args, targets=targets, flower=figure == "flower"))
        _print_errors(report)
    svg = render_svg(report, figure, radii=radii)
    if args.out:
        Path(args.out).write_text(svg)
    else:
        sys.stdout.write(svg)
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = config_from(args)
    pm = load_map(config.map, config.mode)
    win = Window(*config.window) if config.window else (None if pm.infinity_hint else resolve(config, pm)[0])
    ps = brute_force_preimages(pm, args.target, win, tol=None)
    q = ps.target
    print(f"# {len(ps)} preimages of ({q[0]:g}, {q[1]:g}); oracle {ps.base_provenance}")
    for p in ps.points:
        print(_fmt_point(p))
    if args.out:
        Path(args.out).write_text(json.dumps(ps.to_json(), indent=1) + "\n")
    return EXIT_OK


COMMANDS = {"trace": cmd_trace, "image": cmd_image, "flower": cmd_flower, "preimages": cmd_preimages,
            "check": cmd_check, "render": cmd_render, "oracle": cmd_oracle}


VALUE_FLAGS = ("--window", "--target", "--seed-base", "--base-preimages")


def _join_values(argv: list) -> list:
    """Glue ``--flag -1,2`` into ``--flag=-1,2`` so argparse does not read
    a leading minus sign as an option."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1][:1] == "-" and argv[i + 1][1:2].isdigit():
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; 2 is reserved for failed checks
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
