"""Command line front end.

Subcommands: evolve (full evolutionary run), validate (many-run episode
statistics for one tree), tick (single tree evaluation against hand-set
inputs), prune (static simplification), plot (SVG from a path trace or a
validation CSV). Exit codes: 0 success, 1 runtime failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import bt, config, evaluation, evolution, sim

PLOT_SCALE = 60.0
PLOT_MARGIN = 30.0
MODE_PALETTE = ("#1f77b4", "#d62728", "#ff7f0e", "#9467bd", "#8c564b",
                "#17becf", "#bcbd22", "#e377c2")
HOLD_COLOUR = "#999999"
OUTCOME_COLOURS = {"Success": "#2f9e44", "Crash": "#d62728",
                   "Timeout": "#ff7f0e"}


class UsageError(Exception):
    """Bad command line input; reported and mapped to exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btevolve", allow_abbrev=False,
        description="Evolve and inspect behaviour-tree flight controllers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run the evolutionary loop")
    p.add_argument("--config", type=Path, default=None,
                   help="INI settings file; defaults apply without one")
    p.add_argument("--seed", type=int, default=None,
                   help="override the run seed from the config")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for episode evaluation")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("validate",
                       help="fly one tree from many random starts")
    p.add_argument("--tree", type=Path, required=True)
    p.add_argument("--runs", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("validation.csv"),
                   help="per-run CSV destination")
    p.add_argument("--trace-dir", type=Path, default=None,
                   help="also write a path trace CSV per run here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("tick", help="evaluate one tick of a tree")
    p.add_argument("--tree", type=Path, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--Sigma", type=float, required=True)
    p.add_argument("--Delta", type=float, required=True)
    p.add_argument("--r", type=float, default=0.0,
                   help="rudder command carried in from the previous tick")
    p.set_defaults(func=cmd_tick)

    p = sub.add_parser("prune", help="statically simplify a tree")
    p.add_argument("--tree", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("plot",
                       help="render a trace or validation CSV as SVG")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None,
                   help="room geometry for the backdrop")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, config.ConfigError, bt.ParseError,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure, not a usage problem
        print(f"error: {err}", file=sys.stderr)
        return 1


def _load_tree(path: Path) -> bt.Node:
    if not path.is_file():
        raise UsageError(f"tree file not found: {path}")
    return bt.parse(path.read_text(encoding="utf-8"))


def cmd_evolve(args) -> int:
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg.ea.seed = args.seed
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")

    def progress(record):
        print(f"gen {record.gen:4d}  best_f {record.best_f:.4f}  "
              f"mean_f {record.mean_f:.4f}  best_size {record.best_size:3d}  "
              f"mean_size {record.mean_size:6.1f}")

    result = evolution.run_evolution(cfg.ea, cfg.room, cfg.sim, cfg.vision,
                                     out_dir=cfg.output_dir,
                                     threads=args.threads, progress=progress)
    raw_path = cfg.output_dir / "best_raw.bt"
    raw_path.write_text(bt.serialize(result.best.tree), encoding="utf-8")
    pruned = bt.prune(result.best.tree)
    pruned_path = cfg.output_dir / "best_pruned.bt"
    pruned_path.write_text(bt.serialize(pruned), encoding="utf-8")
    print(f"best-ever fitness {result.best.fitness:.4f}, "
          f"size {result.best.size} raw, {bt.size(pruned)} pruned")
    print(f"wrote {raw_path} and {pruned_path}")
    return 0


def cmd_validate(args) -> int:
    cfg = config.load_config(args.config)
    tree = _load_tree(args.tree)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    report = evaluation.validate(tree, args.runs, args.seed, cfg.room,
                                 cfg.sim, cfg.vision,
                                 traces_dir=args.trace_dir)
    evaluation.write_validation_csv(report, args.out)
    print(f"runs: {args.runs}")
    print(f"success_rate: {100.0 * report.success_rate:.1f}%")
    print(f"mean_flight_time: {report.mean_flight_time:.2f} s")
    if report.mean_approach_angle is None:
        print("mean_approach_angle: n/a")
        print("mean_centre_offset: n/a")
    else:
        print(f"mean_approach_angle: {report.mean_approach_angle:.1f} deg")
        print(f"mean_centre_offset: {report.mean_centre_offset:.3f} m")
    print(f"wrote {args.out}")
    return 0


def cmd_tick(args) -> int:
    tree = _load_tree(args.tree)
    for name in ("x", "sigma", "Sigma", "Delta"):
        lo, hi = bt.INPUT_RANGES[name]
        value = getattr(args, name)
        if not lo <= value <= hi:
            raise UsageError(f"--{name} must be in [{lo}, {hi}], got {value}")
    lo, hi = bt.RUDDER_RANGE
    if not lo <= args.r <= hi:
        raise UsageError(f"--r must be in [{lo}, {hi}], got {args.r}")
    board = bt.Blackboard(x=args.x, sigma=args.sigma, Sigma=args.Sigma,
                          Delta=args.Delta, r=args.r)
    status, out, trace, _last = bt.tick_trace(tree, board)
    nodes = bt.nodes_preorder(tree)
    print(f"status: {status.value}")
    print(f"r: {out.r!r}")
    print("evaluated:")
    for index, node_status in trace:
        print(f"  {index:3d} {nodes[index].kind.value:<4} "
              f"{node_status.value}")
    return 0


def cmd_prune(args) -> int:
    tree = _load_tree(args.tree)
    pruned = bt.prune(tree)
    args.out.write_text(bt.serialize(pruned), encoding="utf-8")
    print(f"{bt.size(tree)} nodes -> {bt.size(pruned)}, wrote {args.out}")
    return 0


def _read_rows(path: Path):
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        names = tuple(reader.fieldnames or ())
        rows = list(reader)
    if not rows:
        raise UsageError(f"no data rows in {path}")
    return names, rows


def _svg_document(room, body: list[str]) -> str:
    width = 2 * PLOT_MARGIN + room.width * PLOT_SCALE
    height = 2 * PLOT_MARGIN + room.length * PLOT_SCALE
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{width:.0f}" height="{height:.0f}" '
            f'viewBox="0 0 {width:.0f} {height:.0f}">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _fx(room, x: float) -> float:
    return PLOT_MARGIN + x * PLOT_SCALE


def _fy(room, y: float) -> float:
    return PLOT_MARGIN + (room.length - y) * PLOT_SCALE


def _scene_elements(room) -> list[str]:
    parts = [f'<rect x="{_fx(room, 0):.1f}" y="{_fy(room, room.length):.1f}" '
             f'width="{room.width * PLOT_SCALE:.1f}" '
             f'height="{room.length * PLOT_SCALE:.1f}" '
             f'fill="#fcfcfa" stroke="#444" stroke-width="2"/>']
    lo, hi = sim.window_span(room)
    wall_lines = {
        "north": ((lo, room.length), (hi, room.length)),
        "south": ((lo, 0.0), (hi, 0.0)),
        "east": ((room.width, lo), (room.width, hi)),
        "west": ((0.0, lo), (0.0, hi)),
    }
    (x0, y0), (x1, y1) = wall_lines[room.window_wall]
    parts.append(f'<line x1="{_fx(room, x0):.1f}" y1="{_fy(room, y0):.1f}" '
                 f'x2="{_fx(room, x1):.1f}" y2="{_fy(room, y1):.1f}" '
                 f'stroke="{OUTCOME_COLOURS["Success"]}" stroke-width="6"/>')
    return parts


def _polyline(room, points, colour: str) -> str:
    coords = " ".join(f"{_fx(room, x):.1f},{_fy(room, y):.1f}"
                      for x, y in points)
    return (f'<polyline points="{coords}" fill="none" stroke="{colour}" '
            f'stroke-width="2"/>')


def _plot_trace(room, rows) -> list[str]:
    # split the path into runs of constant mode, each its own colour
    segments = []
    current_mode, current_points = None, []
    for row in rows:
        point = (float(row["x"]), float(row["y"]))
        mode = row["mode"]
        if current_points and mode != current_mode:
            current_points.append(point)
            segments.append((current_mode, current_points))
            current_points = []
        current_mode = mode
        current_points.append(point)
    segments.append((current_mode, current_points))

    colours: dict[str, str] = {}
    for mode, _pts in segments:
        if mode != "hold" and mode not in colours:
            colours[mode] = MODE_PALETTE[len(colours) % len(MODE_PALETTE)]
    parts = _scene_elements(room)
    for mode, points in segments:
        colour = HOLD_COLOUR if mode == "hold" else colours[mode]
        parts.append(_polyline(room, points, colour))
    sx, sy = float(rows[0]["x"]), float(rows[0]["y"])
    ex, ey = float(rows[-1]["x"]), float(rows[-1]["y"])
    parts.append(f'<circle cx="{_fx(room, sx):.1f}" cy="{_fy(room, sy):.1f}" '
                 f'r="5" fill="#333"/>')
    parts.append(f'<circle cx="{_fx(room, ex):.1f}" cy="{_fy(room, ey):.1f}" '
                 f'r="5" fill="none" stroke="#333" stroke-width="2"/>')
    labels = [("hold", HOLD_COLOUR)] + sorted(colours.items())
    for i, (mode, colour) in enumerate(labels):
        y = 16 + 14 * i
        parts.append(f'<rect x="6" y="{y - 9}" width="10" height="10" '
                     f'fill="{colour}"/>')
        parts.append(f'<text x="20" y="{y}" font-size="11" '
                     f'font-family="sans-serif">mode {mode}</text>')
    return parts


def _plot_validation(room, rows) -> list[str]:
    parts = _scene_elements(room)
    tick = 0.35  # heading tick length in metres
    for row in rows:
        x, y = float(row["x"]), float(row["y"])
        heading = float(row["heading"])
        colour = OUTCOME_COLOURS.get(row["outcome"], "#333")
        x2 = x + tick * math.cos(heading)
        y2 = y + tick * math.sin(heading)
        parts.append(f'<line x1="{_fx(room, x):.1f}" y1="{_fy(room, y):.1f}" '
                     f'x2="{_fx(room, x2):.1f}" y2="{_fy(room, y2):.1f}" '
                     f'stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<circle cx="{_fx(room, x):.1f}" '
                     f'cy="{_fy(room, y):.1f}" r="3" fill="{colour}"/>')
    for i, (name, colour) in enumerate(OUTCOME_COLOURS.items()):
        y = 16 + 14 * i
        parts.append(f'<rect x="6" y="{y - 9}" width="10" height="10" '
                     f'fill="{colour}"/>')
        parts.append(f'<text x="20" y="{y}" font-size="11" '
                     f'font-family="sans-serif">{name}</text>')
    return parts


def cmd_plot(args) -> int:
    cfg = config.load_config(args.config)
    names, rows = _read_rows(args.infile)
    try:
        if set(names) == set(sim.TRACE_COLUMNS):
            body = _plot_trace(cfg.room, rows)
        elif set(names) == set(evaluation.VALIDATION_COLUMNS):
            body = _plot_validation(cfg.room, rows)
        else:
            raise UsageError(f"unrecognized CSV columns in {args.infile}: "
                             f"{', '.join(names)}")
    except (KeyError, TypeError, ValueError) as err:
        raise UsageError(f"malformed CSV {args.infile}: {err}") from err
    args.out.write_text(_svg_document(cfg.room, body), encoding="utf-8")
    print(f"wrote {args.out}")
    return 0
