"""Batch command line: generate fields, traces, probes, reconstructions.

Exit codes: 0 success, 2 usage error, 3 numeric/module failure (with an
error JSON on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .errors import CheckerFieldError
from .fields import (
    Box,
    CheckeredField,
    discretize,
    field_from_json,
    field_to_obj,
    random_checkered_field,
)
from .forward import add_noise, boundary_trace, trace_from_csv, trace_to_csv
from .probes import (
    AnalyticMomentSource,
    BoundaryMomentSource,
    VolumeMomentSource,
    moment_prefactor,
    probe_table_rows,
    write_probe_csv,
)
from .reconstruction import ReconstructionConfig, reconstruct_scalar_with_report
from .svgplot import line_chart_svg

FIG1_DOMAIN = Box((0.0, 0.0), (4.0, 3.0))
FIG1_BOXES = (
    (Box((0.8, 1.0), (1.6, 2.0)), 1.0),
    (Box((2.4, 0.8), (3.2, 1.8)), 1.0),
)

# Constant-density diagnostic setup: a unit charge block centered in a
# unit-scale window so boundary noise is amplified by the support gap.
DIAG_DOMAIN = Box((-1.0, -1.0), (1.0, 1.0))
DIAG_CHARGE = Box((-0.1, -0.1), (0.1, 0.1))


def fig1_field() -> CheckeredField:
    return CheckeredField(FIG1_DOMAIN, FIG1_BOXES)


def diagnostic_field() -> CheckeredField:
    return CheckeredField(DIAG_DOMAIN, ((DIAG_CHARGE, 1.0),))


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _config_from_args(args, analytic: bool) -> ReconstructionConfig:
    base = ReconstructionConfig.oracle() if analytic else ReconstructionConfig()
    return ReconstructionConfig(
        alpha0=args.alpha0 if args.alpha0 is not None else base.alpha0,
        ratio=args.ratio if args.ratio is not None else base.ratio,
        count=args.count if args.count is not None else base.count,
        directions=args.directions if args.directions is not None else base.directions,
        window=args.window if args.window is not None else base.window,
        tol_value=args.tol if args.tol is not None else base.tol_value,
        tol_hull=base.tol_hull,
        max_peel_rounds=base.max_peel_rounds,
    )


def cmd_gen(args) -> int:
    if args.preset == "fig1":
        field = fig1_field()
    elif args.preset == "const":
        field = diagnostic_field()
    else:
        rng = np.random.default_rng(args.seed)
        domain = Box((0.0, 0.0), (4.0, 3.0))
        field = random_checkered_field(domain, args.boxes, rng,
                                       coord_step=0.25, min_side=0.25)
    _dump_json(field_to_obj(field), args.out)
    return 0


def _load_field(path: str) -> CheckeredField:
    with open(path) as fh:
        return field_from_json(fh.read())


def cmd_forward(args) -> int:
    field = _load_field(args.field)
    gamma = field.domain
    trace = boundary_trace(field, gamma, points_per_edge=args.points,
                           panels_per_edge=args.panels)
    if args.noise > 0:
        trace = add_noise(trace, args.noise, args.seed)
    trace_to_csv(trace, args.out)
    return 0


def cmd_probe(args) -> int:
    if args.mode == "boundary":
        trace = trace_from_csv(args.trace)
        source = BoundaryMomentSource(trace)
    else:
        field = _load_field(args.field)
        if args.mode == "analytic":
            source = AnalyticMomentSource(discretize(field), field.domain)
        else:
            source = VolumeMomentSource(field)
    alphas = (args.alpha0 or 0.5) * (args.ratio or 1.3) ** np.arange(args.count or 12)
    count_dirs = args.directions or 8
    phi = 2.0 * np.pi * np.arange(count_dirs) / count_dirs
    thetas = np.column_stack([np.cos(phi), np.sin(phi)])
    rows = probe_table_rows(source, alphas, thetas)
    write_probe_csv(args.out, rows, source.dim)
    return 0


def cmd_reconstruct(args) -> int:
    if args.mode == "boundary":
        trace = trace_from_csv(args.trace)
        source = BoundaryMomentSource(trace)
        domain = trace.gamma
    else:
        field = _load_field(args.field)
        domain = field.domain
        if args.mode == "oracle":
            source = AnalyticMomentSource(discretize(field), domain)
        else:
            source = VolumeMomentSource(field)
    cfg = _config_from_args(args, analytic=args.mode == "oracle")
    _, report = reconstruct_scalar_with_report(source, domain, cfg)
    _dump_json(report.to_obj(), args.out)
    return 0


def _log_moment_per_alpha(source, alphas, theta, psi) -> np.ndarray:
    out = np.full(len(alphas), np.nan)
    for k, a in enumerate(alphas):
        log_sum = source.log_weighted_sum(np.array([a]), theta, psi)[0]
        if np.isfinite(log_sum.real):
            pref = moment_prefactor(a, theta, psi)
            out[k] = (log_sum.real + np.log(abs(pref))) / a
    return out


def cmd_diagnose(args) -> int:
    field = diagnostic_field()
    theta = np.array([1.0, 0.0])
    psi = np.array([0.0, 1.0])
    alphas = (args.alpha0 or 0.25) * (args.ratio or 1.25) ** np.arange(args.count or 24)

    vol = VolumeMomentSource(field)
    trace = boundary_trace(field, field.domain, points_per_edge=args.points,
                           panels_per_edge=1)
    if args.noise > 0:
        trace = add_noise(trace, args.noise, args.seed)
    bdry = BoundaryMomentSource(trace)

    s_vol = _log_moment_per_alpha(vol, alphas, theta, psi)
    s_bdry = _log_moment_per_alpha(bdry, alphas, theta, psi)

    rel = np.abs(s_bdry - s_vol) / np.maximum(np.abs(s_vol), 1e-12)
    crossover = None
    for a, r in zip(alphas, rel):
        if np.isfinite(r) and r > args.crossover_level:
            crossover = float(a)
            break

    with open(args.out + ".csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "log_moment_per_alpha_volume",
                         "log_moment_per_alpha_boundary"])
        for a, sv, sb in zip(alphas, s_vol, s_bdry):
            writer.writerow([repr(float(a)), repr(float(sv)), repr(float(sb))])
    svg = line_chart_svg(
        [("volume", alphas, s_vol), ("boundary", alphas, s_bdry)],
        title="log|P| / alpha: volume vs boundary evaluation",
        xlabel="alpha", ylabel="log|P| / alpha")
    with open(args.out + ".svg", "w") as fh:
        fh.write(svg)
    summary = {
        "noise": args.noise,
        "crossover_alpha": crossover,
        "max_relative_gap": float(np.nanmax(rel)),
        "csv": args.out + ".csv",
        "svg": args.out + ".svg",
    }
    _dump_json(summary)
    return 0


def cmd_certify(args) -> int:
    from .nullspace import run_certification

    report = run_certification()
    _dump_json(report, args.out)
    return 0 if report["all_pass"] else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="checkerfield",
        description="box-source generation, probing and recovery")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a field JSON")
    p.add_argument("--preset", choices=["fig1", "const", "random"],
                   default="random")
    p.add_argument("--boxes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("forward", help="field JSON -> boundary trace CSV")
    p.add_argument("--field", required=True)
    p.add_argument("--points", type=int, default=16, help="Gauss order per panel")
    p.add_argument("--panels", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("probe", help="moment table CSV")
    p.add_argument("--mode", choices=["analytic", "volume", "boundary"],
                   default="analytic")
    p.add_argument("--field")
    p.add_argument("--trace")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("reconstruct", help="recover the field; report JSON")
    p.add_argument("--mode", choices=["oracle", "volume", "boundary"],
                   default="oracle")
    p.add_argument("--field")
    p.add_argument("--trace")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--directions", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("diagnose",
                       help="volume vs boundary log-moment curves (CSV + SVG)")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--noise", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crossover-level", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("certify", help="null-space certification JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        return args.func(args)
    except (CheckerFieldError, ValueError, OSError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        report = getattr(exc, "report", None)
        if report is not None:
            error["report"] = report.to_obj()
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
