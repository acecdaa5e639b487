"""Command-line front end: generate functions, decompose, verify, sweep.

Exit codes: 0 success, 1 verification found violations, 2 bad configuration.
Reports are written as JSON or CSV; when an output file is given, the sweep
subcommand also renders figures next to it (suppressed by --deterministic or
--no-plot), and verify/props render them on request via --plot.  The
OSC_THREADS environment variable caps worker parallelism.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .grid import (
    GENERATOR_KINDS,
    GridError,
    generate,
    load_function,
    root_cube,
    save_function,
)
from .oscillation import CubeClass, OscParams
from .decompose import decompose_v1, decompose_v2, load_tree, save_tree
from .harness import (
    CHECKS,
    CheckReport,
    CorpusSpec,
    UnknownCheck,
    constant_sweep,
    run_check,
)

_GEN_PARAM_FLAGS = (
    "value",
    "boundary",
    "high",
    "low",
    "amplitude",
    "alpha",
    "phase",
    "phase2",
    "exponent",
)
_GEN_INT_FLAGS = ("cell", "frequency", "frequency2")


def _add_corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--count", type=int, default=40, help="number of corpus instances")
    p.add_argument("--base-seed", type=int, default=0, help="seed of the first instance")
    p.add_argument(
        "--dims", default="1,2", help="comma-separated corpus dimensions (subset of 1,2)"
    )
    p.add_argument("--depths-1d", default="5,6", help="comma-separated 1-d grid depths")
    p.add_argument("--depths-2d", default="3,4", help="comma-separated 2-d grid depths")
    p.add_argument(
        "--kinds",
        default=None,
        help=f"comma-separated generator kinds (default: all of {', '.join(GENERATOR_KINDS[1:])})",
    )


def _add_report_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=None, help="report file; stdout when omitted")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help="report format (default: from --out extension, else json)")
    p.add_argument("--deterministic", action="store_true",
                   help="omit runtime fields and skip figures so reruns are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medosc",
        description="Median-oscillation decompositions and inequality verification on grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a grid function file")
    g.add_argument("--kind", required=True, choices=GENERATOR_KINDS)
    g.add_argument("--dim", type=int, default=1, choices=(1, 2))
    g.add_argument("--depth", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    for flag in _GEN_PARAM_FLAGS:
        g.add_argument(f"--{flag}", type=float, default=None)
    for flag in _GEN_INT_FLAGS:
        g.add_argument(f"--{flag}", type=int, default=None)
    g.add_argument("--center", default=None,
                   help="comma-separated singularity location for singular-power")

    d = sub.add_parser("decompose", help="run one decomposition and write the tree")
    d.add_argument("--in", dest="infile", required=True, help="grid function file")
    d.add_argument("--variant", choices=("v1", "v2"), default="v1")
    d.add_argument("--s", type=float, default=0.25)
    d.add_argument("--t", type=float, default=0.5)
    d.add_argument("--class", dest="cube_class", choices=("dyadic", "aligned"),
                   default="aligned", help="cube family for the sharp-threshold variant")
    d.add_argument("--out", required=True, help="tree JSON file")

    v = sub.add_parser("verify", help="run a named check and write its report")
    v.add_argument("--check", default="decomposition",
                   help=f"check name: {', '.join(sorted(CHECKS))}")
    v.add_argument("--in", dest="infile", default=None,
                   help="verify this grid function file instead of a generated corpus")
    v.add_argument("--tree", default=None,
                   help="with --in: sanity-check this saved tree against the function")
    v.add_argument("--s", type=float, default=0.25)
    v.add_argument("--t", type=float, default=0.5)
    v.add_argument("--delta", type=float, default=None)
    v.add_argument("--variant", choices=("v1", "v2"), default="v1")
    v.add_argument("--class", dest="cube_class", choices=("dyadic", "aligned"),
                   default="aligned")
    v.add_argument("--tau", type=int, default=0)
    v.add_argument("--plot", action="store_true", help="render figures next to --out")
    _add_corpus_args(v)
    _add_report_args(v)

    s = sub.add_parser("sweep", help="run a check across a parameter grid, emit CSV")
    s.add_argument("--check", required=True, help=f"check name: {', '.join(sorted(CHECKS))}")
    s.add_argument("--grid", nargs="+", required=True, metavar="PARAM=V1,V2,...",
                   help="grid axes, e.g. --grid s=0.1,0.25,0.4 t=0.5")
    s.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    _add_corpus_args(s)
    _add_report_args(s)

    pr = sub.add_parser("props", help="run the exhaustive small-inequality suite")
    pr.add_argument("--s", type=float, default=0.25)
    pr.add_argument("--t", type=float, default=0.5)
    pr.add_argument("--plot", action="store_true", help="render figures next to --out")
    _add_corpus_args(pr)
    _add_report_args(pr)

    return parser


def _parse_csv_list(raw: str, kind, flag: str, parser: argparse.ArgumentParser):
    try:
        return tuple(kind(item) for item in raw.split(",") if item != "")
    except ValueError:
        parser.error(f"cannot parse {flag}={raw!r} as comma-separated {kind.__name__}s")


def _corpus_from_args(args, parser: argparse.ArgumentParser) -> CorpusSpec:
    dims = _parse_csv_list(args.dims, int, "--dims", parser)
    if not dims or any(d not in (1, 2) for d in dims):
        parser.error(f"--dims must be a subset of 1,2, got {args.dims!r}")
    kinds = None
    if args.kinds is not None:
        kinds = tuple(args.kinds.split(","))
        unknown = [k for k in kinds if k not in GENERATOR_KINDS]
        if unknown:
            parser.error(f"unknown generator kinds: {', '.join(unknown)}")
    spec = CorpusSpec(
        dimensions=dims,
        depths_1d=_parse_csv_list(args.depths_1d, int, "--depths-1d", parser),
        depths_2d=_parse_csv_list(args.depths_2d, int, "--depths-2d", parser),
        count=args.count,
        base_seed=args.base_seed,
    )
    if kinds is not None:
        spec = CorpusSpec(
            kinds=kinds,
            dimensions=spec.dimensions,
            depths_1d=spec.depths_1d,
            depths_2d=spec.depths_2d,
            count=spec.count,
            base_seed=spec.base_seed,
        )
    return spec


def _osc_params(parser: argparse.ArgumentParser, s: float, t: float, delta=None) -> OscParams:
    try:
        params = OscParams(s=s, t=t, delta=delta)
        params.require_decomposition()
    except ValueError as exc:
        parser.error(str(exc))
    return params


def _emit_report(report: CheckReport, args, parser) -> None:
    fmt = args.format
    if fmt is None:
        fmt = "csv" if (args.out or "").endswith(".csv") else "json"
    text = report.to_csv() if fmt == "csv" else report.to_json(args.deterministic)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _render(report: CheckReport, args, sweep: bool) -> None:
    if args.deterministic or not args.out:
        return
    if sweep:
        if getattr(args, "no_plot", False):
            return
    elif not getattr(args, "plot", False):
        return
    from .figures import render_report, render_sweep

    out = Path(args.out)
    renderer = render_sweep if sweep else render_report
    for path in renderer(report, out.parent, out.stem):
        print(f"figure: {path}")


def _summarize(report: CheckReport) -> None:
    print(
        f"check={report.check} ok={report.ok} max_ratio={report.max_ratio:.6g} "
        f"violations={len(report.violations)} flagged={len(report.flagged)}"
    )
    for msg in report.violations[:20]:
        print(f"violation: {msg}")
    if len(report.violations) > 20:
        print(f"... and {len(report.violations) - 20} more violations")


def _check_kwargs(check: str, args, parser) -> dict:
    """Map the CLI's flat flags onto the selected check's signature."""
    if check == "weighted":
        if args.delta is None:
            parser.error("--delta is required for the weighted check")
        _osc_params(parser, args.s, args.t, args.delta)
        return {"s": args.s, "t": args.t, "delta": args.delta,
                "cube_class": CubeClass(args.cube_class)}
    if check == "decomposition":
        _osc_params(parser, args.s, args.t)
        return {"s": args.s, "t": args.t, "variant": args.variant,
                "cube_class": CubeClass(args.cube_class)}
    if check in ("props", "refinement"):
        _osc_params(parser, args.s, args.t)
        return {"s": args.s, "t": args.t}
    if check == "cz-sharp":
        return {"s": args.s}
    if check == "cz-sharp-shift":
        return {"s": args.s, "tau": args.tau}
    if check == "shift-local":
        return {"s": args.s, "taus": (args.tau,)}
    if check == "shift-domination":
        _osc_params(parser, args.s, args.t)
        return {"s": args.s, "t": args.t, "tau": args.tau}
    parser.error(f"unknown check {check!r}; known: {', '.join(sorted(CHECKS))}")


def _cmd_gen(args, parser) -> int:
    params = {}
    for flag in _GEN_PARAM_FLAGS + _GEN_INT_FLAGS:
        val = getattr(args, flag)
        if val is not None:
            params[flag] = val
    if args.center is not None:
        params["center"] = tuple(
            float(x) for x in _parse_csv_list(args.center, float, "--center", parser)
        )
    try:
        f = generate(args.kind, args.dim, args.depth, seed=args.seed, **params)
    except GridError as exc:
        parser.error(str(exc))
    save_function(f, args.out)
    print(f"wrote {args.out}: {args.kind} dim={args.dim} depth={args.depth} seed={args.seed}")
    return 0


def _cmd_decompose(args, parser) -> int:
    try:
        f = load_function(args.infile)
    except (OSError, ValueError, KeyError) as exc:
        parser.error(f"cannot read {args.infile}: {exc}")
    params = _osc_params(parser, args.s, args.t)
    root = root_cube(f.dimension)
    if args.variant == "v1":
        tree = decompose_v1(f, root, params, CubeClass(args.cube_class))
    else:
        tree = decompose_v2(f, root, params)
    save_tree(tree, args.out)
    gens = len(tree.generations)
    print(f"wrote {args.out}: variant={args.variant} generations={gens} "
          f"cubes={tree.cube_count()}")
    return 0


def _cmd_verify(args, parser) -> int:
    if args.infile is not None:
        try:
            f = load_function(args.infile)
        except (OSError, ValueError, KeyError) as exc:
            parser.error(f"cannot read {args.infile}: {exc}")
        if args.tree is not None:
            tree = load_tree(args.tree)
            if tree.f_digest != f.digest():
                parser.error(f"tree {args.tree} was not built from {args.infile}")
        corpus = [(Path(args.infile).stem, f)]
        if args.check != "decomposition" and f.dimension != 1:
            parser.error(f"check {args.check!r} needs a 1-d function")
    else:
        corpus = _corpus_from_args(args, parser)
    kwargs = _check_kwargs(args.check, args, parser)
    try:
        report = run_check(args.check, corpus, **kwargs)
    except UnknownCheck as exc:
        parser.error(str(exc))
    _emit_report(report, args, parser)
    _render(report, args, sweep=False)
    _summarize(report)
    return 0 if report.ok else 1


def _cmd_sweep(args, parser) -> int:
    grid = {}
    for item in args.grid:
        if "=" not in item:
            parser.error(f"grid axis {item!r} is not of the form PARAM=V1,V2,...")
        key, raw = item.split("=", 1)
        values = []
        for piece in raw.split(","):
            if piece == "":
                continue
            try:
                values.append(int(piece) if piece.lstrip("-").isdigit() else float(piece))
            except ValueError:
                values.append(piece)
        if not values:
            parser.error(f"grid axis {item!r} has no values")
        grid[key] = tuple(values)
    spec = _corpus_from_args(args, parser)
    if args.format is None and not (args.out or "").endswith(".json"):
        args.format = "csv"
    try:
        report = constant_sweep(args.check, grid, spec)
    except (UnknownCheck, ValueError) as exc:
        parser.error(str(exc))
    _emit_report(report, args, parser)
    _render(report, args, sweep=True)
    _summarize(report)
    return 0 if report.ok else 1


def _cmd_props(args, parser) -> int:
    _osc_params(parser, args.s, args.t)
    spec = _corpus_from_args(args, parser)
    report = run_check("props", spec, s=args.s, t=args.t)
    _emit_report(report, args, parser)
    _render(report, args, sweep=False)
    _summarize(report)
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "decompose": _cmd_decompose,
        "verify": _cmd_verify,
        "sweep": _cmd_sweep,
        "props": _cmd_props,
    }
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
