"""Command-line entry point: ``chipletplace {run,eval,route,compare}``.

Exit codes: 0 success, 1 usage, 2 validation, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .annealer import FIDELITIES, OBJECTIVES, AnnealSchedule, Evaluator, anneal
from .export import dump_json, write_field_csv, write_field_planes, write_route_csv
from .metrics import compare_runs
from .model import ConfigError, PackingError, load_architecture, load_placement, save_placement, validate_placement
from .router import build_routing_graph, flow_violations, route_nets, route_segments
from .stress import StressError
from .thermal import SolverError

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunRequest:
    config: str
    objective: str
    seed: int
    out: Path
    schedule: AnnealSchedule
    fidelity: str = "full-route"
    resolution: float = 1.0
    pitch: float = 1.0
    capacity: int = 128
    figures: bool = True
    verbose: bool = False


def parse_seeds(text: str) -> list[int]:
    """``"1..5"`` or ``"1,3,7"``."""
    try:
        if ".." in text:
            a, b = text.split("..")
            seeds = list(range(int(a), int(b) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}")
    if not seeds:
        raise UsageError(f"empty seed list {text!r}")
    return seeds


def write_eval_artifacts(detail: dict, outdir: Path) -> None:
    t, s, grad = detail["temperature"], detail["stress"].field, detail["gradient"].field
    write_field_csv(t, outdir / "temperature.csv")
    write_field_planes(t, outdir, "temperature")
    write_field_csv(s, outdir / "von_mises.csv")
    write_field_planes(s, outdir, "von_mises")
    write_field_csv(grad, outdir / "gradient.csv")
    write_field_planes(grad, outdir, "gradient")
    write_route_csv(route_segments(detail["routing_graph"], detail["routes"]), outdir / "routes.csv")


def execute_run(req: RunRequest) -> int:
    spec = load_architecture(req.config)
    evaluator = Evaluator(spec, resolution=req.resolution, fidelity=req.fidelity, pitch=req.pitch, capacity=req.capacity)
    progress = (lambda m: print(f"[{req.objective} seed {req.seed}] {m}", file=sys.stderr)) if req.verbose else None
    report = anneal(spec, req.objective, replace(req.schedule, seed=req.seed), evaluator, progress=progress)
    req.out.mkdir(parents=True, exist_ok=True)
    data = report.to_json_dict()
    data["config"] = Path(req.config).name
    dump_json(data, req.out / "report.json")
    best = load_placement(req.out / "report.json")
    save_placement(best, req.out / "placement.json")
    write_eval_artifacts(report.artifacts, req.out)
    if req.figures:
        from .plotting import render_run_figures

        render_run_figures(data, report.artifacts, spec, best, req.out)
    if report.aborted:
        print(f"run aborted: {report.aborted}", file=sys.stderr)
        return EXIT_SOLVER
    m = data["best"]["metrics"]
    print(
        f"{spec.name} {req.objective} seed={req.seed}: peak_temp={m['peak_temp']:.3f} C "
        f"peak_stress={m['peak_stress']:.3f} MPa wirelength={m['wirelength']:.1f} mm -> {req.out}"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
    spec = load_architecture(args.config)  # fail fast on config errors
    iters = spec.iters_per_level if args.iters_per_level is None else args.iters_per_level
    try:
        schedule = AnnealSchedule(
            initial_temp=args.initial_temp, cooling_rate=args.cooling_rate,
            iters_per_level=iters, stop_temp=args.stop_temp, warmup=args.warmup,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    out = Path(args.out)
    reqs = [
        RunRequest(
            config=args.config, objective=args.objective, seed=s,
            out=out if len(seeds) == 1 and not args.seeds else out / f"seed_{s}",
            schedule=schedule, fidelity=args.fidelity, resolution=args.resolution,
            pitch=args.pitch, capacity=args.capacity, figures=not args.no_figures, verbose=args.verbose,
        )
        for s in seeds
    ]
    if len(reqs) == 1 or args.jobs == 1:
        codes = [execute_run(r) for r in reqs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(execute_run, reqs))
    return max(codes)


def cmd_eval(args) -> int:
    spec = load_architecture(args.config)
    p = load_placement(args.placement)
    try:
        bad = validate_placement(p, spec)
    except KeyError as exc:
        print(f"invalid placement: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if bad:
        for v in bad:
            print(f"invalid placement: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    ev = Evaluator(spec, resolution=args.resolution, pitch=args.pitch, capacity=args.capacity)
    detail = ev.detailed(p)
    e, g, corr = detail["evaluation"], detail["gradient"], detail["correlations"]
    result = {
        "peak_temp": e.peak_temp,
        "peak_stress": e.peak_stress,
        "wirelength": e.wirelength,
        "grad_mean": g.mean,
        "grad_std": g.std,
        "grad_max": g.max,
        "ts_corr": corr["ts"],
        "gs_corr": corr["gs"],
    }
    if args.json:
        print(json.dumps(result, indent=2))
    else:
        units = {"peak_temp": "C", "peak_stress": "MPa", "wirelength": "mm", "grad_mean": "C/mm",
                 "grad_std": "C/mm", "grad_max": "C/mm", "ts_corr": "", "gs_corr": ""}
        for k, v in result.items():
            print(f"{k:12s} {v!r} {units[k]}".rstrip())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_eval_artifacts(detail, out)
        dump_json(result, out / "metrics.json")
    return EXIT_OK


def cmd_route(args) -> int:
    spec = load_architecture(args.config)
    p = load_placement(args.placement)
    bad = validate_placement(p, spec)
    if bad:
        for v in bad:
            print(f"invalid placement: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    g = build_routing_graph(spec, p, args.pitch, args.capacity)
    res = route_nets(g, spec.nets)
    for r in res.routes:
        print(f"{r.net.name:24s} wires={r.net.wires:5d} routed={r.routed:5d} length={r.length:.3f} mm")
    print(f"total_wirelength {res.total_wirelength!r} mm feasible={res.feasible}")
    for v in flow_violations(g, res):
        print(f"warning: {v}", file=sys.stderr)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_route_csv(route_segments(g, res), out / "routes.csv")
    return EXIT_OK if res.feasible else EXIT_SOLVER


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("compare needs at least two reports")
    reports = [json.loads(Path(p).read_text()) for p in args.reports]
    try:
        comp = compare_runs(reports, baseline=args.baseline, candidate=args.candidate)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(comp.format_table())
    if args.csv:
        Path(args.csv).write_text(comp.to_csv())
    if args.figure:
        from .plotting import plot_comparison

        plot_comparison(comp, args.figure)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="chipletplace", description="Thermal, stress and wirelength aware chiplet placement.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(p):
        p.add_argument("--resolution", type=float, default=1.0, help="thermal grid cells per mm (default 1)")
        p.add_argument("--pitch", type=float, default=1.0, help="bump-site pitch in mm (default 1)")
        p.add_argument("--capacity", type=int, default=128, help="wires per routing edge (default 128)")

    r = sub.add_parser("run", help="anneal a placement")
    r.add_argument("--config", required=True)
    r.add_argument("--objective", choices=OBJECTIVES, default="wst")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--seeds", help="independent chains, e.g. 1..5 or 1,2,3; outputs go to OUT/seed_N")
    r.add_argument("--out", default="out")
    r.add_argument("--fidelity", choices=FIDELITIES, default="full-route")
    r.add_argument("--iters-per-level", type=int, default=None, help="default: the config's iters_per_level")
    r.add_argument("--initial-temp", type=float, default=1.0)
    r.add_argument("--cooling-rate", type=float, default=0.9)
    r.add_argument("--stop-temp", type=float, default=0.01)
    r.add_argument("--warmup", type=int, default=30, help="random placements sampled for normalization ranges")
    r.add_argument("--jobs", type=int, default=None, help="worker processes for --seeds")
    r.add_argument("--no-figures", action="store_true")
    r.add_argument("-v", "--verbose", action="store_true")
    solver_flags(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate one placement")
    e.add_argument("--config", required=True)
    e.add_argument("--placement", required=True, help="placement JSON or a run report")
    e.add_argument("--out")
    e.add_argument("--json", action="store_true")
    solver_flags(e)
    e.set_defaults(func=cmd_eval)

    rt = sub.add_parser("route", help="route the nets of one placement")
    rt.add_argument("--config", required=True)
    rt.add_argument("--placement", required=True)
    rt.add_argument("--out")
    rt.add_argument("--pitch", type=float, default=1.0)
    rt.add_argument("--capacity", type=int, default=128)
    rt.set_defaults(func=cmd_route)

    c = sub.add_parser("compare", help="tabulate reports of one architecture")
    c.add_argument("reports", nargs="+")
    c.add_argument("--csv")
    c.add_argument("--figure")
    c.add_argument("--baseline", default="wt")
    c.add_argument("--candidate", default="wst")
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, PackingError, FileNotFoundError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, StressError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
