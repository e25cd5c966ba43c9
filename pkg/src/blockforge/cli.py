"""Command-line entry point.

Subcommands: design, redesign, eval, render, recognize, list-objects.

Exit codes: 0 success, 1 usage, 2 validation, 3 client, 4 internal. Errors
are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .catalog import (
    AssemblyPlan,
    InvalidOrientation,
    ValidationError,
    catalog_hash,
    load_catalog,
    load_plan,
    save_plan,
    validate_plan,
)
from .designer.client import LmError, RecordingClient, Transcript, client_from_mode
from .designer.pipeline import NoCandidates, slugify, generate_candidates, list_objects, select_best
from .evalharness import NoiseModel, ablation_csv, recognizability, recognizability_csv, run_ablation, run_trials, trials_csv
from .redesign import RedesignParams, redesign
from .render import Axis, RenderConfig, export_mesh, render_ortho
from .statics import DropError, SimParams, check_scene_stability, scene_from_plan

log = logging.getLogger("blockforge")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CLIENT, EXIT_INTERNAL = 0, 1, 2, 3, 4


def bundled_catalog() -> Path:
    return Path(str(resources.files(__package__).joinpath("data", "catalog.json")))


def bundled_designs() -> list[Path]:
    root = Path(str(resources.files(__package__).joinpath("data", "designs")))
    return sorted(root.glob("*.plan.json"))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers


def _write(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    return path


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _sim(args) -> SimParams:
    try:
        return SimParams(
            com_margin_mm=args.com_margin,
            contact_tol_mm=args.contact_tol,
            pos_threshold_mm=args.pos_threshold,
            workspace_half_mm=args.workspace,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _redesign_params(args) -> RedesignParams:
    try:
        return RedesignParams(
            collision_threshold_mm=args.threshold,
            circles=args.circles,
            points_per_circle=args.points,
            radius_min_mm=args.radius_min,
            radius_max_mm=args.radius_max,
            max_visits_per_block=args.max_visits,
            instability_probe_radius_mm=args.probe_radius,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_valid_plan(path, catalog, sim: SimParams) -> AssemblyPlan:
    plan = load_plan(path)
    report = validate_plan(plan, catalog, sim.workspace_half_mm)
    if not report.ok:
        raise ValidationError("; ".join(map(str, report.violations)), report.violations)
    return plan


def _render_config(args) -> RenderConfig:
    return RenderConfig(args.width, args.height, args.mm_per_px)


def _append_manifest(run_dir: Path, entry: dict) -> None:
    """Runs are append-only: every command adds one entry to ``manifest.json``."""
    path = run_dir / "manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {"entries": []}
    doc["entries"].append(entry)
    _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def run_design(prompt, catalog, client, run_dir, n=10, sim=SimParams(), cfg=RenderConfig(), workers=None, client_label="live"):
    """Generate, select, and write a self-contained run directory; return the manifest entry."""
    run_dir = Path(run_dir)
    failures = []
    candidates = generate_candidates(prompt, catalog, client, n, sim, cfg, max_workers=workers, failures=failures)
    selection = Transcript(f"{slugify(prompt)}-selection")
    bracket: list = []
    winner = select_best(candidates, RecordingClient(client, selection), prompt, bracket)

    transcripts = []
    for c in candidates:
        stem = c.transcript_id
        _write(run_dir / "candidates" / f"{stem}.plan.json", c.plan.to_json())
        for view, data in zip(("front", "side"), c.renders):
            _write(run_dir / "candidates" / f"{stem}_{view}.ppm", data)
        transcripts.append(c.transcript.save(run_dir / "transcripts").name)
    for f in failures:
        transcripts.append(f.transcript.save(run_dir / "transcripts").name)
    if selection.exchanges:
        transcripts.append(selection.save(run_dir / "transcripts").name)

    _write(run_dir / "winner.plan.json", winner.plan.to_json())
    for view, data in zip(("front", "side"), winner.renders):
        _write(run_dir / f"winner_{view}.ppm", data)
    entry = {
        "command": "design",
        "prompt": prompt,
        "catalog_hash": catalog_hash(catalog),
        "client": client_label,
        "model": getattr(client, "model", ""),
        "candidates": [c.summary() for c in candidates],
        "failures": [{"chain": f.chain, "error": f.error} for f in failures],
        "bracket": bracket,
        "winner": winner.transcript_id,
        "winner_digest": winner.plan.digest(),
        "transcripts": sorted(transcripts),
    }
    _append_manifest(run_dir, entry)
    return entry


def cmd_design(args) -> int:
    catalog = load_catalog(args.catalog)
    sim = _sim(args)
    if args.candidates < 1:
        raise UsageError("--candidates must be at least 1")
    client = client_from_mode(args.client)
    run_dir = Path(args.out or f"runs/{slugify(args.prompt)}")
    label = "live" if args.client == "live" else "replay"
    entry = run_design(
        args.prompt, catalog, client, run_dir, args.candidates, sim, _render_config(args), args.workers, label
    )
    _emit(
        {
            "run_dir": str(run_dir),
            "winner": entry["winner"],
            "candidates": len(entry["candidates"]),
            "failures": len(entry["failures"]),
        }
    )
    return EXIT_OK


def cmd_redesign(args) -> int:
    catalog = load_catalog(args.catalog)
    sim = _sim(args)
    params = _redesign_params(args)
    plan = _load_valid_plan(args.plan, catalog, sim)
    new, report = redesign(plan, catalog, params, sim)
    if args.output:
        save_plan(new, args.output)
    else:
        sys.stdout.write(new.to_json())
    if args.report:
        _write(Path(args.report), report.to_json())
    log.info(
        "redesign: %d adjustments, converged=%s, visits=%s", len(report.adjusted), report.converged, report.visits
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    catalog = load_catalog(args.catalog)
    sim = _sim(args)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    try:
        noise = NoiseModel(args.sigma, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    plan = _load_valid_plan(args.plan, catalog, sim)
    name = args.name or plan.prompt or Path(args.plan).stem
    if args.single:
        arm = run_trials(plan, catalog, sim, noise, args.trials)
        doc = {"object": name, "n_blocks": len(plan), "trials": args.trials, "sigma_mm": args.sigma, **arm.to_dict()}
        table = trials_csv(name, len(plan), arm)
    else:
        result = run_ablation(plan, catalog, sim, noise, args.trials, _redesign_params(args), name)
        doc = {"trials": args.trials, "sigma_mm": args.sigma, **result.to_dict()}
        table = ablation_csv([result])
    if args.csv:
        _write(Path(args.csv), table)
    if args.json:
        _write(Path(args.json), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _emit(doc)
    return EXIT_OK


def cmd_render(args) -> int:
    catalog = load_catalog(args.catalog)
    sim = _sim(args)
    plan = _load_valid_plan(args.plan, catalog, sim)
    try:
        axes = [Axis(v.strip()) for v in args.views.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"unknown view in {args.views!r}; choose from front, side, top") from exc
    scene = scene_from_plan(plan, catalog, sim)
    highlights = ()
    if args.highlight_unstable:
        report = check_scene_stability(scene, sim)
        highlights = () if report.offender is None else (report.offender,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.plan).name.split(".")[0]
    written = []
    cfg = _render_config(args)
    for axis in axes:
        view = render_ortho(scene, axis, highlights, cfg)
        written.append(str(view.save(out / f"{stem}_{axis.value}.{args.format}")))
    if args.mesh:
        written.append(str(export_mesh(scene, out / f"{stem}.obj")))
    _emit({"files": written})
    return EXIT_OK


def cmd_recognize(args) -> int:
    catalog = load_catalog(args.catalog)
    sim = _sim(args)
    pool = [ln.strip() for ln in Path(args.labels).read_text().splitlines() if ln.strip()]
    designs = []
    for path in args.plans:
        plan = _load_valid_plan(path, catalog, sim)
        if not plan.prompt:
            raise ValidationError(f"{path}: plan has no prompt to use as its label")
        view = render_ortho(scene_from_plan(plan, catalog, sim), Axis.FRONT, (), _render_config(args))
        designs.append((view.to_ppm(), plan.prompt))
    client = client_from_mode(args.client)
    try:
        result = recognizability(designs, pool, args.n, client, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.csv:
        _write(Path(args.csv), recognizability_csv([result]))
    _emit(result.to_dict())
    return EXIT_OK


def cmd_list_objects(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be positive")
    for item in list_objects(args.n, client_from_mode(args.client)):
        sys.stdout.write(item + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_sim_args(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--catalog", default=str(bundled_catalog()), help="block catalog JSON (default: bundled)")
    g.add_argument("--com-margin", type=float, default=1.0, metavar="MM")
    g.add_argument("--contact-tol", type=float, default=0.5, metavar="MM")
    g.add_argument("--pos-threshold", type=float, default=10.0, metavar="MM")
    g.add_argument("--workspace", type=float, default=200.0, metavar="MM", help="workspace half-width")


def _add_redesign_args(p):
    g = p.add_argument_group("redesign")
    g.add_argument("--threshold", type=float, default=5.0, metavar="MM", help="proximity threshold")
    g.add_argument("--circles", type=int, default=10)
    g.add_argument("--points", type=int, default=8, help="points per circle")
    g.add_argument("--radius-min", type=float, default=1.0, metavar="MM")
    g.add_argument("--radius-max", type=float, default=15.0, metavar="MM")
    g.add_argument("--max-visits", type=int, default=10)
    g.add_argument("--probe-radius", type=float, default=None, metavar="MM")


def _add_render_args(p):
    g = p.add_argument_group("rendering")
    g.add_argument("--width", type=int, default=400)
    g.add_argument("--height", type=int, default=300)
    g.add_argument("--mm-per-px", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockforge", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="JSON file of option defaults (flags override it)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", help="generate candidates with a chat model and pick the best")
    p.add_argument("prompt")
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--client", default="live", help="'live' or 'replay:<transcript dir>'")
    p.add_argument("--out", help="run directory (default runs/<prompt>)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="recorded for bookkeeping; design is driven by the client")
    _add_sim_args(p)
    _add_render_args(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("redesign", help="nudge fragile placements apart")
    p.add_argument("plan")
    p.add_argument("-o", "--output", help="write the redesigned plan here (default stdout)")
    p.add_argument("--report", help="write the redesign report JSON here")
    _add_sim_args(p)
    _add_redesign_args(p)
    p.set_defaults(func=cmd_redesign)

    p = sub.add_parser("eval", help="noisy assembly trials, with and without redesign")
    p.add_argument("plan")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sigma", type=float, default=3.0, metavar="MM", help="placement noise per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--single", action="store_true", help="evaluate the plan as given, no redesign arm")
    p.add_argument("--name", help="row label in the tables")
    p.add_argument("--json", help="write metrics JSON here")
    p.add_argument("--csv", help="write the metrics table here")
    _add_sim_args(p)
    _add_redesign_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="orthographic images and mesh export")
    p.add_argument("plan")
    p.add_argument("--out", default=".")
    p.add_argument("--views", default="front,side", help="comma list of front, side, top")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.add_argument("--mesh", action="store_true", help="also write an OBJ mesh")
    p.add_argument("--highlight-unstable", action="store_true")
    _add_sim_args(p)
    _add_render_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("recognize", help="ask the model to rank labels for rendered designs")
    p.add_argument("plans", nargs="+", help="plan files; each plan's prompt is its true label")
    p.add_argument("--labels", required=True, help="text file, one candidate label per line")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--client", default="live")
    p.add_argument("--csv")
    _add_sim_args(p)
    _add_render_args(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("list-objects", help="ask the model for evaluation object names")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--client", default="live")
    p.set_defaults(func=cmd_list_objects)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    """Install config-file values as parser defaults so explicit flags still win.

    Top-level keys apply to every subcommand that has the option; a nested
    object keyed by subcommand name applies to that subcommand only.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        doc = json.loads(Path(known.config).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file {known.config} not found") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {known.config} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        dests = {a.dest for a in sp._actions}
        flat = {k.replace("-", "_"): v for k, v in doc.items() if not isinstance(v, dict)}
        nested = {k.replace("-", "_"): v for k, v in doc.get(name, {}).items()}
        unknown = set(nested) - dests
        if unknown:
            raise UsageError(f"unknown {name} option(s) in config: {', '.join(sorted(unknown))}")
        sp.set_defaults(**{k: v for k, v in {**flat, **nested}.items() if k in dests})
    all_dests = {a.dest for sp in subparsers.choices.values() for a in sp._actions}
    stray = {
        k
        for k, v in doc.items()
        if (k not in subparsers.choices if isinstance(v, dict) else k.replace("-", "_") not in all_dests)
    }
    if stray:
        raise UsageError(f"unknown option(s) in config: {', '.join(sorted(stray))}")


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    violations = getattr(exc, "violations", None)
    if violations:
        doc["violations"] = [str(v) for v in violations]
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, exc)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except (ValueError, InvalidOrientation, DropError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail(EXIT_VALIDATION, exc)
    except (LmError, NoCandidates) as exc:
        return _fail(EXIT_CLIENT, exc)
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        log.debug("internal error", exc_info=True)
        return _fail(EXIT_INTERNAL, exc)


if __name__ == "__main__":
    sys.exit(main())
