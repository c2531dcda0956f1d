"""Command-line front end: ``growthpaths fit|screen|simulate|plot|generate|rerun``.

Every run writes a JSON config echo next to its primary output holding the
exact argument list, so ``growthpaths rerun ECHO`` reproduces the run.
Failures print one ``ERROR <code>: <message>`` line to stderr, remove any
partial outputs and exit with 1 (usage), 2 (data) or 3 (numerical).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .basis import build_basis
from .contour import DEFAULT_TAU_GRID, build_chart, screen_dataset
from .covariate import MuSpec, fit_covariate
from .dataset import read_csv, write_csv
from .errors import DataError, GrowthPathsError
from .rpca import FitConfig, fit, project_dataset, select_basis
from .serialization import dumps, load_model
from .simharness import (
    A_GRID,
    B_GRID,
    CI_GRID,
    ContaminationSpec,
    SimReport,
    contaminate,
    fidelity_table,
    fidelity_study,
    generate,
    screening_power,
    setting_spec,
    summarize_fidelity,
    write_fidelity_csv,
)
from .svgplot import chart_svg, components_svg, paths_svg, power_svg

log = logging.getLogger("growthpaths")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
_NUMERIC_CODES = {"degenerate", "nonconvergence"}


class UsageError(Exception):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self):
        self.paths = []

    def claim(self, path) -> Path:
        """Register ``path`` as an output and make sure its directory exists."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        return path

    def write_text(self, path, text: str) -> Path:
        path = self.claim(path)
        path.write_text(text, encoding="utf-8")
        return path

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _echo(outputs: _Outputs, path, command: str, argv, args) -> None:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    echo = {"growthpaths": __version__, "command": command, "argv": list(argv), "options": opts}
    outputs.write_text(path, json.dumps(echo, indent=1, default=str) + "\n")


def _config(args) -> FitConfig:
    try:
        return FitConfig(delta1=args.delta1, delta2=args.delta2, max_iter=args.max_iter,
                         max_components=args.max_components, r2_target=args.r2_target,
                         restarts=args.restarts, seed=args.seed, r2_denominator=args.r2_denominator)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _tau_grid(args):
    return tuple(_floats(args.tau_grid)) if args.tau_grid else DEFAULT_TAU_GRID


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args, argv, outputs: _Outputs) -> int:
    config = _config(args)
    data = read_csv(args.input, args.domain)
    if args.covariate and not data.has_covariate:
        raise DataError(f"{args.input}: --covariate needs a 'covariate' column")
    degrees = [args.degree] if args.degree is not None else _ints(args.degrees)
    knots = [args.knots] if args.knots is not None else _ints(args.knot_counts)
    if not degrees or not knots:
        raise UsageError("empty degree or knot candidate list")
    selected = len(degrees) * len(knots) > 1
    degree, q = select_basis(data, degrees, knots, config) if selected else (degrees[0], knots[0])
    basis = build_basis(data.domain, degree, q, data.times)
    if args.covariate:
        mu = MuSpec(args.mu_kind, args.mu_degree, args.mu_knots)
        model = fit_covariate(data, basis, mu, config)
    else:
        model = fit(data, basis, config)
    projected, errors = project_dataset(data, model)
    chart, chart_note = None, ""
    if args.no_chart:
        chart_note = "not requested"
    elif model.K < 2:
        chart_note = "skipped: fewer than two components"
    elif errors:
        chart_note = f"skipped: {len(errors)} training subjects could not be projected"
    elif len(data) < 50:
        chart_note = "skipped: fewer than 50 subjects"
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            chart = build_chart(projected[:, :2], _tau_grid(args), args.harmonics)
        chart_note = (f"built from projected training scores (N={len(data)}, H={args.harmonics}, "
                      f"{len(chart.tau_grid)} levels)")
        for w in caught:
            chart_note += f"; warning: {w.message}"
    outputs.write_text(args.out, dumps(model, None if errors else projected, chart))
    report = _fit_report(args, data, model, basis, selected, chart_note, errors)
    outputs.write_text(args.report or _sidecar(args.out, ".report.txt"), report)
    _echo(outputs, _sidecar(args.out, ".config.json"), "fit", argv, args)
    print(f"fitted K={model.K} R2={model.r_squared[-1]:.4f}; model written to {args.out}")
    return 0


def _fit_report(args, data, model, basis, selected, chart_note, errors) -> str:
    knots = ", ".join(f"{k:.6g}" for k in basis.interior_knots)
    lines = [
        f"growthpaths {__version__} fit report",
        f"input: {args.input}",
        f"subjects: {len(data)}  observations: {data.n_obs}  domain: [{data.domain[0]:.6g}, {data.domain[1]:.6g}]",
        f"basis: degree {basis.degree}, {len(basis.interior_knots)} interior knots [{knots}]"
        + (" (selected by cross-validation)" if selected else ""),
        f"model: {model.kind}" + (f" with mu {model.mu_spec.to_dict()}" if model.kind == "covariate" else ""),
        f"seed: {model.seed}",
        f"components: {model.K}",
        "R2 sequence: " + " ".join(f"{v:.6f}" for v in model.r_squared),
    ]
    warn = []
    for e in model.convergence_log:
        lines.append(f"component {e['component']}: iterations {e['iterations']}, objective {e['objective']:.6g}, "
                     f"failed restarts {e['restarts_failed']}, degenerate subjects {e['degenerate_subjects']}")
        if "warning" in e:
            warn.append(f"component {e['component']}: {e['warning']}")
    if model.r_squared[-1] < model.config.r2_target:
        warn.append(f"R2 target {model.config.r2_target} not reached within {model.config.max_components} components")
    for i, exc in sorted(errors.items()):
        warn.append(f"training subject {data.subjects[i].id}: {exc}")
    lines.append(f"chart: {chart_note}")
    lines.append("warnings: " + ("none" if not warn else ""))
    lines.extend(f"  {w}" for w in warn)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# screen


def cmd_screen(args, argv, outputs: _Outputs) -> int:
    model, projected, chart = load_model(args.model)
    if args.reference is not None:
        ref = read_csv(args.reference)
        projected, errors = project_dataset(ref, model)
        projected = projected[[i for i in range(len(ref)) if i not in errors]]
        chart = None
    if chart is None or args.rebuild_chart:
        if projected is None:
            raise UsageError("model file holds no chart or training scores; pass --reference")
        if model.K < 2:
            raise DataError("a chart needs at least two components")
        chart = build_chart(projected[:, :2], _tau_grid(args), args.harmonics)
    data = read_csv(args.subjects)
    results = screen_dataset(data, model, chart, args.level)
    lines = []
    out = outputs.claim(args.out)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *[f"score{k + 1}" for k in range(model.K)], "rank", "beyond_top", "flagged",
                    "error_code", "error"])
        for r in results:
            if r.error_code is None:
                w.writerow([r.subject_id, *[format(v, ".17g") for v in r.scores], format(r.rank, ".6g"),
                            int(r.beyond_top), int(r.flagged), "", ""])
            else:
                w.writerow([r.subject_id, *([""] * model.K), "", "", "", r.error_code, r.error])
                lines.append(f"subject {r.subject_id}: {r.error_code}: {r.error}")
    _echo(outputs, _sidecar(args.out, ".config.json"), "screen", argv, args)
    n_flag = sum(r.flagged for r in results)
    n_err = sum(r.error_code is not None for r in results)
    for line in lines:
        print(line, file=sys.stderr)
    print(f"screened {len(results)} subjects at level {args.level:g}: {n_flag} flagged, {n_err} errors")
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args, argv, outputs: _Outputs) -> int:
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    config = _config(args)
    out_dir = Path(args.out_dir)
    settings = ["normal", "empirical"] if args.setting == "both" else [args.setting]
    threads = args.threads or os.cpu_count() or 1
    if not args.no_fidelity:
        rows, summaries = {}, {}
        for setting in settings:
            spec = _gen_spec(args, setting)
            rows[setting] = fidelity_study(spec, args.replicates, args.degree, args.knots, config, threads)
            summaries[setting] = summarize_fidelity(rows[setting])
        write_fidelity_csv(rows, outputs.claim(out_dir / "fidelity.csv"))
        table = fidelity_table(summaries, args.replicates)
        outputs.write_text(out_dir / "fidelity.txt", table)
        print(table, end="")
    if args.power_grid != "none":
        grid = CI_GRID if args.power_grid == "ci" else [(a, b) for a in A_GRID for b in B_GRID]
        spec = _gen_spec(args, args.power_setting)
        report = screening_power(spec, grid, args.level, args.replicates, args.n_curves, _tau_grid(args),
                                 args.harmonics, config, threads)
        report.to_csv(outputs.claim(out_dir / "power.csv"))
        outputs.write_text(out_dir / "power.txt", report.table())
        print(report.table(), end="")
    _echo(outputs, out_dir / "simulate.config.json", "simulate", argv, args)
    return 0


def _gen_spec(args, setting):
    try:
        return setting_spec(setting, args.seed, noise_sd=args.noise_sd, n_subjects=args.n_subjects,
                            obs_per_subject=args.obs_per_subject)
    except GrowthPathsError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args, argv, outputs: _Outputs) -> int:
    if args.n_subjects < 1 or args.obs_per_subject < 1:
        raise UsageError("--n-subjects and --obs-per-subject must be at least 1")
    spec = _gen_spec(args, args.setting)
    data, truth = generate(spec, id_prefix=args.id_prefix)
    if args.contaminate is not None:
        a, b = args.contaminate
        data = contaminate(data, ContaminationSpec(a, b, len(data)))
    write_csv(data, outputs.claim(args.out))
    if args.truth:
        with outputs.claim(args.truth).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", *[f"score{k + 1}" for k in range(truth.scores.shape[1])]])
            for sid, row in zip(data.ids, truth.scores):
                w.writerow([sid, *[format(v, ".17g") for v in row]])
    _echo(outputs, _sidecar(args.out, ".config.json"), "generate", argv, args)
    print(f"wrote {len(data)} subjects ({data.n_obs} observations) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args, argv, outputs: _Outputs) -> int:
    if args.kind == "power":
        try:
            report = SimReport.from_csv(args.input)
        except (KeyError, ValueError) as exc:
            raise DataError(f"{args.input}: malformed report ({exc})") from None
        svg = power_svg(report)
    else:
        model, projected, chart = load_model(args.input)
        data = read_csv(args.data) if args.data else None
        if args.kind == "components":
            svg = components_svg(model)
        elif args.kind == "chart":
            if chart is None or projected is None:
                raise DataError(f"{args.input}: model file has no embedded chart")
            highlight = None
            if args.highlight is not None:
                highlight = _highlight_scores(args.highlight, model, projected, data)
            levels = tuple(_floats(args.levels))
            try:
                svg = chart_svg(chart, projected, levels, highlight)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        else:
            if data is None:
                raise UsageError("--kind paths needs --data")
            if args.highlight is not None and args.highlight not in data.ids:
                raise UsageError(f"subject {args.highlight!r} is not in {args.data}")
            svg = paths_svg(data, model, args.highlight)
    outputs.write_text(args.out, svg)
    _echo(outputs, _sidecar(args.out, ".config.json"), "plot", argv, args)
    print(f"wrote {args.out}")
    return 0


def _highlight_scores(sid, model, projected, data):
    if sid in model.ids:
        return projected[model.ids.index(sid), :2]
    if data is None or sid not in data.ids:
        raise UsageError(f"subject {sid!r} is neither a training subject nor in --data")
    scores, errors = project_dataset(data.subset([data.ids.index(sid)]), model)
    if errors:
        raise errors[0]
    return scores[0, :2]


# ---------------------------------------------------------------------------
# rerun


def cmd_rerun(args, argv, outputs: _Outputs) -> int:
    try:
        echo = json.loads(Path(args.config).read_text(encoding="utf-8"))
        inner = echo["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{args.config}: not a config echo ({exc})") from None
    if inner and inner[0] == "rerun":
        raise UsageError("a config echo cannot point at another rerun")
    return main(inner)


# ---------------------------------------------------------------------------
# parser


def _add_fit_options(p):
    g = p.add_argument_group("fitting")
    g.add_argument("--delta1", type=float, default=1e-6, help="parameter-change tolerance")
    g.add_argument("--delta2", type=float, default=1e-9, help="relative objective-change tolerance")
    g.add_argument("--max-iter", type=int, default=500)
    g.add_argument("--max-components", type=int, default=4)
    g.add_argument("--r2-target", type=float, default=0.9, help="stop once R2 reaches this value")
    g.add_argument("--restarts", type=int, default=3, help="random starts per component")
    g.add_argument("--r2-denominator", choices=("centered", "raw"), default="centered")


def _add_chart_options(p):
    g = p.add_argument_group("chart")
    g.add_argument("--tau-grid", default=None,
                   help="comma-separated quantile levels (default 0.05,...,0.95,0.975,0.99)")
    g.add_argument("--harmonics", type=int, default=3, help="trigonometric harmonics of the contour curves")


def _add_generator_options(p, settings=("normal", "empirical")):
    g = p.add_argument_group("generator")
    g.add_argument("--setting", choices=settings, default="normal",
                   help="score law: bivariate normal or resampled empirical table")
    g.add_argument("--noise-sd", type=float, default=1.0)
    g.add_argument("--n-subjects", type=int, default=500)
    g.add_argument("--obs-per-subject", type=int, default=6)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="growthpaths", description="Component-score growth charts for sparse growth paths.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master random seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap for parallel replicates (default: CPU count); results do not depend on it")

    p = sub.add_parser("fit", help="fit mean and components, build the reference chart")
    p.add_argument("input", help="CSV with columns id,time,value[,covariate]")
    p.add_argument("--out", required=True, help="model file (JSON)")
    p.add_argument("--report", default=None, help="fit report path (default: <out>.report.txt)")
    p.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"), default=None)
    p.add_argument("--degree", type=int, default=None, help="spline degree (cross-validated when omitted)")
    p.add_argument("--knots", type=int, default=None, help="interior knots (cross-validated when omitted)")
    p.add_argument("--degrees", default="2,3", help="degree candidates for cross-validation")
    p.add_argument("--knot-counts", default="0,1,2,3,4", help="knot-count candidates for cross-validation")
    p.add_argument("--covariate", action="store_true", help="fit the covariate-adjusted model")
    p.add_argument("--mu-kind", choices=("poly", "bspline"), default="poly")
    p.add_argument("--mu-degree", type=int, default=1)
    p.add_argument("--mu-knots", type=int, default=0)
    p.add_argument("--no-chart", action="store_true", help="do not embed a contour chart")
    _add_fit_options(p)
    _add_chart_options(p)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("screen", help="rank subjects on a model's chart")
    p.add_argument("model")
    p.add_argument("subjects", help="CSV of subjects to screen")
    p.add_argument("--out", required=True, help="ranks CSV")
    p.add_argument("--level", type=float, default=0.95, help="flag ranks above this level")
    p.add_argument("--reference", default=None, help="CSV whose projected scores define the chart")
    p.add_argument("--rebuild-chart", action="store_true", help="rebuild the chart from stored training scores")
    _add_chart_options(p)
    common(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("simulate", help="Monte Carlo fidelity and screening-power studies")
    _add_generator_options(p, ("normal", "empirical", "both"))
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--power-grid", choices=("none", "ci", "default"), default="none",
                   help="contamination grid: none, 3x3 subgrid, or full 7x7")
    p.add_argument("--power-setting", choices=("normal", "empirical"), default="empirical",
                   help="score law of the reference and contaminated samples in the power study")
    p.add_argument("--no-fidelity", action="store_true", help="skip the RISE/RMSE study")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--knots", type=int, default=2)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--n-curves", type=int, default=100, help="contaminated curves per cell")
    _add_fit_options(p)
    _add_chart_options(p)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    _add_generator_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None, help="also write the true scores to this CSV")
    p.add_argument("--id-prefix", default="s")
    p.add_argument("--contaminate", type=float, nargs=2, metavar=("A", "B"), default=None,
                   help="add the drift A*(t-9)+B to every curve")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plot", help="write an SVG figure")
    p.add_argument("input", help="model file, or power CSV for --kind power")
    p.add_argument("--kind", required=True, choices=("components", "chart", "paths", "power"))
    p.add_argument("--out", required=True, help="SVG path")
    p.add_argument("--data", default=None, help="dataset CSV (paths; extra subjects for chart highlight)")
    p.add_argument("--highlight", default=None, help="subject id to highlight")
    p.add_argument("--levels", default="0.5,0.75,0.95", help="contour levels to draw")
    common(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("rerun", help="repeat a run from its config echo")
    p.add_argument("config")
    p.set_defaults(func=cmd_rerun)
    return parser


def _exit_code(exc) -> int:
    code = getattr(exc, "code", "")
    return EXIT_NUMERIC if code in _NUMERIC_CODES else EXIT_DATA


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    outputs = _Outputs()
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("a subcommand is required (fit, screen, simulate, generate, plot, rerun)")
        return args.func(args, argv, outputs)
    except UsageError as exc:
        outputs.cleanup()
        print(f"ERROR usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GrowthPathsError as exc:
        outputs.cleanup()
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        outputs.cleanup()
        print(f"ERROR io: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        outputs.cleanup()
        print(f"ERROR numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        outputs.cleanup()
        print(f"ERROR usage: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
