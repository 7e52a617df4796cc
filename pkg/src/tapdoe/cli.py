"""Command-line entry points.

    tap-doe simulate            one pulse experiment -> flux CSV (+ SVG)
    tap-doe fit                 synthetic data at the config design, then fit
    tap-doe doe-precision       one fit + ranked Fisher-criterion designs
    tap-doe doe-divergence      ranked divergence designs
    tap-doe workflow-precision  iterated fit/design loop
    tap-doe workflow-divergence divergence pick + BIC discrimination
    tap-doe study               predicted-vs-actual or divergence-bic study

Exit codes: 0 success, 1 numerical failure, 2 user/config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io_utils, svgplot, workflow
from .config import ConfigError, load_config
from .divergence import divergence_search
from .estimation import fit, synthetic_observation
from .mechanism import MechanismError
from .params import with_initial_guesses
from .precision import design_search
from .reactor import SolverError, simulate

USER_ERRORS = (ConfigError, MechanismError, FileNotFoundError, ValueError)
NUMERICAL_ERRORS = (SolverError, FloatingPointError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tap-doe",
        description="Pulse-response reactor simulation and design of experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default="tap-doe-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("simulate", help="simulate the configured experiment")
    common(p)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("fit", help="generate synthetic data and fit parameters")
    common(p)

    p = sub.add_parser("doe-precision", help="rank designs by Fisher criterion")
    common(p)
    p.add_argument("--criterion", choices=["A", "D", "E"], default=None)
    p.add_argument("--subset", default=None, help="comma-separated parameters")

    p = sub.add_parser("doe-divergence", help="rank designs by divergence")
    common(p)

    p = sub.add_parser("workflow-precision", help="iterated precision workflow")
    common(p)
    p.add_argument("--criterion", choices=["A", "D", "E"], default=None)
    p.add_argument("--subset", default=None)

    p = sub.add_parser("workflow-divergence", help="discrimination workflow")
    common(p)
    p.add_argument("--refit", action="store_true", default=None)

    p = sub.add_parser("study", help="validation studies")
    common(p)
    p.add_argument(
        "--kind",
        choices=["predicted-vs-actual", "divergence-bic"],
        required=True,
    )
    p.add_argument("--criterion", choices=["A", "D", "E"], default=None)
    return parser


def _load(args):
    cfg = load_config(args.config, seed_override=args.seed)
    if args.workers is not None:
        cfg.workers = max(1, args.workers)
    if getattr(args, "criterion", None):
        cfg.criterion = args.criterion
    if getattr(args, "subset", None):
        cfg.subset = tuple(s.strip() for s in args.subset.split(",") if s.strip())
    if getattr(args, "refit", None) is not None:
        cfg.refit = args.refit
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = simulate(
        cfg.mechanism, cfg.geometry, cfg.initial_design,
        cfg.free_parameters(), cfg.solver,
    )
    files = [out / "flux.csv"]
    io_utils.write_flux_csv(files[0], result.flux)
    if not args.no_plot:
        fig = svgplot.flux_figure(result.flux)
        files.append(fig.save(out / "flux.svg"))
    io_utils.write_manifest(out, files, {"command": "simulate"})
    print(f"wrote {files[0]}")
    return 0


def cmd_fit(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = cfg.free_parameters()
    obs, _ = workflow.run_experiment(cfg, cfg.initial_design, truth, cfg.seed)
    initial = with_initial_guesses(truth, cfg.initial_dg, cfg.initial_ga)
    result = fit(cfg.mechanism, cfg.geometry, [obs], initial, cfg.fit_options)
    files = [out / "fit_report.json", out / "observed_flux.csv"]
    io_utils.write_json(files[0], io_utils.fit_report_dict(result))
    io_utils.write_flux_csv(files[1], obs.flux)
    fitted = simulate(
        cfg.mechanism, cfg.geometry, cfg.initial_design, result.params, cfg.solver
    ).flux
    fig = svgplot.flux_figure(fitted, title_prefix="fit: ", observed=obs.flux)
    files.append(fig.save(out / "fit.svg"))
    io_utils.write_manifest(out, files, {"command": "fit"})
    for row in result.summary_rows():
        print(
            f"{row['name']:>6s}  {row['value']:+.4f} eV  "
            f"ci95 {row['ci95']:.3e} eV"
        )
    print(f"objective {result.objective:.4g}  converged {result.converged}")
    return 0


def cmd_doe_precision(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = cfg.free_parameters()
    obs, _ = workflow.run_experiment(cfg, cfg.initial_design, truth, cfg.seed)
    initial = with_initial_guesses(truth, cfg.initial_dg, cfg.initial_ga)
    result = fit(cfg.mechanism, cfg.geometry, [obs], initial, cfg.fit_options)
    search = design_search(
        cfg.mechanism, cfg.geometry, result.params, result.covariance,
        cfg.space, kind=cfg.criterion, subset=cfg.subset or None,
        noise=cfg.noise, solver=cfg.solver, workers=cfg.workers,
    )
    files = [out / "ranked_designs.csv", out / "fit_report.json"]
    io_utils.write_ranked_designs_csv(files[0], search, cfg.criterion)
    io_utils.write_json(files[1], io_utils.fit_report_dict(result))
    io_utils.write_manifest(out, files, {"command": "doe-precision"})
    best = search.best
    print(f"best design: {io_utils.design_columns(best.design)}")
    print(f"predicted {cfg.criterion} = {best.criteria[cfg.criterion]:.4e}")
    return 0


def cmd_doe_divergence(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    models = workflow.candidate_models(cfg)
    search = divergence_search(
        models, cfg.geometry, cfg.space, noise=cfg.noise, solver=cfg.solver,
        workers=cfg.workers,
    )
    files = [out / "ranked_divergence.csv"]
    io_utils.write_divergence_csv(files[0], search)
    io_utils.write_manifest(out, files, {"command": "doe-divergence"})
    best = search.best
    print(f"best design: {io_utils.design_columns(best.design)}")
    print(f"divergence = {best.divergence:.4e}")
    return 0


def cmd_workflow_precision(args) -> int:
    cfg = _load(args)
    report = workflow.precision_workflow(cfg, args.out)
    print(f"stop reason: {report['stop_reason']}")
    for chosen in report["chosen_designs"]:
        print(f"round {chosen['round']}: {chosen['design']}")
    return 0


def cmd_workflow_divergence(args) -> int:
    cfg = _load(args)
    report = workflow.divergence_workflow(cfg, args.out)
    print(f"chosen design: {report['chosen_design']}")
    for row in report["bic_table"]:
        print(f"  {row['label']:>12s}  J {row['objective']:.6g}  BIC {row['bic']:.6g}")
    for warning in report["warnings"]:
        print(f"warning: {warning}")
    return 0


def cmd_study(args) -> int:
    cfg = _load(args)
    if args.kind == "predicted-vs-actual":
        report = workflow.precision_study(cfg, args.out, kind=cfg.criterion)
        rho = report["rank_correlation"]
        if rho:
            print(
                "rank correlation (predicted vs actual): "
                + "  ".join(f"{k}: {v:+.3f}" for k, v in rho.items())
            )
    else:
        report = workflow.divergence_bic_study(cfg, args.out)
        for tag, info in report["passes"].items():
            print(f"{tag}: {info['n_completed']}/{info['n_designs']} designs")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "doe-precision": cmd_doe_precision,
    "doe-divergence": cmd_doe_divergence,
    "workflow-precision": cmd_workflow_precision,
    "workflow-divergence": cmd_workflow_divergence,
    "study": cmd_study,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
