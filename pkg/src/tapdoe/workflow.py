"""End-to-end workflows: iterated precision refinement, divergence-based
discrimination, and the two validation studies, with report/plot emission.

The synthetic 'perform experiment' boundary is
:func:`tapdoe.estimation.synthetic_observation`; everything downstream only
sees :class:`Observation` objects, so real instrument data can slot in later.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io_utils, svgplot
from .config import RunConfig
from .divergence import (
    CandidateModel,
    discriminate,
    divergence_search,
    divergence_study,
    reference_sigmas,
)
from .estimation import fit, synthetic_observation
from .noise import NoiseModel
from .params import with_initial_guesses
from .precision import criterion as criterion_value
from .precision import design_search, predicted_vs_actual_study
from .reactor import simulate

GAP_WARNING = (
    "refit collapsed the BIC gap between the leading mechanisms; "
    "discrimination after re-optimization is not reliable"
)
NO_DESIGN_WARNING = "no discriminating design exists (divergence ~ 0 everywhere)"


def _seeded(noise: NoiseModel, seed: int) -> NoiseModel:
    return replace(noise, seed=seed)


def _design_dict(design):
    return io_utils.design_columns(design)


def run_experiment(cfg: RunConfig, design, truth_params, seed: int, sigmas=None):
    """The synthetic instrument: simulate the designated truth, add noise.

    ``sigmas`` carries the per-gas noise calibrated on the first experiment
    into designed follow-ups (instrument-constant noise).
    """
    noise = _seeded(cfg.noise, seed)
    obs = synthetic_observation(
        cfg.truth_mechanism(), cfg.geometry, design, truth_params, noise,
        cfg.solver, sigmas=sigmas,
    )
    return obs, noise


def precision_workflow(cfg: RunConfig, out_dir) -> dict:
    """Fit, search for the most informative next design, repeat until flat.

    Stops at ``max_rounds`` or when the best predicted criterion no longer
    improves on the current fit's achieved value by at least
    ``min_improvement_factor``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    mech = cfg.mechanism
    truth = cfg.free_parameters()
    initial = with_initial_guesses(truth, cfg.initial_dg, cfg.initial_ga)
    subset = cfg.subset or None

    report = {
        "workflow": "precision",
        "config": str(cfg.path),
        "seed": cfg.seed,
        "criterion": cfg.criterion,
        "subset": list(cfg.subset),
        "experiments": [],
        "fits": [],
        "chosen_designs": [],
        "stop_reason": "",
    }

    obs, noise0 = run_experiment(cfg, cfg.initial_design, truth, cfg.seed)
    sigmas0 = obs.sigmas  # instrument noise, calibrated once
    observations = [obs]
    report["experiments"].append(
        {"design": _design_dict(cfg.initial_design), "seed": noise0.seed,
         "sigmas": obs.sigmas}
    )
    result = fit(mech, cfg.geometry, observations, initial, cfg.fit_options)
    report["fits"].append(io_utils.fit_report_dict(result))

    for round_no in range(1, cfg.max_rounds + 1):
        achieved = criterion_value(
            _maybe_restrict(result.covariance, result.params, subset),
            cfg.criterion,
        )
        search = design_search(
            mech, cfg.geometry, result.params, result.covariance, cfg.space,
            kind=cfg.criterion, subset=subset, noise=cfg.noise,
            solver=cfg.solver, workers=cfg.workers, sigmas=sigmas0,
        )
        ranked_path = out_dir / f"ranked_designs_round{round_no}.csv"
        io_utils.write_ranked_designs_csv(ranked_path, search, cfg.criterion)
        files.append(ranked_path)
        best = search.best
        predicted = best.criteria[cfg.criterion]
        report["chosen_designs"].append(
            {"round": round_no, "design": _design_dict(best.design),
             "predicted": predicted, "achieved_before": achieved,
             "failures": len(search.failures)}
        )
        if predicted > achieved / cfg.min_improvement_factor:
            report["stop_reason"] = (
                f"predicted {cfg.criterion} improvement below "
                f"{cfg.min_improvement_factor}x"
            )
            break
        new_obs, noise_r = run_experiment(
            cfg, best.design, truth, cfg.seed + round_no, sigmas=sigmas0
        )
        observations.append(new_obs)
        report["experiments"].append(
            {"design": _design_dict(best.design), "seed": noise_r.seed,
             "sigmas": new_obs.sigmas}
        )
        result = fit(
            mech, cfg.geometry, observations, result.params, cfg.fit_options
        )
        report["fits"].append(io_utils.fit_report_dict(result))
    else:
        if cfg.max_rounds == 0:
            report["stop_reason"] = "max_rounds = 0: initial fit only"
        else:
            report["stop_reason"] = f"max_rounds reached ({cfg.max_rounds})"

    report_path = out_dir / "run_report.json"
    io_utils.write_json(report_path, report)
    files.append(report_path)
    fig = svgplot.flux_figure(
        simulate(mech, cfg.geometry, cfg.initial_design, result.params,
                 cfg.solver).flux,
        title_prefix="fitted: ",
        observed=observations[0].flux,
    )
    fig_path = out_dir / "final_fit.svg"
    fig.save(fig_path)
    files.append(fig_path)
    io_utils.write_manifest(out_dir, files, {"workflow": "precision"})
    return report


def _maybe_restrict(cov, params, subset):
    if not subset:
        return cov
    idx = params.subset_indices(tuple(subset))
    return np.asarray(cov)[np.ix_(idx, idx)]


def candidate_models(cfg: RunConfig) -> list:
    out = []
    for label, mech in cfg.mechanisms:
        out.append(
            CandidateModel(
                mechanism=mech, params=cfg.free_parameters(mech), label=label
            )
        )
    return out


def divergence_workflow(cfg: RunConfig, out_dir) -> dict:
    """Pick the most discriminating design, run it, rank mechanisms by BIC."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    models = candidate_models(cfg)
    if len(models) < 2:
        raise ValueError("divergence workflow needs >= 2 candidate mechanisms")

    report = {
        "workflow": "divergence",
        "config": str(cfg.path),
        "seed": cfg.seed,
        "truth": cfg.truth_label,
        "refit": cfg.refit,
        "bic_form": cfg.bic_form,
        "warnings": [],
        "experiments": [],
    }

    sigmas0 = reference_sigmas(
        models, cfg.geometry, cfg.initial_design, cfg.noise, cfg.solver
    )
    search = divergence_search(
        models, cfg.geometry, cfg.space, sigmas=sigmas0, noise=cfg.noise,
        solver=cfg.solver, workers=cfg.workers,
    )
    ranked_path = out_dir / "ranked_divergence.csv"
    io_utils.write_divergence_csv(ranked_path, search)
    files.append(ranked_path)
    best = search.best
    report["chosen_design"] = _design_dict(best.design)
    report["max_divergence"] = best.divergence
    report["search_failures"] = len(search.failures)
    if best.divergence <= 1e-12:
        report["warnings"].append(NO_DESIGN_WARNING)

    truth_mech = cfg.truth_mechanism()
    truth_params = cfg.free_parameters(truth_mech)
    if cfg.perturb_sigma > 0:
        from .noise import perturb_parameters

        truth_params = perturb_parameters(truth_params, cfg.perturb_sigma, cfg.seed)
    obs, noise_used = run_experiment(
        cfg, best.design, truth_params, cfg.seed, sigmas=sigmas0
    )
    report["experiments"].append(
        {"design": _design_dict(best.design), "seed": noise_used.seed,
         "sigmas": obs.sigmas}
    )
    scores = discriminate(
        models, cfg.geometry, obs, refit=cfg.refit, bic_form=cfg.bic_form,
        fit_options=cfg.fit_options,
    )
    report["bic_table"] = [
        {"label": s.label, "objective": s.objective, "k": s.k, "n": s.n,
         "bic": s.bic, "converged": s.converged, "error": s.error}
        for s in scores
    ]
    if len(scores) >= 2:
        gap = abs(scores[0].bic - scores[1].bic)
        report["bic_gap_top2"] = gap
        if cfg.refit and gap < cfg.bic_gap_threshold:
            report["warnings"].append(GAP_WARNING)

    report_path = out_dir / "run_report.json"
    io_utils.write_json(report_path, report)
    files.append(report_path)
    io_utils.write_manifest(out_dir, files, {"workflow": "divergence"})
    return report


def precision_study(cfg: RunConfig, out_dir, kind: str | None = None) -> dict:
    """Predicted-vs-actual information study over the study grid."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    mech = cfg.mechanism
    truth = cfg.free_parameters()
    initial = with_initial_guesses(truth, cfg.initial_dg, cfg.initial_ga)
    kind = kind or cfg.criterion
    subset = cfg.subset or None

    obs, _ = run_experiment(cfg, cfg.initial_design, truth, cfg.seed)
    base_fit = fit(mech, cfg.geometry, [obs], initial, cfg.fit_options)

    study = predicted_vs_actual_study(
        mech, cfg.geometry, truth, base_fit.params, base_fit.covariance,
        cfg.study_space.designs(), [obs], cfg.noise, kind=kind, subset=subset,
        perturb_sigma=0.0, seed=cfg.seed, fit_options=cfg.fit_options,
        workers=cfg.workers, sigmas=obs.sigmas,
    )
    csv_path = out_dir / f"study_predicted_vs_actual_{kind}.csv"
    io_utils.write_study_csv(csv_path, study)
    files.append(csv_path)

    rows = study.completed()
    rho = {k: study.rank_correlation(k) for k in ("A", "D", "E")} if rows else {}
    fig = svgplot.scatter_figure(
        f"predicted vs actual {kind}-value",
        f"predicted {kind}", f"actual {kind}",
        [r.predicted[kind] for r in rows],
        [r.actual[kind] for r in rows],
    )
    fig_path = out_dir / f"study_predicted_vs_actual_{kind}.svg"
    fig.save(fig_path)
    files.append(fig_path)

    report = {
        "study": "predicted-vs-actual",
        "criterion": kind,
        "seed": cfg.seed,
        "n_designs": len(study.rows),
        "n_completed": len(rows),
        "rank_correlation": rho,
        "base_fit": io_utils.fit_report_dict(base_fit),
    }
    report_path = out_dir / "study_report.json"
    io_utils.write_json(report_path, report)
    files.append(report_path)
    io_utils.write_manifest(out_dir, files, {"study": "predicted-vs-actual"})
    return report


def divergence_bic_study(cfg: RunConfig, out_dir) -> dict:
    """Divergence-vs-BIC scatter data, with and without refitting."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    models = candidate_models(cfg)
    labels = [m.label for m in models]
    sigmas0 = reference_sigmas(
        models, cfg.geometry, cfg.initial_design, cfg.noise, cfg.solver
    )
    report = {
        "study": "divergence-bic",
        "truth": cfg.truth_label,
        "seed": cfg.seed,
        "bic_form": cfg.bic_form,
        "passes": {},
    }
    for refit in (False, True):
        rows = divergence_study(
            models, cfg.truth_label, cfg.geometry, cfg.study_space, cfg.noise,
            perturb_sigma=cfg.perturb_sigma, refit=refit,
            bic_form=cfg.bic_form, seed=cfg.seed, fit_options=cfg.fit_options,
            workers=cfg.workers, sigmas=sigmas0,
        )
        tag = "refit" if refit else "norefit"
        csv_path = out_dir / f"study_divergence_bic_{tag}.csv"
        io_utils.write_divergence_study_csv(csv_path, rows, labels)
        files.append(csv_path)
        ok = [r for r in rows if not r.error]
        fig = svgplot.Figure(columns=1, panel_width=420, panel_height=320)
        panel = fig.panel(
            title=f"divergence vs BIC ({tag})", xlabel="divergence",
            ylabel="BIC", log_x=True,
        )
        for label in labels:
            panel.add_points(
                label,
                [r.divergence for r in ok],
                [r.scores[label].bic for r in ok],
            )
        fig_path = out_dir / f"study_divergence_bic_{tag}.svg"
        fig.save(fig_path)
        files.append(fig_path)
        report["passes"][tag] = {
            "n_designs": len(rows),
            "n_completed": len(ok),
            "errors": [r.error for r in rows if r.error],
        }
    report_path = out_dir / "study_report.json"
    io_utils.write_json(report_path, report)
    files.append(report_path)
    io_utils.write_manifest(out_dir, files, {"study": "divergence-bic"})
    return report
