"""Design of experiments for mechanism discrimination.

The Hunter-Reiner divergence scores a candidate experiment by how far the
competing models' simulated outlet fluxes sit from one another, weighted by
the measurement noise:

    D = sum_{j<k} sum_t (f_j - f_k)^T diag(sigma^-2) (f_j - f_k)

Model selection against observed data uses the Bayesian information
criterion.  The literal printed form k*ln(n) - 2*ln(J) is provided, but note
it decreases as the fit worsens, so discrimination defaults to the Gaussian
form n*ln(J/n) + k*ln(n), which orders models by fit quality; both forms are
selectable wherever a BIC is reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimation import FitOptions, Observation, fit, objective, synthetic_observation
from .mechanism import Mechanism
from .noise import NoiseModel, perturb_parameters
from .parallel import ordered_map
from .params import ParameterSet
from .reactor import ExperimentDesign, ReactorGeometry, simulate

BIC_AS_PRINTED = "as-printed"
BIC_GAUSSIAN = "gaussian"
_J_FLOOR = 1e-300


@dataclass(frozen=True)
class CandidateModel:
    mechanism: Mechanism
    params: ParameterSet
    label: str

    def __post_init__(self):
        self.params.validate_against(self.mechanism)


@dataclass
class DivergenceEvaluation:
    design: ExperimentDesign
    divergence: float
    pair_contributions: dict  # (label_j, label_k) -> value
    sigmas: dict  # per-gas sigma used in the weighting


def divergence_from_fluxes(fluxes, labels, sigmas: dict):
    """Pairwise noise-weighted divergence of already-simulated flux series.

    Returns (total, {(label_j, label_k): contribution}).  The total is the
    sum over unordered model pairs of the per-time, per-gas squared
    differences weighted by 1/sigma^2.
    """
    gases = fluxes[0].gases
    for f in fluxes[1:]:
        if f.gases != gases:
            raise ValueError("models must share the same gas set")
    weights = {g: 1.0 / sigmas[g] ** 2 for g in gases}
    total = 0.0
    pairs = {}
    for j in range(len(fluxes)):
        for k in range(j + 1, len(fluxes)):
            contrib = 0.0
            for g in gases:
                diff = fluxes[j][g] - fluxes[k][g]
                contrib += weights[g] * float(diff @ diff)
            pairs[(labels[j], labels[k])] = contrib
            total += contrib
    return total, pairs


def hr_divergence(
    models,
    geometry: ReactorGeometry,
    design: ExperimentDesign,
    sigmas: dict | None = None,
    noise: NoiseModel | None = None,
    solver=None,
) -> DivergenceEvaluation:
    """Noise-weighted pairwise divergence of the models at one design.

    With no explicit ``sigmas``, per-gas values come from the noise model
    applied to the brightest per-gas peak across the models (symmetric in
    model order).  Any model's simulation failure aborts the evaluation.
    """
    models = list(models)
    if len(models) < 2:
        raise ValueError("divergence needs at least two models")
    labels = [m.label for m in models]
    if len(set(labels)) != len(labels):
        raise ValueError("model labels must be unique")
    fluxes = [
        simulate(m.mechanism, geometry, design, m.params, solver).flux
        for m in models
    ]
    if sigmas is None:
        noise = noise or NoiseModel()
        gases = fluxes[0].gases
        merged = {g: max(f.peak(g) for f in fluxes) for g in gases}
        # reuse the noise model's floor logic on the merged peaks
        brightest = max(merged.values(), default=0.0)
        floor = noise.relative_floor * brightest
        sigmas = {g: noise.sigma * max(merged[g], floor) for g in gases}
    total, pairs = divergence_from_fluxes(fluxes, labels, sigmas)
    return DivergenceEvaluation(
        design=design, divergence=total, pair_contributions=pairs, sigmas=sigmas
    )


def reference_sigmas(
    models, geometry: ReactorGeometry, design: ExperimentDesign,
    noise: NoiseModel, solver=None,
) -> dict:
    """Per-gas absolute sigma resolved once at a reference design.

    Uses the brightest per-gas peak across the candidate models, so the
    result does not depend on model order; hold these fixed to score a whole
    grid with one instrument-noise calibration.
    """
    fluxes = [
        simulate(m.mechanism, geometry, design, m.params, solver).flux
        for m in models
    ]
    gases = fluxes[0].gases
    merged = {g: max(f.peak(g) for f in fluxes) for g in gases}
    brightest = max(merged.values(), default=0.0)
    floor = noise.relative_floor * brightest
    return {g: noise.sigma * max(merged[g], floor) for g in gases}


def _divergence_task(args):
    models, geometry, design, sigmas, noise, solver = args
    try:
        return hr_divergence(models, geometry, design, sigmas, noise, solver)
    except Exception as exc:
        return (design, f"{type(exc).__name__}: {exc}")


@dataclass
class DivergenceSearchResult:
    evaluations: list  # sorted descending by divergence
    failures: list = field(default_factory=list)

    @property
    def best(self) -> DivergenceEvaluation:
        return self.evaluations[0]


def divergence_search(
    models,
    geometry: ReactorGeometry,
    space,
    sigmas: dict | None = None,
    noise: NoiseModel | None = None,
    solver=None,
    workers: int = 1,
) -> DivergenceSearchResult:
    """Evaluate every design; rank descending with grid-order tie-breaks."""
    designs = space.designs() if hasattr(space, "designs") else list(space)
    if not designs:
        raise ValueError("design space is empty")
    tasks = [(list(models), geometry, d, sigmas, noise, solver) for d in designs]
    results = ordered_map(_divergence_task, tasks, workers)
    evaluations, failures = [], []
    for r in results:
        if isinstance(r, DivergenceEvaluation):
            evaluations.append(r)
        else:
            failures.append(r)
    evaluations.sort(key=lambda e: -e.divergence)
    return DivergenceSearchResult(evaluations=evaluations, failures=failures)


# ---------------------------------------------------------------------------
# model selection
# ---------------------------------------------------------------------------

def bic(k: int, n: int, objective_value: float, form: str = BIC_AS_PRINTED) -> float:
    """Bayesian information criterion from a parameter count, sample count,
    and objective value.

    The default reproduces the printed form k*ln(n) - 2*ln(J).  ``form=
    "gaussian"`` gives n*ln(J/n) + k*ln(n), the least-squares form that grows
    with J and so ranks better fits lower.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if k < 0:
        raise ValueError("parameter count must be >= 0")
    j = objective_value
    if j < 0:
        raise ValueError("objective value must be positive")
    if j == 0 or j < _J_FLOOR:
        warnings.warn("objective at or below the 1e-300 floor", stacklevel=2)
        j = _J_FLOOR
    if form == BIC_AS_PRINTED:
        return k * math.log(n) - 2.0 * math.log(j)
    if form == BIC_GAUSSIAN:
        return n * math.log(j / n) + k * math.log(n)
    raise ValueError(f"unknown BIC form {form!r}")


@dataclass
class ModelScore:
    label: str
    objective: float
    k: int
    n: int
    bic: float
    refit: bool
    converged: bool = True
    error: str = ""
    params: ParameterSet | None = None


def discriminate(
    models,
    geometry: ReactorGeometry,
    observation: Observation,
    refit: bool = False,
    bic_form: str = BIC_GAUSSIAN,
    fit_options: FitOptions | None = None,
) -> list:
    """Score every candidate model against one observation; sort by BIC.

    ``refit=True`` re-optimizes each model's free parameters on the
    observation first (a failed refit keeps the unrefit objective and is
    flagged).  All bundled mechanisms share the free-parameter count, so the
    BIC penalty cancels between them and discrimination rests on J.
    """
    fit_options = fit_options or FitOptions()
    n = observation.n_samples
    scores = []
    for model in models:
        k = len(model.params.free_entries)
        theta = model.params
        converged = True
        err = ""
        if refit:
            try:
                fr = fit(
                    model.mechanism, geometry, [observation], theta, fit_options
                )
                theta = fr.params
                converged = fr.converged
            except Exception as exc:
                err = f"{type(exc).__name__}: {exc}"
                converged = False
        j = objective(
            model.mechanism, geometry, [observation], theta, fit_options.solver
        )
        scores.append(
            ModelScore(
                label=model.label,
                objective=j,
                k=k,
                n=n,
                bic=bic(k, n, j, form=bic_form),
                refit=refit,
                converged=converged,
                error=err,
                params=theta,
            )
        )
    scores.sort(key=lambda s: s.bic)
    return scores


# ---------------------------------------------------------------------------
# divergence-vs-BIC study
# ---------------------------------------------------------------------------

@dataclass
class DivergenceStudyRow:
    design: ExperimentDesign
    divergence: float
    scores: dict  # label -> ModelScore
    error: str = ""


def _divergence_study_task(args):
    (
        models, truth, geometry, design, noise, perturb_sigma, seed, refit,
        bic_form, fit_options, sigmas,
    ) = args
    try:
        div = hr_divergence(
            models, geometry, design, sigmas, noise, fit_options.solver
        )
        sim_truth = truth.params
        if perturb_sigma > 0:
            sim_truth = perturb_parameters(truth.params, perturb_sigma, seed)
        noise_seeded = NoiseModel(
            sigma=noise.sigma, kind=noise.kind, seed=seed,
            relative_floor=noise.relative_floor,
        )
        obs = synthetic_observation(
            truth.mechanism, geometry, design, sim_truth, noise_seeded,
            fit_options.solver, sigmas=sigmas,
        )
        scores = discriminate(
            models, geometry, obs, refit=refit, bic_form=bic_form,
            fit_options=fit_options,
        )
        return DivergenceStudyRow(
            design=design,
            divergence=div.divergence,
            scores={s.label: s for s in scores},
        )
    except Exception as exc:
        return DivergenceStudyRow(
            design=design, divergence=math.nan, scores={},
            error=f"{type(exc).__name__}: {exc}",
        )


def divergence_study(
    models,
    truth_label: str,
    geometry: ReactorGeometry,
    space,
    noise: NoiseModel,
    perturb_sigma: float = 0.05,
    refit: bool = False,
    bic_form: str = BIC_GAUSSIAN,
    seed: int = 0,
    fit_options: FitOptions | None = None,
    sigmas: dict | None = None,
    workers: int = 1,
) -> list:
    """Per design: perturbed-truth data, then discriminate all models.

    The perturbation and noise seeds derive from the design's grid index, so
    refit and no-refit passes see identical synthetic experiments.
    """
    fit_options = fit_options or FitOptions()
    models = list(models)
    by_label = {m.label: m for m in models}
    if truth_label not in by_label:
        raise ValueError(f"truth label {truth_label!r} not among the models")
    designs = space.designs() if hasattr(space, "designs") else list(space)
    if not designs:
        raise ValueError("design space is empty")
    tasks = [
        (
            models, by_label[truth_label], geometry, d, noise, perturb_sigma,
            seed + 1000 * i, refit, bic_form, fit_options, sigmas,
        )
        for i, d in enumerate(designs)
    ]
    return ordered_map(_divergence_study_task, tasks, workers)
