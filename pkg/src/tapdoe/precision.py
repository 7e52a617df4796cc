"""Design of experiments for parameter precision.

Candidate experiments are scored by the predicted posterior covariance

    V = [ sum_gas sigma_gas^-2 Q_gas^T Q_gas + prior_cov^-1 ]^-1

where Q holds the dynamic flux sensitivities of the candidate and the prior
covariance comes from the latest fit.  Lower trace (A), determinant (D), or
largest eigenvalue (E) of V means a more informative experiment.  The
predicted-vs-actual study re-runs the fit per candidate to measure how well
those predictions track realized information gain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .estimation import (
    FitOptions,
    FitResult,
    Observation,
    fit,
    flux_sensitivities,
    synthetic_observation,
)
from .mechanism import Mechanism
from .noise import NoiseModel, perturb_parameters
from .parallel import ordered_map
from .params import ParameterSet
from .reactor import ExperimentDesign, GasPulse, ReactorGeometry, simulate

CRITERIA = ("A", "D", "E")

# re-export under the domain name: per-gas matrices of d(flux)/d(theta)
dynamic_sensitivity = flux_sensitivities


@dataclass(frozen=True)
class DesignSpace:
    """Grid of candidate experiments, enumerated deterministically.

    Intensities vary per pulsed gas (outer loops, in ``pulse_gases`` order),
    then the delayed gas's delay, then temperature (innermost).
    """

    pulse_gases: tuple[str, ...] = ("C3H8", "O2")
    intensity_levels: tuple[tuple[float, ...], ...] = (
        (0.5, 1.0, 2.0),
        (0.5, 1.0, 2.0),
    )
    delayed_gas: str = "C3H8"
    delay_levels: tuple[float, ...] = (0.0, 0.15, 0.3, 0.45, 0.6)
    temperatures: tuple[float, ...] = (600.0, 650.0, 700.0, 750.0)
    horizon: float = 2.5

    def __post_init__(self):
        if not self.pulse_gases:
            raise ValueError("design space needs at least one pulsed gas")
        if len(self.intensity_levels) != len(self.pulse_gases):
            raise ValueError("one intensity level tuple per pulsed gas")
        if any(len(lv) == 0 for lv in self.intensity_levels) or not (
            self.delay_levels and self.temperatures
        ):
            raise ValueError("design space is empty")
        if self.delayed_gas not in self.pulse_gases:
            raise ValueError("delayed gas must be one of the pulsed gases")

    def designs(self) -> list[ExperimentDesign]:
        out = []
        for combo in itertools.product(
            *self.intensity_levels, self.delay_levels, self.temperatures
        ):
            *intensities, delay, temp = combo
            pulses = tuple(
                GasPulse(
                    gas=g,
                    intensity=float(i),
                    delay=float(delay) if g == self.delayed_gas else 0.0,
                )
                for g, i in zip(self.pulse_gases, intensities)
            )
            out.append(
                ExperimentDesign(
                    pulses=pulses, temperature=float(temp), horizon=self.horizon
                )
            )
        return out


@dataclass
class FisherEvaluation:
    design: ExperimentDesign
    info: np.ndarray  # full predicted posterior covariance V
    criteria: dict  # {"A", "D", "E"} of V restricted to the chosen subset
    parameter_names: tuple[str, ...]  # names of the (restricted) block
    subset: tuple | None = None

    def criterion(self, kind: str) -> float:
        return self.criteria[kind]

    def restricted_criteria(self, params: ParameterSet, subset) -> dict:
        """Criteria of a different parameter block, without re-simulating."""
        block, _ = _restrict(self.info, params, subset)
        return _all_criteria(block)


@dataclass
class DesignSearchResult:
    evaluations: list  # FisherEvaluation, sorted ascending by the criterion
    kind: str
    failures: list = field(default_factory=list)  # (design, message)

    @property
    def best(self) -> FisherEvaluation:
        return self.evaluations[0]


def fisher_information(q_per_gas: dict, sigmas: dict, prior_cov) -> np.ndarray:
    """Predicted posterior covariance of a candidate experiment.

    Inverse-variance weighting: information grows as noise shrinks, and in
    the no-data limits (all-zero Q or infinite sigma) V returns the prior.
    Cross-gas noise terms are zero under the independent-channel assumption.
    """
    prior_cov = np.asarray(prior_cov, float)
    prior_precision = np.linalg.inv(prior_cov)
    bracket = prior_precision.copy()
    for g, q in q_per_gas.items():
        s = sigmas[g]
        if not np.isfinite(s):
            continue
        if s <= 0:
            raise ValueError(f"sigma for {g} must be positive")
        bracket += (q.T @ q) / s**2
    cond = np.linalg.cond(bracket)
    if not np.isfinite(cond) or cond > 1e15:
        raise np.linalg.LinAlgError(
            f"singular information bracket (condition number {cond:.3g})"
        )
    return np.linalg.inv(bracket)


def criterion(matrix, kind: str) -> float:
    """Scalarize a covariance-like matrix; lower is better for all three."""
    matrix = np.asarray(matrix, float)
    if kind == "A":
        return float(np.trace(matrix))
    if kind == "D":
        return float(np.linalg.det(matrix))
    if kind == "E":
        return float(np.max(np.linalg.eigvalsh(matrix)))
    raise ValueError(f"unknown criterion {kind!r}; expected one of {CRITERIA}")


def _all_criteria(matrix) -> dict:
    return {k: criterion(matrix, k) for k in CRITERIA}


def _restrict(matrix, params: ParameterSet, subset) -> tuple[np.ndarray, tuple]:
    if not subset:
        return matrix, params.free_names
    idx = params.subset_indices(tuple(subset))
    return matrix[np.ix_(idx, idx)], tuple(subset)


def evaluate_design(
    mech: Mechanism,
    geometry: ReactorGeometry,
    design: ExperimentDesign,
    theta: ParameterSet,
    prior_cov,
    noise: NoiseModel | None = None,
    subset=None,
    sensitivity_step: float = 1e-3,
    solver=None,
    sigmas: dict | None = None,
) -> FisherEvaluation:
    """Predicted information of one candidate experiment at theta.

    ``sigmas`` gives the per-gas noise levels directly (the usual case: the
    absolute levels calibrated on the experiment already run); without them
    the noise model is resolved against this design's own simulated trace.
    """
    if sigmas is None:
        base = simulate(mech, geometry, design, theta, solver).flux
        sigmas = (noise or NoiseModel()).resolve_sigmas(base)
    q = flux_sensitivities(
        mech, geometry, design, theta, step=sensitivity_step, options=solver
    )
    info = fisher_information(q, sigmas, prior_cov)
    restricted, names = _restrict(info, theta, subset)
    return FisherEvaluation(
        design=design,
        info=info,
        criteria=_all_criteria(restricted),
        parameter_names=names,
        subset=tuple(subset) if subset else None,
    )


def _evaluate_design_task(args):
    (
        mech, geometry, design, theta, prior_cov, noise, subset, step, solver,
        sigmas,
    ) = args
    try:
        return evaluate_design(
            mech, geometry, design, theta, prior_cov, noise, subset, step,
            solver, sigmas,
        )
    except Exception as exc:  # recorded, not fatal for the grid
        return (design, f"{type(exc).__name__}: {exc}")


def design_search(
    mech: Mechanism,
    geometry: ReactorGeometry,
    theta: ParameterSet,
    prior_cov,
    space: DesignSpace,
    kind: str = "D",
    subset=None,
    noise: NoiseModel | None = None,
    sensitivity_step: float = 1e-3,
    solver=None,
    workers: int = 1,
    sigmas: dict | None = None,
) -> DesignSearchResult:
    """Score every design on the grid and rank ascending by the criterion.

    Ties keep enumeration order; failed designs are recorded and skipped.
    ``sigmas`` holds the per-gas noise fixed across the grid (the instrument
    calibrated on the data already in hand); otherwise each candidate's noise
    re-resolves against its own predicted trace.
    """
    if kind not in CRITERIA:
        raise ValueError(f"unknown criterion {kind!r}")
    noise = noise or NoiseModel()
    designs = space.designs()
    if not designs:
        raise ValueError("design space is empty")
    tasks = [
        (
            mech, geometry, d, theta, prior_cov, noise, subset,
            sensitivity_step, solver, sigmas,
        )
        for d in designs
    ]
    results = ordered_map(_evaluate_design_task, tasks, workers)
    evaluations, failures = [], []
    for r in results:
        if isinstance(r, FisherEvaluation):
            evaluations.append(r)
        else:
            failures.append(r)
    evaluations.sort(key=lambda e: e.criteria[kind])
    return DesignSearchResult(evaluations=evaluations, kind=kind, failures=failures)


# ---------------------------------------------------------------------------
# predicted-vs-actual study
# ---------------------------------------------------------------------------

@dataclass
class StudyRow:
    design: ExperimentDesign
    predicted: dict  # criterion kind -> value
    actual: dict | None  # None when the refit failed
    ci95: dict | None  # per-parameter CI after refit
    error: str = ""


@dataclass
class StudyResult:
    rows: list
    kind: str
    parameter_names: tuple[str, ...]

    def completed(self):
        return [r for r in self.rows if r.actual is not None]

    def rank_correlation(self, kind: str | None = None) -> float:
        from scipy.stats import spearmanr

        kind = kind or self.kind
        rows = self.completed()
        pred = [r.predicted[kind] for r in rows]
        act = [r.actual[kind] for r in rows]
        return float(spearmanr(pred, act).statistic)


def _study_task(args):
    (
        mech, geometry, design, truth, theta_fit, prior_cov, base_obs, noise,
        subset, perturb_sigma, seed, fit_options, sigmas,
    ) = args
    try:
        pred = evaluate_design(
            mech, geometry, design, theta_fit, prior_cov, noise,
            subset=subset, solver=fit_options.solver, sigmas=sigmas,
        )
        sim_truth = truth
        if perturb_sigma > 0:
            sim_truth = perturb_parameters(truth, perturb_sigma, seed)
        noise_seeded = NoiseModel(
            sigma=noise.sigma, kind=noise.kind, seed=seed,
            relative_floor=noise.relative_floor,
        )
        new_obs = synthetic_observation(
            mech, geometry, design, sim_truth, noise_seeded,
            fit_options.solver, sigmas=sigmas,
        )
        refit = fit(
            mech, geometry, list(base_obs) + [new_obs], theta_fit, fit_options
        )
        cov_r, names = _restrict(refit.covariance, theta_fit, subset)
        return StudyRow(
            design=design,
            predicted=pred.criteria,
            actual=_all_criteria(cov_r),
            ci95=dict(refit.ci95),
        )
    except Exception as exc:
        return StudyRow(
            design=design,
            predicted={},
            actual=None,
            ci95=None,
            error=f"{type(exc).__name__}: {exc}",
        )


def predicted_vs_actual_study(
    mech: Mechanism,
    geometry: ReactorGeometry,
    truth: ParameterSet,
    theta_fit: ParameterSet,
    prior_cov,
    designs,
    base_observations,
    noise: NoiseModel,
    kind: str = "D",
    subset=None,
    perturb_sigma: float = 0.0,
    seed: int = 0,
    fit_options: FitOptions | None = None,
    workers: int = 1,
    sigmas: dict | None = None,
) -> StudyResult:
    """Refit against each candidate's synthetic data and compare criteria.

    Per design: predict V from theta_fit and the prior, then simulate the
    designated truth (optionally perturbed), add seeded noise, refit with the
    base observations included, and score the refit covariance the same way.
    ``sigmas`` pins the per-gas noise across designs (prediction and data
    alike).  Failed refits come back as rows with ``actual=None``.
    """
    fit_options = fit_options or FitOptions()
    designs = list(designs)
    if not designs:
        raise ValueError("design space is empty")
    tasks = [
        (
            mech, geometry, d, truth, theta_fit, prior_cov,
            tuple(base_observations), noise, subset, perturb_sigma,
            seed + 1000 * i, fit_options, sigmas,
        )
        for i, d in enumerate(designs)
    ]
    rows = ordered_map(_study_task, tasks, workers)
    _, names = _restrict(np.asarray(prior_cov, float), theta_fit, subset)
    return StudyResult(rows=rows, kind=kind, parameter_names=names)
