"""Weighted least-squares parameter estimation with Hessian-based uncertainty.

The objective is the noise-weighted sum of squared flux residuals over every
observation, every time point, and every gas:

    J = 1/2 * sum_exp sum_t sum_gas (f_model - f_obs)^2 / sigma_gas^2

Fits run a bounded quasi-Newton (L-BFGS-B) over the free parameters with
finite-difference gradients.  Parameter covariance comes from the inverse
Hessian; the default uses the Gauss-Newton form built from dynamic flux
sensitivities, with a central finite-difference Hessian available for
cross-checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .mechanism import Mechanism
from .noise import NoiseModel, add_noise
from .parallel import ordered_map
from .params import ParameterSet
from .reactor import (
    ExperimentDesign,
    FluxSeries,
    ReactorGeometry,
    SolverOptions,
    simulate,
)


@dataclass(frozen=True)
class Observation:
    """One experiment's design, observed fluxes, and per-gas noise levels."""

    design: ExperimentDesign
    flux: FluxSeries
    sigmas: dict  # gas -> absolute sigma, nmol/s

    def __post_init__(self):
        for g in self.flux.gases:
            if g not in self.sigmas:
                raise ValueError(f"missing sigma for gas {g}")
            if self.sigmas[g] <= 0:
                raise ValueError(f"sigma for {g} must be positive")

    @property
    def n_samples(self) -> int:
        return len(self.flux.times) * len(self.flux.gases)


def synthetic_observation(
    mech: Mechanism,
    geometry: ReactorGeometry,
    design: ExperimentDesign,
    truth: ParameterSet | None,
    noise: NoiseModel,
    options: SolverOptions | None = None,
    sigmas: dict | None = None,
) -> Observation:
    """Simulate the designated truth, add noise, and package the result.

    This is the single boundary where the synthetic 'perform experiment' step
    lives; swapping in real instrument data means constructing the
    :class:`Observation` from a measured flux series instead.  Passing
    ``sigmas`` pins the per-gas noise to given absolute levels -- the
    instrument-constant convention used when a workflow runs designed
    follow-up experiments on the machine calibrated by its first run.
    """
    clean = simulate(mech, geometry, design, truth, options).flux
    if sigmas is None:
        sigmas = noise.resolve_sigmas(clean)
    if noise.sigma == 0.0:
        # a noiseless instrument: sigmas may still carry assumed weights
        noisy = clean
    else:
        noisy = add_noise(clean, noise, sigmas)
    return Observation(design=design, flux=noisy, sigmas=sigmas)


@dataclass(frozen=True)
class FitOptions:
    method: str = "quasi-newton"  # or "least-squares" (trust-region GN)
    max_iterations: int = 300
    gradient_tol: float = 1e-6
    objective_rel_tol: float = 1e-10
    gradient_step: float = 1e-6  # eV, forward differences inside L-BFGS-B
    hessian_mode: str = "gauss-newton"  # or "finite-difference"
    hessian_step: float = 1e-4  # eV, central differences
    sensitivity_step: float = 1e-3  # eV, dynamic sensitivities
    workers: int = 1  # parallel finite-difference gradient evaluations
    # weight continuation: a first pass flattens the per-gas weights (no
    # sigma below stage_floor times the largest) so sharply weighted trace
    # channels cannot trap the cold start in a compensation basin; the real
    # objective is then polished from that point.  0 disables the stage.
    stage_floor: float = 0.01
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class FitResult:
    params: ParameterSet  # optimized (free entries at theta_hat)
    objective: float
    hessian: np.ndarray  # (k, k), 1/eV^2
    covariance: np.ndarray  # (k, k), eV^2
    std_errors: dict  # name -> eV
    ci95: dict  # name -> eV
    converged: bool
    n_iterations: int
    trace: list  # objective value at each accepted iterate
    message: str = ""

    @property
    def free_names(self) -> tuple:
        return self.params.free_names

    def summary_rows(self):
        return [
            {
                "name": n,
                "value": self.params.value_of(n),
                "std_error": self.std_errors[n],
                "ci95": self.ci95[n],
            }
            for n in self.free_names
        ]


def objective(
    mech: Mechanism,
    geometry: ReactorGeometry,
    observations,
    params: ParameterSet,
    options: SolverOptions | None = None,
) -> float:
    """Weighted least-squares objective over one or more observations."""
    total = 0.0
    for obs in observations:
        sim = simulate(mech, geometry, obs.design, params, options).flux
        for g in sim.gases:
            resid = sim[g] - obs.flux[g]
            total += 0.5 * float(resid @ resid) / obs.sigmas[g] ** 2
    return total


def weighted_residuals(
    mech, geometry, observations, params, options=None
) -> np.ndarray:
    """Stacked per-sample residuals (f_model - f_obs)/sigma; J = ||r||^2 / 2."""
    chunks = []
    for obs in observations:
        sim = simulate(mech, geometry, obs.design, params, options).flux
        for g in sim.gases:
            chunks.append((sim[g] - obs.flux[g]) / obs.sigmas[g])
    return np.concatenate(chunks)


def objective_gradient(
    mech, geometry, observations, params, step=1e-3, options=None
) -> dict:
    """Central-difference dJ/dtheta for every entry in ``params`` (eV^-1)."""
    out = {}
    for e in params.entries:
        plus = params.with_values({e.name: e.value + step})
        minus = params.with_values({e.name: e.value - step})
        jp = objective(mech, geometry, observations, plus, options)
        jm = objective(mech, geometry, observations, minus, options)
        out[e.name] = (jp - jm) / (2.0 * step)
    return out


def sensitivity_screen(
    mech, geometry, observations, params, step=1e-3, options=None
) -> dict:
    """Per-parameter |dJ/dtheta| used to pick the identifiable subset.

    Parameters whose magnitude falls at or below a small threshold (the
    working cut is 1e-3) are effectively invisible to the data: barriers of
    near-equilibrated steps and reaction energies of effectively irreversible
    steps land there.
    """
    grad = objective_gradient(mech, geometry, observations, params, step, options)
    return {name: abs(v) for name, v in grad.items()}


# ---------------------------------------------------------------------------
# generic numeric pieces (also exercised directly by tests)
# ---------------------------------------------------------------------------

def _objective_task(args):
    mech, geometry, observations, params, solver = args
    return objective(mech, geometry, list(observations), params, solver)


def minimize_objective(fun, x0, bounds, options: FitOptions, jac=None):
    """Bounded quasi-Newton minimization with a monotone accepted-iterate trace."""
    trace = []

    def wrapped(x):
        return fun(np.asarray(x, float))

    def callback(intermediate_result):
        # scipy >= 1.11 passes an OptimizeResult, so the accepted objective
        # comes for free instead of costing one extra simulation per iterate
        trace.append(float(intermediate_result.fun))

    res = minimize(
        wrapped,
        np.asarray(x0, float),
        method="L-BFGS-B",
        jac=jac,
        bounds=bounds,
        options={
            "maxiter": options.max_iterations,
            "ftol": options.objective_rel_tol,
            "gtol": options.gradient_tol,
            "eps": options.gradient_step,
            "maxcor": 12,
        },
        callback=callback,
    )
    return res, trace


def hessian_of(fun, x, step=1e-4):
    """Central finite-difference Hessian of a scalar function, symmetrized."""
    x = np.asarray(x, float)
    k = len(x)
    h = np.eye(k) * step
    f0 = fun(x)
    hess = np.empty((k, k))
    for i in range(k):
        fpp = fun(x + h[i])
        fmm = fun(x - h[i])
        hess[i, i] = (fpp + fmm - 2.0 * f0) / step**2
        for j in range(i + 1, k):
            fpq = fun(x + h[i] + h[j])
            fpm = fun(x + h[i] - h[j])
            fmq = fun(x - h[i] + h[j])
            fmn = fun(x - h[i] - h[j])
            hess[i, j] = hess[j, i] = (fpq - fpm - fmq + fmn) / (4.0 * step**2)
    hess = 0.5 * (hess + hess.T)
    if not np.isfinite(hess).all():
        bad = np.argwhere(~np.isfinite(hess))[0]
        raise FloatingPointError(
            f"non-finite Hessian entry for parameter pair {tuple(bad)}"
        )
    return hess


def covariance_and_ci(hessian: np.ndarray):
    """Invert a Hessian into (covariance, std_errors, ci95) vectors.

    Falls back to the pseudo-inverse (with a warning) on rank deficiency; a
    negative variance means the point is not a minimum and raises.
    """
    hessian = np.asarray(hessian, float)
    if hessian.ndim != 2 or hessian.shape[0] != hessian.shape[1]:
        raise ValueError("hessian must be square")
    if not np.allclose(hessian, hessian.T, rtol=1e-8, atol=0.0):
        raise ValueError("hessian must be symmetric")
    k = hessian.shape[0]
    if np.linalg.matrix_rank(hessian) < k:
        warnings.warn("rank-deficient Hessian; using pseudo-inverse", stacklevel=2)
        cov = np.linalg.pinv(hessian)
    else:
        cov = np.linalg.inv(hessian)
    diag = np.diag(cov)
    if (diag < 0).any():
        raise ValueError("negative variance: not at a minimum")
    std = np.sqrt(diag)
    return cov, std, 1.96 * std


# ---------------------------------------------------------------------------
# Hessians of the fit objective
# ---------------------------------------------------------------------------

def hessian(
    mech, geometry, observations, params, step=1e-4, options=None
) -> np.ndarray:
    """Central finite-difference Hessian of J over the free parameters."""

    def fun(x):
        return objective(
            mech, geometry, observations, params.with_free_values(x), options
        )

    return hessian_of(fun, params.free_values, step)


def gauss_newton_hessian(
    mech, geometry, observations, params, step=1e-3, options=None
) -> np.ndarray:
    """Gauss-Newton Hessian sum_exp sum_gas Q^T Q / sigma^2 (fast mode).

    Q holds central-difference flux sensitivities, so this is positive
    semidefinite by construction and exact for zero residuals.
    """
    k = len(params.free_entries)
    hess = np.zeros((k, k))
    for obs in observations:
        q = flux_sensitivities(
            mech, geometry, obs.design, params, step=step, options=options
        )
        for g, mat in q.items():
            hess += (mat.T @ mat) / obs.sigmas[g] ** 2
    return hess


def flux_sensitivities(
    mech, geometry, design: ExperimentDesign, params, step=1e-3, options=None
) -> dict:
    """Per-gas dynamic sensitivity matrices d(flux)/d(theta), (nmol/s)/eV.

    Central differences over each free parameter; columns follow
    ``params.free_names`` and rows the simulator's output time grid.
    """
    names = params.free_names
    columns = {}
    for name in names:
        v = params.value_of(name)
        plus = simulate(
            mech, geometry, design, params.with_values({name: v + step}), options
        ).flux
        minus = simulate(
            mech, geometry, design, params.with_values({name: v - step}), options
        ).flux
        columns[name] = {
            g: (plus[g] - minus[g]) / (2.0 * step) for g in plus.gases
        }
    gases = next(iter(columns.values())).keys() if names else ()
    out = {}
    for g in gases:
        out[g] = np.column_stack([columns[n][g] for n in names])
    return out


# ---------------------------------------------------------------------------
# the fit itself
# ---------------------------------------------------------------------------

def _flatten_weights(observations, floor: float):
    """Observations with no sigma below ``floor`` times the largest sigma.

    Returns None when nothing changes (the stage would be a no-op).
    """
    sig_max = max(max(o.sigmas.values()) for o in observations)
    cutoff = floor * sig_max
    out = []
    changed = False
    for obs in observations:
        sigmas = {g: max(s, cutoff) for g, s in obs.sigmas.items()}
        changed = changed or any(
            sigmas[g] != obs.sigmas[g] for g in sigmas
        )
        out.append(replace(obs, sigmas=sigmas))
    return out if changed else None


def _coarsen_observations(observations, solver):
    """Subsample each observation onto a 2x coarser solver grid when the
    grids line up exactly; otherwise return the inputs unchanged."""
    coarse = replace(solver, dt=2.0 * solver.dt)
    out = []
    for obs in observations:
        times = obs.flux.times[1::2]
        n = int(round(obs.design.horizon / coarse.dt))
        expected = coarse.dt * np.arange(1, n + 1)
        if len(times) != n or not np.allclose(times, expected, rtol=1e-9):
            return observations, solver
        flux = FluxSeries(times, {g: obs.flux[g][1::2] for g in obs.flux.gases})
        out.append(replace(obs, flux=flux))
    return out, coarse


def _run_least_squares(mech, geometry, observations, initial, options):
    def resid(x):
        return weighted_residuals(
            mech, geometry, observations, initial.with_free_values(x),
            options.solver,
        )

    lo = np.array([b[0] for b in initial.free_bounds])
    hi = np.array([b[1] for b in initial.free_bounds])
    res = least_squares(
        resid,
        initial.free_values,
        bounds=(lo, hi),
        method="trf",
        diff_step=1e-4,
        ftol=max(options.objective_rel_tol, 1e-12),
        xtol=1e-10,
        gtol=None,
        max_nfev=options.max_iterations,
    )
    res.fun = float(res.cost)  # least_squares cost is already ||r||^2/2
    res.nit = int(res.nfev)
    return res


def _run_quasi_newton(mech, geometry, observations, initial, options):
    cache = {}

    def fun(x):
        key = tuple(x)
        if key not in cache:
            cache.clear()
            cache[key] = objective(
                mech, geometry, observations, initial.with_free_values(x),
                options.solver,
            )
        return cache[key]

    jac = None
    if options.workers > 1:
        # distinct-parameter probes are independent simulations, so the
        # forward-difference gradient fans out across processes (stepping
        # backward when a parameter sits at its upper bound)
        h = options.gradient_step
        upper = np.array([b[1] for b in initial.free_bounds])

        def jac(x):
            f0 = fun(x)
            steps = np.where(x + h <= upper, h, -h)
            probes = [
                (
                    mech, geometry, tuple(observations),
                    initial.with_free_values(x + steps[i] * basis),
                    options.solver,
                )
                for i, basis in enumerate(np.eye(len(x)))
            ]
            values = ordered_map(
                _objective_task, probes, workers=options.workers
            )
            return (np.asarray(values) - f0) / steps

    return minimize_objective(
        fun, initial.free_values, initial.free_bounds, options, jac=jac
    )


def fit(
    mech: Mechanism,
    geometry: ReactorGeometry,
    observations,
    initial: ParameterSet,
    options: FitOptions | None = None,
) -> FitResult:
    """Local weighted-least-squares fit of the free parameters.

    Converges on a small projected gradient or a vanishing relative change in
    J; hitting the iteration cap returns the best point flagged unconverged.
    """
    options = options or FitOptions()
    observations = list(observations)
    if not observations:
        raise ValueError("fit needs at least one observation")

    if options.method != "least-squares" and options.stage_floor:
        staged = _flatten_weights(observations, options.stage_floor)
        n_samples = sum(o.n_samples for o in observations)
        # stage only cold starts: a point already fitting to within a few
        # noise units sits in the right basin and the warm-up would only
        # perturb it (the staged objective's grid/weights are biased)
        cold = (
            staged is not None
            and objective(mech, geometry, observations, initial, options.solver)
            > 2.0 * n_samples
        )
        if cold:
            # basin capture only: flattened weights and, where the grids
            # line up, a 2x coarser time grid; the true objective is then
            # polished from the staged point
            staged, stage_solver = _coarsen_observations(staged, options.solver)
            stage_options = replace(
                options,
                solver=stage_solver,
                max_iterations=min(120, options.max_iterations),
                objective_rel_tol=max(options.objective_rel_tol, 1e-8),
            )
            x_warm = _run_quasi_newton(
                mech, geometry, staged, initial, stage_options
            )[0].x
            initial = initial.with_free_values(x_warm)

    if options.method == "least-squares":
        res = _run_least_squares(mech, geometry, observations, initial, options)
        trace = []
    else:
        res, trace = _run_quasi_newton(
            mech, geometry, observations, initial, options
        )
    theta = initial.with_free_values(res.x)
    converged = bool(res.success)
    message = res.message if isinstance(res.message, str) else str(res.message)
    if not converged and len(trace) >= 3:
        tail = trace[-3:]
        floor = abs(tail[0] - tail[-1]) <= 1e3 * options.objective_rel_tol * max(
            abs(tail[-1]), 1.0
        )
        if floor:
            # finite-difference gradients cannot certify the gradient
            # tolerance at the numerical floor; a flat accepted-J tail is the
            # practical version of the relative-change criterion
            converged = True
            message = "objective change at numerical floor; " + message
    if res.nit >= options.max_iterations and not res.success:
        converged = False
        message = f"iteration cap reached ({options.max_iterations}); " + message

    if options.hessian_mode == "finite-difference":
        hess = hessian(
            mech, geometry, observations, theta,
            step=options.hessian_step, options=options.solver,
        )
    else:
        hess = gauss_newton_hessian(
            mech, geometry, observations, theta,
            step=options.sensitivity_step, options=options.solver,
        )
    cov, std, ci = covariance_and_ci(hess)
    names = theta.free_names
    return FitResult(
        params=theta,
        objective=float(res.fun),
        hessian=hess,
        covariance=cov,
        std_errors=dict(zip(names, std)),
        ci95=dict(zip(names, ci)),
        converged=converged,
        n_iterations=int(res.nit),
        trace=trace,
        message=message,
    )
