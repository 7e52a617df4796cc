"""tapdoe: pulse-response (TAP) reactor simulation, kinetic parameter
estimation with uncertainty quantification, and model-based design of
experiments for parameter precision and mechanism discrimination."""

from importlib import resources

from .constants import KB_EV, KB_OVER_H
from .mechanism import (
    CompiledKinetics,
    Mechanism,
    MechanismError,
    ReactionStep,
    Species,
    StoichiometryMatrix,
    check_elemental_balance,
    formula_composition,
    load_mechanism,
    parse_mechanism,
    rate_constants,
    reaction_rates,
    serialize_mechanism,
    stoichiometry_matrix,
)
from .divergence import (
    CandidateModel,
    DivergenceEvaluation,
    bic,
    discriminate,
    divergence_from_fluxes,
    divergence_search,
    divergence_study,
    hr_divergence,
)
from .estimation import (
    FitOptions,
    FitResult,
    Observation,
    covariance_and_ci,
    fit,
    gauss_newton_hessian,
    hessian,
    objective,
    sensitivity_screen,
    synthetic_observation,
)
from .noise import NoiseModel, add_noise, perturb_parameters
from .params import ParameterSet, parameter_set_for, with_initial_guesses
from .precision import (
    DesignSpace,
    FisherEvaluation,
    criterion,
    design_search,
    dynamic_sensitivity,
    fisher_information,
    predicted_vs_actual_study,
)
from .reactor import (
    ExperimentDesign,
    FluxSeries,
    GasPulse,
    ReactorGeometry,
    SimulationResult,
    SolverError,
    SolverOptions,
    StateField,
    design,
    dimensionless_peak_time,
    inert_reference_curve,
    knudsen_diffusivity,
    outlet_flux,
    outlet_flux_profile,
    simulate,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def fixture_path(name: str):
    """Filesystem path of a bundled fixture (e.g. ``mechanism1.mech``)."""
    return resources.files("tapdoe.fixtures").joinpath(name)


def load_fixture_mechanism(number: int) -> Mechanism:
    from .mechanism import parse_mechanism as _parse

    path = fixture_path(f"mechanism{number}.mech")
    return _parse(path.read_text(encoding="utf-8"), name=f"mechanism{number}")
