"""Run configuration: a sectioned key-value file mapped onto the library types.

A config names the mechanism file(s), geometry and solver overrides, the
initial experiment, the noise model, optimizer settings, the candidate-design
grid, and workflow/study knobs.  Relative mechanism paths resolve against the
config file's directory first, then against the bundled fixtures.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .estimation import FitOptions
from .mechanism import Mechanism, load_mechanism, parse_mechanism
from .noise import NoiseModel
from .params import ParameterSet, parameter_set_for
from .precision import DesignSpace
from .reactor import ExperimentDesign, GasPulse, ReactorGeometry, SolverOptions


class ConfigError(ValueError):
    """Bad or missing configuration content (exit code 2 at the CLI)."""


DEFAULT_FREE = ("dG0", "dG1", "Ga1", "dG2", "Ga3", "Ga4", "Ga5")


@dataclass
class RunConfig:
    path: Path
    mechanisms: list  # [(label, Mechanism)]
    truth_label: str
    geometry: ReactorGeometry
    solver: SolverOptions
    initial_design: ExperimentDesign
    noise: NoiseModel
    fit_options: FitOptions
    space: DesignSpace
    study_space: DesignSpace
    free_names: tuple[str, ...]
    initial_dg: float
    initial_ga: float
    criterion: str
    subset: tuple[str, ...]
    max_rounds: int
    min_improvement_factor: float
    perturb_sigma: float
    refit: bool
    bic_form: str
    bic_gap_threshold: float
    seed: int
    workers: int

    @property
    def mechanism(self) -> Mechanism:
        return self.mechanisms[0][1]

    def truth_mechanism(self) -> Mechanism:
        for label, mech in self.mechanisms:
            if label == self.truth_label:
                return mech
        raise ConfigError(f"truth mechanism {self.truth_label!r} not configured")

    def free_parameters(self, mech: Mechanism | None = None) -> ParameterSet:
        mech = mech or self.mechanism
        try:
            return parameter_set_for(mech, free=self.free_names)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _floats(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw.split())
    except ValueError:
        raise ConfigError(f"expected numbers, got {raw!r}") from None


def _resolve_mechanism(token: str, base: Path) -> tuple[str, Mechanism]:
    candidates = [Path(token), base / token]
    for p in candidates:
        if p.is_file():
            return p.stem, load_mechanism(p)
    bundled = resources.files("tapdoe.fixtures").joinpath(token)
    try:
        text = bundled.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        raise ConfigError(f"mechanism file not found: {token}") from None
    return Path(token).stem, parse_mechanism(text, name=Path(token).stem)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    """Read and validate a run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(path.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        return default

    base = path.parent

    mech_tokens = (get("mechanism", "candidates") or get("mechanism", "file") or "").split()
    if not mech_tokens:
        raise ConfigError(f"{path}: [mechanism] needs 'file' or 'candidates'")
    mechanisms = [_resolve_mechanism(tok, base) for tok in mech_tokens]
    labels = [label for label, _ in mechanisms]
    if len(set(labels)) != len(labels):
        raise ConfigError("mechanism labels must be unique")
    truth_label = get("mechanism", "truth", labels[0])
    truth_token = truth_label
    if truth_token not in labels:
        # allow a filename here too
        stem = Path(truth_token).stem
        if stem in labels:
            truth_label = stem
        else:
            label, mech = _resolve_mechanism(truth_token, base)
            mechanisms.append((label, mech))
            truth_label = label

    geometry = ReactorGeometry(
        zone_lengths=tuple(
            _floats(get("geometry", "zone_lengths", "0.019 0.002 0.019"))
        ),
        zone_void_fractions=tuple(
            _floats(get("geometry", "zone_void_fractions", "0.4 0.4 0.4"))
        ),
        cross_section_area=float(get("geometry", "cross_section_area", "1.14e-4")),
        reference_diffusivity=float(
            get("geometry", "reference_diffusivity", "0.002")
        ),
        reference_mass=float(get("geometry", "reference_mass", "40")),
        reference_temperature=float(
            get("geometry", "reference_temperature", "700")
        ),
    )
    solver = SolverOptions(
        nodes=int(get("simulation", "nodes", "120")),
        dt=float(get("simulation", "dt", "0.001")),
        pulse_width=float(get("simulation", "pulse_width", "0.001")),
    )
    horizon = float(get("simulation", "horizon", "2.5"))

    pulse_gases = tuple((get("design", "pulse_gases", "C3H8 O2")).split())
    intensities = _floats(get("design", "intensities", "1.0 1.0"))
    delays = _floats(get("design", "delays", "0.0 0.0"))
    if not (len(pulse_gases) == len(intensities) == len(delays)):
        raise ConfigError("[design] lists must share one entry per pulsed gas")
    initial_design = ExperimentDesign(
        pulses=tuple(
            GasPulse(gas=g, intensity=i, delay=d)
            for g, i, d in zip(pulse_gases, intensities, delays)
        ),
        temperature=float(get("design", "temperature", "700")),
        horizon=horizon,
    )

    seed = int(get("noise", "seed", "0"))
    if seed_override is not None:
        seed = seed_override
    noise = NoiseModel(
        sigma=float(get("noise", "sigma", "0.01")),
        kind=get("noise", "kind", "fraction_of_peak"),
        seed=seed,
        relative_floor=float(get("noise", "relative_floor", "1e-3")),
    )

    fit_options = FitOptions(
        method=get("optimizer", "method", "quasi-newton"),
        max_iterations=int(get("optimizer", "max_iterations", "300")),
        gradient_tol=float(get("optimizer", "gradient_tol", "1e-6")),
        objective_rel_tol=float(get("optimizer", "objective_rel_tol", "1e-10")),
        hessian_mode=get("optimizer", "hessian_mode", "gauss-newton"),
        solver=solver,
    )

    def space_from(section, default_delayed="C3H8"):
        gases = tuple((get(section, "pulse_gases", "C3H8 O2")).split())
        raw_levels = get(section, "intensity_levels", "0.5 1 2 ; 0.5 1 2")
        level_groups = [
            _floats(chunk) for chunk in raw_levels.split(";") if chunk.strip()
        ]
        if len(level_groups) == 1 and len(gases) > 1:
            level_groups = level_groups * len(gases)
        if len(level_groups) != len(gases):
            raise ConfigError(f"[{section}] intensity_levels must match gases")
        return DesignSpace(
            pulse_gases=gases,
            intensity_levels=tuple(tuple(g) for g in level_groups),
            delayed_gas=get(section, "delayed_gas", default_delayed),
            delay_levels=_floats(get(section, "delays", "0 0.15 0.3 0.45 0.6")),
            temperatures=_floats(get(section, "temperatures", "600 650 700 750")),
            horizon=horizon,
        )

    try:
        space = space_from("design_space")
        gases = tuple((get("study", "pulse_gases",
                           get("design_space", "pulse_gases", "C3H8 O2"))).split())
        raw_levels = get("study", "intensity_levels", "0.5 2 ; 0.5 2")
        level_groups = [
            tuple(_floats(chunk)) for chunk in raw_levels.split(";") if chunk.strip()
        ]
        if len(level_groups) == 1 and len(gases) > 1:
            level_groups = level_groups * len(gases)
        study_space = DesignSpace(
            pulse_gases=gases,
            intensity_levels=tuple(level_groups),
            delayed_gas=get("study", "delayed_gas", "C3H8"),
            delay_levels=_floats(get("study", "delays", "0 0.6")),
            temperatures=_floats(get("study", "temperatures", "650 750")),
            horizon=horizon,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    free_names = tuple((get("mechanism", "free", " ".join(DEFAULT_FREE))).split())
    subset = tuple((get("workflow", "subset", "") or "").split())

    return RunConfig(
        path=path,
        mechanisms=mechanisms,
        truth_label=truth_label,
        geometry=geometry,
        solver=solver,
        initial_design=initial_design,
        noise=noise,
        fit_options=fit_options,
        space=space,
        study_space=study_space,
        free_names=free_names,
        initial_dg=float(get("mechanism", "initial_dg", "-0.3")),
        initial_ga=float(get("mechanism", "initial_ga", "1.5")),
        criterion=get("workflow", "criterion", "D"),
        subset=subset,
        max_rounds=int(get("workflow", "max_rounds", "2")),
        min_improvement_factor=float(
            get("workflow", "min_improvement_factor", "10")
        ),
        perturb_sigma=float(get("workflow", "perturb_sigma", "0.05")),
        refit=(get("workflow", "refit", "false").lower() in ("1", "true", "yes")),
        bic_form=get("workflow", "bic_form", "gaussian"),
        bic_gap_threshold=float(get("workflow", "bic_gap_threshold", "10")),
        seed=seed,
        workers=int(get("workflow", "workers", "1")),
    )
