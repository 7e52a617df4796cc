"""Kinetic parameter sets: named per-step energy overrides with bounds.

Every entry targets one step's reaction free energy (``dG<i>``) or activation
free energy (``Ga<i>``).  Free entries are the optimization variables; fixed
entries pin the remaining energies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mechanism import Mechanism

DELTA_G = "delta_g"
G_ACTIVATION = "g_activation"

# invented guard rails for line searches; wide enough for every fixture value
DEFAULT_DG_BOUNDS = (-2.0, 1.0)
DEFAULT_GA_BOUNDS = (0.0, 3.0)


@dataclass(frozen=True)
class ParameterEntry:
    name: str
    value: float  # eV
    free: bool
    bounds: tuple[float, float]
    step_index: int
    target: str  # DELTA_G or G_ACTIVATION


@dataclass(frozen=True)
class ParameterSet:
    entries: tuple[ParameterEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        for e in self.entries:
            if e.target not in (DELTA_G, G_ACTIVATION):
                raise ValueError(f"{e.name}: unknown target {e.target!r}")
            lo, hi = e.bounds
            if e.free and not (lo <= e.value <= hi):
                raise ValueError(
                    f"{e.name}: free value {e.value} outside bounds {e.bounds}"
                )

    # -- vector view over the free entries --------------------------------
    @property
    def free_entries(self) -> tuple[ParameterEntry, ...]:
        return tuple(e for e in self.entries if e.free)

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.free_entries)

    @property
    def free_values(self) -> np.ndarray:
        return np.array([e.value for e in self.free_entries])

    @property
    def free_bounds(self) -> list[tuple[float, float]]:
        return [e.bounds for e in self.free_entries]

    def with_free_values(self, values) -> "ParameterSet":
        values = np.asarray(values, float)
        if values.shape != (len(self.free_entries),):
            raise ValueError("value vector length mismatch")
        it = iter(values)
        entries = tuple(
            replace(e, value=float(next(it))) if e.free else e
            for e in self.entries
        )
        return ParameterSet(entries)

    def with_values(self, mapping: dict) -> "ParameterSet":
        entries = tuple(
            replace(e, value=float(mapping[e.name])) if e.name in mapping else e
            for e in self.entries
        )
        return ParameterSet(entries)

    def value_of(self, name: str) -> float:
        for e in self.entries:
            if e.name == name:
                return e.value
        raise KeyError(name)

    def subset_indices(self, names) -> list[int]:
        """Positions of ``names`` within the free-parameter vector."""
        free = list(self.free_names)
        return [free.index(n) for n in names]

    # -- application to a mechanism ----------------------------------------
    def validate_against(self, mech: Mechanism) -> None:
        n = len(mech.steps)
        for e in self.entries:
            if not (0 <= e.step_index < n):
                raise ValueError(
                    f"{e.name}: step index {e.step_index} outside mechanism "
                    f"({n} steps)"
                )

    def energies(self, mech: Mechanism) -> tuple[np.ndarray, np.ndarray]:
        """Per-step (delta_g, g_activation) with every entry applied."""
        self.validate_against(mech)
        dg = np.array([s.delta_g for s in mech.steps])
        ga = np.array([s.g_activation for s in mech.steps])
        for e in self.entries:
            if e.target == DELTA_G:
                dg[e.step_index] = e.value
            else:
                ga[e.step_index] = e.value
        return dg, ga

    def applied_to(self, mech: Mechanism) -> Mechanism:
        dg, ga = self.energies(mech)
        return mech.with_energies(dg, ga)


def parameter_set_for(
    mech: Mechanism,
    free: tuple[str, ...] = (),
    dg_bounds: tuple[float, float] = DEFAULT_DG_BOUNDS,
    ga_bounds: tuple[float, float] = DEFAULT_GA_BOUNDS,
) -> ParameterSet:
    """One entry per step energy, named dG<i>/Ga<i>, values from the mechanism.

    ``free`` lists the entry names to mark as optimization variables.
    """
    free_set = set(free)
    entries = []
    for i, step in enumerate(mech.steps):
        entries.append(
            ParameterEntry(
                name=f"dG{i}",
                value=step.delta_g,
                free=f"dG{i}" in free_set,
                bounds=dg_bounds,
                step_index=i,
                target=DELTA_G,
            )
        )
        entries.append(
            ParameterEntry(
                name=f"Ga{i}",
                value=step.g_activation,
                free=f"Ga{i}" in free_set,
                bounds=ga_bounds,
                step_index=i,
                target=G_ACTIVATION,
            )
        )
    unknown = free_set - {e.name for e in entries}
    if unknown:
        raise ValueError(f"free parameter(s) not in mechanism: {sorted(unknown)}")
    return ParameterSet(tuple(entries))


def with_initial_guesses(
    params: ParameterSet, dg_guess: float = -0.3, ga_guess: float = 1.5
) -> ParameterSet:
    """Free entries moved to flat starting guesses; fixed entries untouched."""
    entries = tuple(
        replace(e, value=dg_guess if e.target == DELTA_G else ga_guess)
        if e.free
        else e
        for e in params.entries
    )
    return ParameterSet(entries)
