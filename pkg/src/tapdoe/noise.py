"""Synthetic measurement noise and ground-truth parameter perturbations.

All randomness flows through numpy's PCG64 generator seeded explicitly, so
runs are reproducible across platforms.  Per-gas streams are derived from the
experiment seed and a CRC32 of the gas name, so adding a gas to a mechanism
never reshuffles the noise drawn for the others.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace

import numpy as np

from .params import ParameterSet
from .reactor import FluxSeries

ABSOLUTE = "absolute"
FRACTION_OF_PEAK = "fraction_of_peak"


@dataclass(frozen=True)
class NoiseModel:
    """Homoscedastic Gaussian noise on each outlet-flux channel.

    ``sigma`` is either an absolute value in nmol/s (``kind="absolute"``) or a
    fraction of each gas's own noiseless peak (``kind="fraction_of_peak"``,
    the default at 0.01).  In fraction-of-peak mode, ``relative_floor`` keeps
    truly dark channels from getting a vanishing sigma: no gas's sigma falls
    below sigma * relative_floor * (brightest gas peak).  The default floor
    is far below any registering signal, so it only guards against division
    by zero for gases a design never produces.
    """

    sigma: float = 0.01
    kind: str = FRACTION_OF_PEAK
    seed: int = 0
    relative_floor: float = 1e-3

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind not in (ABSOLUTE, FRACTION_OF_PEAK):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.relative_floor <= 1:
            raise ValueError("relative_floor must be in [0, 1]")

    def resolve_sigmas(self, flux: FluxSeries) -> dict:
        """Absolute per-gas sigma (nmol/s) for a given noiseless trace."""
        if self.kind == ABSOLUTE:
            return {g: self.sigma for g in flux.gases}
        brightest = max((flux.peak(g) for g in flux.gases), default=0.0)
        floor = self.relative_floor * brightest
        return {g: self.sigma * max(flux.peak(g), floor) for g in flux.gases}


def _gas_rng(seed: int, gas: str) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, zlib.crc32(gas.encode())]))
    )


def add_noise(
    flux: FluxSeries, noise: NoiseModel, sigmas: dict | None = None
) -> FluxSeries:
    """Independent Gaussian noise per sample and gas; exact for sigma = 0.

    ``sigmas`` overrides the per-gas absolute levels (nmol/s); otherwise they
    resolve from the noise model against this trace's own peaks.
    """
    if sigmas is None:
        sigmas = noise.resolve_sigmas(flux)
    noisy = {}
    for g in flux.gases:
        clean = flux[g]
        s = sigmas[g]
        if s == 0.0:
            noisy[g] = clean.copy()
        else:
            rng = _gas_rng(noise.seed, g)
            noisy[g] = clean + rng.normal(0.0, s, size=clean.shape)
    return FluxSeries(flux.times.copy(), noisy)


def perturb_parameters(
    params: ParameterSet, sigma: float, seed: int
) -> ParameterSet:
    """Shift each free energy entry by iid Gaussian(0, sigma^2) eV.

    Fixed entries are untouched.  Draws are keyed by entry name, so the
    perturbation of one parameter does not depend on how many others exist.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return params
    entries = []
    for e in params.entries:
        if e.free:
            rng = _gas_rng(seed, e.name)
            shift = float(rng.normal(0.0, sigma))
            lo, hi = e.bounds
            entries.append(replace(e, value=float(np.clip(e.value + shift, lo, hi))))
        else:
            entries.append(e)
    return ParameterSet(tuple(entries))
