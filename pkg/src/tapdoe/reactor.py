"""Pulse-response reactor solver.

Solves the three-zone transport/reaction system

    eps * dc/dt = D * d2c/dx2 + M_gas * r      (reaction in the catalyst zone)
    du/dt       = M_surf * r                   (catalyst zone only)

for nanomole inlet pulses under Knudsen transport, and reports the outlet
flux of every gas.  Time stepping is first-order implicit: a precomputed
dense diffusion propagator per gas, then a damped-Newton solve of the
mass-action reaction system at each catalyst node.

Mole bookkeeping: the outlet flux is eps_exit * A * D * (-dc/dx) at the exit
face, so the inlet source injects intensity/eps_exit as a concentration
source and every physical inventory (surface hold-up, in-system gas) carries
the same eps_exit factor.  With that convention the discrete scheme conserves
mass to solver tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .constants import NMOL
from .mechanism import CompiledKinetics, Mechanism
from .params import ParameterSet


class SolverError(RuntimeError):
    """Numerical failure inside the reactor solver."""


class SeriesConvergenceError(RuntimeError):
    """The analytic flux series did not converge within the term cap."""


@dataclass(frozen=True)
class ReactorGeometry:
    """Three-zone (inert / catalyst / inert) packed-bed geometry.

    Defaults describe a 4 cm bed with a thin catalyst zone; the reference
    diffusivity anchors the Knudsen mass/temperature scaling.
    """

    zone_lengths: tuple[float, float, float] = (0.019, 0.002, 0.019)
    zone_void_fractions: tuple[float, float, float] = (0.4, 0.4, 0.4)
    cross_section_area: float = 1.14e-4  # m2
    reference_diffusivity: float = 0.002  # m2/s
    reference_mass: float = 40.0  # amu
    reference_temperature: float = 700.0  # K

    def __post_init__(self):
        if any(l <= 0 for l in self.zone_lengths):
            raise ValueError("zone lengths must be positive")
        if any(not 0 < e < 1 for e in self.zone_void_fractions):
            raise ValueError("void fractions must lie in (0, 1)")
        if self.cross_section_area <= 0:
            raise ValueError("cross-section area must be positive")
        if self.reference_diffusivity <= 0 or self.reference_mass <= 0:
            raise ValueError("reference diffusivity/mass must be positive")
        if self.reference_temperature <= 0:
            raise ValueError("reference temperature must be positive")

    @property
    def length(self) -> float:
        return float(sum(self.zone_lengths))

    @property
    def exit_void_fraction(self) -> float:
        return self.zone_void_fractions[-1]

    def uniform(self) -> bool:
        e = self.zone_void_fractions
        return e[0] == e[1] == e[2]


@dataclass(frozen=True)
class GasPulse:
    gas: str
    intensity: float  # nmol
    delay: float = 0.0  # s


@dataclass(frozen=True)
class ExperimentDesign:
    """The designable knobs of one pulse experiment."""

    pulses: tuple[GasPulse, ...]
    temperature: float  # K
    horizon: float = 2.5  # s

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        seen = set()
        for p in self.pulses:
            if p.gas in seen:
                raise ValueError(f"duplicate pulse for gas {p.gas}")
            seen.add(p.gas)
            if p.intensity < 0:
                raise ValueError(f"{p.gas}: pulse intensity must be >= 0")
            if not 0 <= p.delay < self.horizon:
                raise ValueError(f"{p.gas}: delay must be in [0, horizon)")

    def intensity(self, gas: str) -> float:
        for p in self.pulses:
            if p.gas == gas:
                return p.intensity
        return 0.0

    def delay(self, gas: str) -> float:
        for p in self.pulses:
            if p.gas == gas:
                return p.delay
        return 0.0


def design(temperature: float, horizon: float = 2.5, **pulses) -> ExperimentDesign:
    """Shorthand: ``design(700, C3H8=(1.0, 0.0), O2=1.0)``."""
    plist = []
    for gas, spec in pulses.items():
        if isinstance(spec, (tuple, list)):
            intensity, delay = spec
        else:
            intensity, delay = spec, 0.0
        plist.append(GasPulse(gas=gas, intensity=float(intensity), delay=float(delay)))
    return ExperimentDesign(pulses=tuple(plist), temperature=temperature, horizon=horizon)


@dataclass(frozen=True)
class SolverOptions:
    nodes: int = 120
    dt: float = 1e-3  # s
    pulse_width: float = 1e-3  # s, Gaussian sigma of the inlet pulse
    newton_ftol: float = 1e-11
    max_newton: int = 40
    max_halvings: int = 10
    negativity_tol: float = 1e-12  # mol/m3 (widened by solve roundoff scale)


class FluxSeries:
    """Outlet flux (nmol/s) of each gas on a shared uniform time grid."""

    def __init__(self, times: np.ndarray, fluxes: dict):
        times = np.asarray(times, float)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("time grid needs at least two points")
        dt = np.diff(times)
        if not (dt > 0).all():
            raise ValueError("time grid must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be uniform")
        self.times = times
        self.fluxes = {g: np.asarray(f, float) for g, f in fluxes.items()}
        for g, f in self.fluxes.items():
            if f.shape != times.shape:
                raise ValueError(f"{g}: flux length does not match time grid")
            if not np.isfinite(f).all():
                raise ValueError(f"{g}: non-finite flux values")

    @property
    def gases(self) -> tuple[str, ...]:
        return tuple(self.fluxes)

    def __getitem__(self, gas: str) -> np.ndarray:
        return self.fluxes[gas]

    def integral(self, gas: str) -> float:
        """Outlet amount in nmol (trapezoid, with the implicit f(0)=0 edge)."""
        t, f = self.times, self.fluxes[gas]
        inner = float(np.trapezoid(f, t))
        return inner + 0.5 * f[0] * t[0]

    def peak(self, gas: str) -> float:
        return float(np.max(self.fluxes[gas]))

    def matrix(self) -> np.ndarray:
        """(n_times, n_gases) array in gas declaration order."""
        return np.column_stack([self.fluxes[g] for g in self.fluxes])


@dataclass
class StateField:
    """Spatial concentration fields at one instant."""

    x: np.ndarray  # node centers, m
    gas: dict  # gas -> c(x), mol/m3 over the whole bed
    surface: dict  # surface species -> u(x), mol/m3 of bed, catalyst nodes
    catalyst_nodes: np.ndarray  # indices of catalyst-zone nodes


@dataclass
class SimulationResult:
    flux: FluxSeries
    state: StateField
    max_site_imbalance: float  # max relative site-total deviation seen
    geometry: ReactorGeometry
    options: SolverOptions
    injected: dict = field(default_factory=dict)  # gas -> nmol actually injected
    fallback_steps: int = 0  # linearized-fallback uses (0 in normal operation)

    def surface_inventory(self) -> dict:
        """Physical moles of each surface species held at the horizon."""
        geom, opts = self.geometry, self.options
        dx = geom.length / opts.nodes
        scale = geom.exit_void_fraction * geom.cross_section_area * dx
        return {
            name: float(scale * u.sum()) for name, u in self.state.surface.items()
        }

    def gas_inventory(self) -> dict:
        """Physical moles of each gas still inside the bed at the horizon."""
        geom, opts = self.geometry, self.options
        dx = geom.length / opts.nodes
        eps = _node_void_fractions(geom, opts.nodes)
        scale = geom.exit_void_fraction * geom.cross_section_area * dx
        return {
            name: float(scale * (eps * c).sum())
            for name, c in self.state.gas.items()
        }


def knudsen_diffusivity(
    molar_mass: float, temperature: float, geometry: ReactorGeometry
) -> float:
    """Knudsen diffusivity from the reference point: D_ref*sqrt((m_ref/m)(T/T_ref))."""
    if molar_mass <= 0:
        raise ValueError("molar mass must be positive")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return geometry.reference_diffusivity * math.sqrt(
        (geometry.reference_mass / molar_mass)
        * (temperature / geometry.reference_temperature)
    )


def outlet_flux(
    conc_at_last_node: float,
    diffusivity: float,
    geometry: ReactorGeometry,
    dx: float,
) -> float:
    """Fick's-law exit flux in nmol/s from the last node value (exit face at c=0)."""
    grad = 2.0 * conc_at_last_node / dx  # -dc/dx against the c=0 face
    return (
        diffusivity
        * geometry.exit_void_fraction
        * geometry.cross_section_area
        * grad
        / NMOL
    )


def outlet_flux_profile(
    conc_profile, diffusivity: float, geometry: ReactorGeometry
) -> float:
    """Exit flux (nmol/s) from the gradient of a concentration profile.

    Uses the one-sided difference over the last two nodes, so a uniform
    profile gives zero and a linear profile gives its exact slope.  The
    simulator's own outlet flux instead differences against the vacuum face
    value c(L) = 0, which is the same gradient in the continuum limit.
    """
    conc_profile = np.asarray(conc_profile, float)
    if len(conc_profile) < 2:
        raise ValueError("profile needs at least two nodes")
    dx = geometry.length / len(conc_profile)
    grad = (conc_profile[-1] - conc_profile[-2]) / dx
    return (
        diffusivity
        * geometry.exit_void_fraction
        * geometry.cross_section_area
        * (-grad)
        / NMOL
    )


# ---------------------------------------------------------------------------
# grid helpers and the cached diffusion propagator
# ---------------------------------------------------------------------------

def _node_centers(geometry: ReactorGeometry, nodes: int) -> np.ndarray:
    dx = geometry.length / nodes
    return (np.arange(nodes) + 0.5) * dx


def _node_zones(geometry: ReactorGeometry, nodes: int) -> np.ndarray:
    x = _node_centers(geometry, nodes)
    b1 = geometry.zone_lengths[0]
    b2 = b1 + geometry.zone_lengths[1]
    return np.where(x < b1, 0, np.where(x < b2, 1, 2))


def _node_void_fractions(geometry: ReactorGeometry, nodes: int) -> np.ndarray:
    return np.asarray(geometry.zone_void_fractions, float)[_node_zones(geometry, nodes)]


def _laplacian(nodes: int) -> np.ndarray:
    lap = np.zeros((nodes, nodes))
    idx = np.arange(nodes)
    lap[idx, idx] = -2.0
    lap[idx[:-1], idx[:-1] + 1] = 1.0
    lap[idx[1:], idx[1:] - 1] = 1.0
    lap[0, 0] = -1.0  # reflecting inlet face
    lap[-1, -1] = -3.0  # vacuum exit face (c=0 half-cell)
    return lap


@lru_cache(maxsize=32)
def _propagators(
    geometry: ReactorGeometry,
    masses: tuple,
    temperature: float,
    dt: float,
    nodes: int,
) -> np.ndarray:
    """Backward-Euler diffusion propagators, one dense (N,N) block per gas."""
    dx = geometry.length / nodes
    eps = _node_void_fractions(geometry, nodes)
    lap = _laplacian(nodes)
    eye = np.eye(nodes)
    out = np.empty((len(masses), nodes, nodes))
    for g, mass in enumerate(masses):
        d = knudsen_diffusivity(mass, temperature, geometry)
        a = (d / (eps * dx * dx))[:, None] * lap
        out[g] = np.linalg.inv(eye - dt * a)
    return out


def _pulse_deposits(
    design_: ExperimentDesign,
    gases,
    geometry: ReactorGeometry,
    options: SolverOptions,
    n_steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step injected concentration increments for the inlet node.

    Uses the exact Gaussian mass within each step so the injected total
    matches the pulse intensity regardless of dt vs pulse width.  Pulse
    centers sit at delay + 4 sigma so a zero-delay pulse loses <4e-5 of its
    mass to t<0.  Returns (deposits[n_gas, n_steps], injected_nmol[n_gas]).
    """
    dx = geometry.length / options.nodes
    eps0 = _node_void_fractions(geometry, options.nodes)[0]
    area = geometry.cross_section_area
    sigma = options.pulse_width
    edges = options.dt * np.arange(n_steps + 1)
    deposits = np.zeros((len(gases), n_steps))
    injected = np.zeros(len(gases))
    for g, gas in enumerate(gases):
        intensity = design_.intensity(gas) * NMOL  # mol
        if intensity == 0.0:
            continue
        center = design_.delay(gas) + 4.0 * sigma
        cdf = 0.5 * (1.0 + erf((edges - center) / (sigma * math.sqrt(2.0))))
        mass = intensity * np.diff(cdf)  # mol per step, exact
        injected[g] = mass.sum() / NMOL
        # physical mol -> concentration increment at the inlet node
        deposits[g] = mass / (geometry.exit_void_fraction * area * eps0 * dx)
    return deposits, injected


# ---------------------------------------------------------------------------
# reaction substep (implicit, batched over catalyst nodes)
# ---------------------------------------------------------------------------

class _ReactionSystem:
    """Implicit mass-action update restricted to species that react.

    Forward and reverse monomials share one exponent tensor so each Newton
    iteration costs a handful of broadcast operations over the (nodes,
    species, 2*steps) block.
    """

    def __init__(self, kin: CompiledKinetics, eps_cat: float, kf, kr):
        active = np.flatnonzero(kin.reactive)
        self.active = active
        self.gas_active = active[active < kin.n_gas]
        self.surf_active = active[active >= kin.n_gas] - kin.n_gas
        net_active = kin.net[active]  # (m, n_steps)
        # gas balances carry 1/eps inside the catalyst zone
        scale = np.ones(len(active))
        scale[: len(self.gas_active)] = 1.0 / eps_cat
        self.scale = scale
        # forward monomials first, then reverse; signs folded into netk
        self.expo = np.concatenate(
            [kin.nu_react[active], kin.nu_prod[active]], axis=1
        )  # (m, 2*steps)
        # exponent-1 with the zero-exponent entries clamped so y**e stays
        # finite at y=0; the expo factor zeroes those columns anyway
        self.expo_m1 = np.where(self.expo > 0, self.expo - 1.0, 0.0)
        # coefficients are small integers, so powers come from a cumulative
        # multiplication table indexed flat (table reshaped to (n, m*K))
        self._max_exp = int(max(self.expo.max(), 1.0))
        k_levels = self._max_exp + 1
        m = self.expo.shape[0]
        offsets = np.arange(m)[:, None] * k_levels
        self._flat_code = offsets + self.expo.astype(np.intp)
        self._flat_code_m1 = offsets + self.expo_m1.astype(np.intp)
        k_signed = np.concatenate([kf, -kr])
        self.netk = (
            np.concatenate([net_active, net_active], axis=1) * k_signed[None, :]
        ) * scale[:, None]  # (m, 2*steps), rows pre-scaled
        self.eye = np.eye(len(active))
        self.fallback_steps = 0
        self._carry_jac = None  # Jacobian carried across time steps
        self._carry_dt = None

    def _power_table(self, y):
        n, m = y.shape
        k_levels = self._max_exp + 1
        table = np.empty((n, m, k_levels))
        table[:, :, 0] = 1.0
        np.cumprod(
            np.broadcast_to(y[:, :, None], (n, m, k_levels - 1)),
            axis=2,
            out=table[:, :, 1:],
        )
        return table.reshape(n, m * k_levels)

    def _eval(self, y, with_grad=True):
        """Scaled net production g(y) and, optionally, its Jacobian."""
        table = self._power_table(y)
        base = table[:, self._flat_code]  # (n, m, 2s)
        if not with_grad:
            return base.prod(axis=1) @ self.netk.T, None
        left = np.empty_like(base)
        right = np.empty_like(base)
        left[:, 0] = 1.0
        right[:, -1] = 1.0
        if base.shape[1] > 1:
            np.cumprod(base[:, :-1], axis=1, out=left[:, 1:])
            np.cumprod(base[:, :0:-1], axis=1, out=right[:, -2::-1])
        g = (left[:, -1] * base[:, -1]) @ self.netk.T  # (n, m)
        dpow = self.expo[None] * table[:, self._flat_code_m1]
        dmono = left * right * dpow  # (n, m, 2s) = d mono_s / d y_m
        dg = np.matmul(self.netk, np.swapaxes(dmono, 1, 2))  # (n, m, m)
        return g, dg

    def step(
        self,
        y0: np.ndarray,
        dt: float,
        options: SolverOptions,
        depth=0,
        y_init=None,
    ):
        """Backward-Euler solve y = y0 + dt*g(y); halves dt on trouble.

        Newton with Jacobian reuse: the Jacobian is rebuilt only while the
        residual is contracting slowly.  Convergence accepts either a
        residual below ftol or stagnation at the floating-point floor of the
        rate evaluation (stiff near-equilibrated steps leave a residual
        ~ eps * dt * max(forward, reverse) that no iteration can remove).
        """
        y = y0.copy() if y_init is None else np.maximum(y_init, 0.0)
        yscale = max(1.0, float(np.abs(y0).max()))
        ftol = options.newton_ftol * yscale
        stall_tol = 1e-9 * yscale
        floor = -0.25 * yscale
        prev_norm = math.inf
        converged = False
        f_norm = math.inf

        # a Jacobian carried over from the previous time step is usually
        # still an excellent preconditioner; the slow-contraction logic
        # below rebuilds it whenever that stops being true
        if self._carry_jac is not None and self._carry_dt == dt:
            g, _ = self._eval(y, with_grad=False)
            jac = self._carry_jac
            fresh = False
        else:
            g, dg = self._eval(y, with_grad=True)
            jac = self.eye[None] - dt * dg
            fresh = True
        last_fresh = fresh  # freshness of the Jacobian behind the current y
        for it in range(options.max_newton):
            f = y - y0 - dt * g
            f_norm = float(np.abs(f).max())
            if not math.isfinite(f_norm):
                break
            if f_norm <= ftol:
                converged = True
                break
            if it >= 1 and f_norm >= 0.5 * prev_norm:
                if last_fresh:
                    # a fresh-Jacobian step brought no contraction: the
                    # residual sits at the rate evaluation's roundoff floor,
                    # or this dt is genuinely intractable
                    converged = f_norm <= stall_tol
                    break
                g, dg = self._eval(y, with_grad=True)
                jac = self.eye[None] - dt * dg
                fresh = True
            try:
                delta = np.linalg.solve(jac, -f[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                break
            # Newton on stiff mass action is legitimately non-monotone, so
            # trial steps only backtrack on explosive residual growth
            lam = 1.0
            accepted = False
            for _ in range(6 if fresh else 1):
                y_try = np.maximum(y + lam * delta, floor)
                g_try, _ = self._eval(y_try, with_grad=False)
                try_norm = float(np.abs(y_try - y0 - dt * g_try).max())
                if math.isfinite(try_norm) and try_norm <= 4.0 * f_norm:
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                if fresh:
                    converged = f_norm <= stall_tol
                    break
                g, dg = self._eval(y, with_grad=True)
                jac = self.eye[None] - dt * dg
                fresh = True
                continue
            prev_norm = f_norm
            y, g = y_try, g_try
            last_fresh = fresh
            if lam < 1.0 or try_norm > 0.3 * f_norm:
                g, dg = self._eval(y, with_grad=True)
                jac = self.eye[None] - dt * dg
                fresh = True
            else:
                fresh = False
        # a stiff linear solve cannot place tiny components more accurately
        # than roundoff times the state scale, so the clamp widens with it
        clamp = max(options.negativity_tol, 1e-8 * yscale)
        if converged and not (y < -clamp).any():
            self._carry_jac, self._carry_dt = jac, dt
            return np.maximum(y, 0.0)
        self._carry_jac = self._carry_dt = None
        if depth >= options.max_halvings:
            return self._fallback(y0, dt, options)
        half = self.step(y0, dt / 2.0, options, depth + 1)
        return self.step(half, dt / 2.0, options, depth + 1)

    def _fallback(self, y0, dt, options):
        """Linearly implicit Euler substeps for corners Newton cannot crack.

        One factorized step per substep, clamped non-negative: always makes
        progress, stays first-order, and only runs after the halving budget
        is spent (counted in ``fallback_steps`` for diagnostics).
        """
        self.fallback_steps += 1
        y = y0.copy()
        sub = dt / 4.0
        for _ in range(4):
            g, dg = self._eval(y, with_grad=True)
            jac = self.eye[None] - sub * dg
            try:
                delta = np.linalg.solve(jac, sub * g[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError:
                raise SolverError(
                    "reaction update singular even in the linearized fallback"
                ) from None
            y = np.maximum(y + delta, 0.0)
            if not np.isfinite(y).all():
                raise SolverError("non-finite state in the linearized fallback")
        return y


# ---------------------------------------------------------------------------
# the simulator
# ---------------------------------------------------------------------------

def simulate(
    mech: Mechanism,
    geometry: ReactorGeometry,
    design_: ExperimentDesign,
    params: ParameterSet | None = None,
    options: SolverOptions | None = None,
) -> SimulationResult:
    """Run one pulse experiment and return outlet fluxes plus the final state."""
    options = options or SolverOptions()
    kin = CompiledKinetics(mech)
    for gas in design_.pulses:
        if gas.gas not in kin.gas_names:
            raise ValueError(f"pulsed gas {gas.gas!r} not in mechanism")

    dg = ga = None
    if params is not None:
        dg, ga = params.energies(mech)
    kf, kr = kin.rate_coefficients(design_.temperature, dg, ga)

    n_steps = int(round(design_.horizon / options.dt))
    nodes = options.nodes
    masses = tuple(s.molar_mass for s in mech.gases)
    props = _propagators(
        geometry, masses, float(design_.temperature), options.dt, nodes
    )
    deposits, injected = _pulse_deposits(
        design_, kin.gas_names, geometry, options, n_steps
    )

    zones = _node_zones(geometry, nodes)
    cat_nodes = np.flatnonzero(zones == 1)
    if len(mech.steps) > 0 and len(cat_nodes) == 0:
        raise ValueError(
            "grid too coarse: no node centers fall inside the catalyst zone"
        )
    eps_cat = geometry.zone_void_fractions[1]
    system = _ReactionSystem(kin, eps_cat, kf, kr)

    dx = geometry.length / nodes
    c = np.zeros((kin.n_gas, nodes))
    u = np.zeros((kin.n_surf, len(cat_nodes)))
    # free sites start at their declared concentration, adsorbates at zero
    for i, name in enumerate(kin.surface_names):
        conc0 = kin.site_concentrations.get(name)
        if conc0 is not None:
            u[i, :] = conc0

    site_totals0 = {
        st: w @ u for st, w in kin.site_weights.items() if (w @ u).max() > 0
    }
    max_imbalance = 0.0

    diffusivities = np.array(
        [knudsen_diffusivity(m, design_.temperature, geometry) for m in masses]
    )
    flux_coef = (
        diffusivities
        * geometry.exit_void_fraction
        * geometry.cross_section_area
        * 2.0
        / (dx * NMOL)
    )

    n_gas_active = len(system.gas_active)
    flux = np.zeros((kin.n_gas, n_steps))
    any_reaction = len(mech.steps) > 0 and len(cat_nodes) > 0
    gas_cat = np.ix_(system.gas_active, cat_nodes)
    correction = None  # previous step's reaction update, reused as predictor

    for k in range(n_steps):
        c[:, 0] += deposits[:, k]
        c = np.matmul(props, c[:, :, None])[:, :, 0]
        if any_reaction:
            y0 = np.concatenate(
                [c[gas_cat].T, u[system.surf_active].T], axis=1
            )
            y_init = None if correction is None else y0 + correction
            try:
                y = system.step(y0, options.dt, options, y_init=y_init)
            except SolverError as exc:
                raise SolverError(
                    f"{exc} at step {k + 1} (t = {(k + 1) * options.dt:.4g} s)"
                ) from None
            correction = y - y0
            c[gas_cat] = y[:, :n_gas_active].T
            u[system.surf_active] = y[:, n_gas_active:].T
            for st, tot0 in site_totals0.items():
                tot = kin.site_weights[st] @ u
                dev = float(np.abs(tot / tot0 - 1.0).max())
                if dev > max_imbalance:
                    max_imbalance = dev
        flux[:, k] = flux_coef * c[:, -1]

    times = options.dt * np.arange(1, n_steps + 1)
    flux_series = FluxSeries(
        times, {g: flux[i] for i, g in enumerate(kin.gas_names)}
    )
    state = StateField(
        x=_node_centers(geometry, nodes),
        gas={g: c[i].copy() for i, g in enumerate(kin.gas_names)},
        surface={s: u[i].copy() for i, s in enumerate(kin.surface_names)},
        catalyst_nodes=cat_nodes,
    )
    return SimulationResult(
        flux=flux_series,
        state=state,
        max_site_imbalance=max_imbalance,
        geometry=geometry,
        options=options,
        injected={g: float(injected[i]) for i, g in enumerate(kin.gas_names)},
        fallback_steps=system.fallback_steps,
    )


# ---------------------------------------------------------------------------
# analytic transport oracle
# ---------------------------------------------------------------------------

def inert_reference_curve(
    geometry: ReactorGeometry,
    diffusivity: float,
    pulse: float,
    times,
    time_origin: float = 0.0,
    max_terms: int = 200,
    rtol: float = 1e-10,
) -> np.ndarray:
    """Analytic outlet flux (nmol/s) for transport-only single-zone pulses.

    Eigenfunction series for diffusion with a reflecting inlet, a vacuum
    outlet, and an impulse injected at the inlet face at ``time_origin``:

        f(t) = (2 I D / (eps L)) * sum_n (-1)^n lam_n exp(-lam_n^2 D tau / eps)

    with lam_n = (n + 1/2) pi / L and tau = t - time_origin.  The series is
    truncated once terms fall below ``rtol`` of the running value; needing
    more than ``max_terms`` raises :class:`SeriesConvergenceError`.
    """
    if not geometry.uniform():
        raise ValueError("inert reference curve needs a uniform void fraction")
    if diffusivity <= 0:
        raise ValueError("diffusivity must be positive")
    times = np.asarray(times, float)
    eps = geometry.zone_void_fractions[0]
    length = geometry.length
    tau = times - time_origin
    out = np.zeros_like(tau)
    mask = tau > 0
    if not mask.any():
        return out
    t = tau[mask]
    lam = (np.arange(max_terms) + 0.5) * math.pi / length
    decay = lam**2 * diffusivity / eps
    # terms[n, t]; alternating series
    acc = np.zeros_like(t)
    converged = np.zeros_like(t, dtype=bool)
    for n in range(max_terms):
        term = ((-1.0) ** n) * lam[n] * np.exp(-decay[n] * t)
        acc = acc + term
        scale = np.maximum(np.abs(acc), lam[0])
        converged |= np.abs(term) <= rtol * scale
        if converged.all() and n >= 2:
            break
    else:
        worst = t[~converged].min()
        raise SeriesConvergenceError(
            f"flux series needs more than {max_terms} terms at t={worst:g}s"
        )
    out[mask] = (2.0 * pulse * diffusivity / (eps * length)) * acc
    return out


def dimensionless_peak_time(max_terms: int = 200) -> float:
    """Peak time of the reference curve in units of eps*L^2/D (close to 1/6).

    Locates the maximum of the truncated dimensionless series
    sum_n (-1)^n lam_n exp(-lam_n^2 tau), lam_n = (n + 1/2) pi, numerically.
    """
    lam = (np.arange(max_terms) + 0.5) * math.pi
    signs = (-1.0) ** np.arange(max_terms)

    def series(tau):
        return (signs * lam) @ np.exp(-np.outer(lam**2, tau))

    coarse = np.linspace(1e-3, 1.0, 2001)
    t0 = coarse[np.argmax(series(coarse))]
    fine = np.linspace(t0 - 0.02, t0 + 0.02, 8001)
    return float(fine[np.argmax(series(fine))])
