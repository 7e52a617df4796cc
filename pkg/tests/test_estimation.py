import numpy as np
import pytest

import tapdoe as td
from tapdoe import estimation as est
from tapdoe.noise import NoiseModel
from tapdoe.params import parameter_set_for
from tapdoe.reactor import FluxSeries


def series(values, gases=("A",)):
    values = np.atleast_2d(np.asarray(values, float))
    t = np.arange(1, values.shape[1] + 1, dtype=float)
    return FluxSeries(t, {g: values[i] for i, g in enumerate(gases)})


def manual_objective(sim, obs, sigmas):
    total = 0.0
    for g in sim.gases:
        total += 0.5 * float(
            (((sim[g] - obs[g]) / sigmas[g]) ** 2).sum()
        )
    return total


class TestObjective:
    def test_perfect_fit_is_exactly_zero(self, mech1, geometry, fast_solver):
        params = parameter_set_for(mech1, free=("dG0",))
        des = td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))
        clean = td.simulate(mech1, geometry, des, params, fast_solver).flux
        obs = est.Observation(
            design=des, flux=clean, sigmas={g: 1.0 for g in clean.gases}
        )
        j = est.objective(mech1, geometry, [obs], params, fast_solver)
        assert j == 0.0

    def test_single_residual_formula(self):
        sim = series([[2.0, 0.0]])
        obs = series([[0.0, 0.0]])
        assert manual_objective(sim, obs, {"A": 1.0}) == pytest.approx(2.0)

    def test_two_gas_weighting(self):
        sim = series([[1.0, 0.0], [2.0, 0.0]], gases=("A", "B"))
        obs = series([[0.0, 0.0], [0.0, 0.0]], gases=("A", "B"))
        j = manual_objective(sim, obs, {"A": 1.0, "B": 2.0})
        assert j == pytest.approx(1.0)

    def test_additivity_over_observations(
        self, mech1, geometry, fast_solver, exp1_design
    ):
        truth = parameter_set_for(mech1, free=("dG0", "Ga1"))
        noise = NoiseModel(sigma=0.01, seed=4)
        obs_a = est.synthetic_observation(
            mech1, geometry, exp1_design, truth, noise, fast_solver
        )
        des_b = td.design(650.0, C3H8=(2.0, 0.3), O2=(2.0, 0.0))
        obs_b = est.synthetic_observation(
            mech1, geometry, des_b, truth, NoiseModel(sigma=0.01, seed=5),
            fast_solver,
        )
        probe = truth.with_values({"dG0": -0.25})
        ja = est.objective(mech1, geometry, [obs_a], probe, fast_solver)
        jb = est.objective(mech1, geometry, [obs_b], probe, fast_solver)
        jab = est.objective(mech1, geometry, [obs_a, obs_b], probe, fast_solver)
        assert jab == ja + jb

    def test_gradient_richardson_consistency(
        self, mech1, geometry, fast_solver, exp1_design
    ):
        truth = parameter_set_for(mech1, free=("dG0", "Ga3"))
        noise = NoiseModel(sigma=0.01, seed=9)
        obs = est.synthetic_observation(
            mech1, geometry, exp1_design, truth, noise, fast_solver
        )
        probe = truth.with_values({"dG0": -0.27, "Ga3": 1.49})
        g_h = est.objective_gradient(
            mech1, geometry, [obs], probe, step=2e-3, options=fast_solver
        )
        g_h2 = est.objective_gradient(
            mech1, geometry, [obs], probe, step=1e-3, options=fast_solver
        )
        for name in ("dG0", "Ga3"):
            # central differences: halving the step shrinks the error ~4x,
            # so the two estimates must agree to O(h^2) of the larger step
            denom = max(abs(g_h2[name]), 1.0)
            assert abs(g_h[name] - g_h2[name]) / denom < 5e-3


class TestMinimizer:
    def test_quadratic_converges_to_minimum(self):
        theta_star = np.array([0.3, -0.7])

        def fun(x):
            d = x - theta_star
            return float(d @ d)

        # an analytic surrogate supports a much finer difference step than
        # the simulation-backed objective needs
        res, trace = est.minimize_objective(
            fun, np.zeros(2), [(-2.0, 2.0)] * 2,
            est.FitOptions(gradient_step=1e-9, objective_rel_tol=1e-14),
        )
        assert np.abs(res.x - theta_star).max() < 1e-8
        assert all(a >= b - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_start_at_truth_terminates_immediately(
        self, mech1, geometry, fast_solver, exp1_design
    ):
        truth = parameter_set_for(mech1, free=("dG0", "Ga1"))
        clean = td.simulate(
            mech1, geometry, exp1_design, truth, fast_solver
        ).flux
        obs = est.Observation(
            design=exp1_design, flux=clean,
            sigmas={g: max(clean.peak(g), 1e-6) * 0.01 for g in clean.gases},
        )
        r = est.fit(
            mech1, geometry, [obs], truth,
            est.FitOptions(solver=fast_solver),
        )
        assert r.objective <= 1e-12
        for name in ("dG0", "Ga1"):
            assert abs(r.params.value_of(name) - truth.value_of(name)) < 1e-6


class TestHessianTools:
    def test_scalar_quadratic(self):
        h = est.hessian_of(lambda x: float((x[0] - 1.0) ** 2), np.array([1.0]))
        assert h[0, 0] == pytest.approx(2.0, abs=1e-6)

    def test_diagonal_quadratic(self):
        def fun(x):
            return float(x[0] ** 2 + 4.0 * x[1] ** 2)

        h = est.hessian_of(fun, np.array([0.5, -0.3]))
        assert h == pytest.approx(np.diag([2.0, 8.0]), abs=1e-5)

    def test_covariance_and_ci_scalar(self):
        cov, std, ci = est.covariance_and_ci(np.array([[2.0]]))
        assert std[0] == pytest.approx(0.7071, abs=1e-4)
        assert ci[0] == pytest.approx(1.96 * std[0], rel=1e-12)

    def test_covariance_and_ci_diagonal(self):
        cov, std, ci = est.covariance_and_ci(np.diag([2.0, 8.0]))
        assert std == pytest.approx([0.70711, 0.35355], abs=1e-4)

    def test_not_at_minimum_rejected(self):
        with pytest.raises(ValueError, match="not at a minimum"):
            est.covariance_and_ci(np.diag([2.0, -1.0]))

    def test_rank_deficiency_warns(self):
        h = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.warns(UserWarning, match="pseudo-inverse"):
            est.covariance_and_ci(h)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            est.covariance_and_ci(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_gauss_newton_noise_scaling(
        self, mech1, geometry, fast_solver, exp1_design
    ):
        # doubling every sigma must double every standard error exactly
        truth = parameter_set_for(mech1, free=("dG0", "Ga1"))
        clean = td.simulate(mech1, geometry, exp1_design, truth, fast_solver).flux
        sig1 = {g: max(clean.peak(g), 1e-6) * 0.01 for g in clean.gases}
        sig2 = {g: 2.0 * s for g, s in sig1.items()}
        obs1 = est.Observation(design=exp1_design, flux=clean, sigmas=sig1)
        obs2 = est.Observation(design=exp1_design, flux=clean, sigmas=sig2)
        h1 = est.gauss_newton_hessian(
            mech1, geometry, [obs1], truth, options=fast_solver
        )
        h2 = est.gauss_newton_hessian(
            mech1, geometry, [obs2], truth, options=fast_solver
        )
        _, std1, _ = est.covariance_and_ci(h1)
        _, std2, _ = est.covariance_and_ci(h2)
        assert std2 == pytest.approx(2.0 * std1, rel=1e-12)

    def test_gauss_newton_matches_fd_on_quadraticish_problem(
        self, mech1, geometry, fast_solver, exp1_design
    ):
        # at a zero-residual optimum the two Hessians must agree in shape:
        # same eigenvalue signs, leading eigenvalue within 20%
        truth = parameter_set_for(mech1, free=("dG0", "Ga1"))
        clean = td.simulate(mech1, geometry, exp1_design, truth, fast_solver).flux
        obs = est.Observation(
            design=exp1_design, flux=clean,
            sigmas={g: max(clean.peak(g), 1e-6) * 0.01 for g in clean.gases},
        )
        h_gn = est.gauss_newton_hessian(
            mech1, geometry, [obs], truth, options=fast_solver
        )
        h_fd = est.hessian(
            mech1, geometry, [obs], truth, step=1e-4, options=fast_solver
        )
        eig_gn = np.linalg.eigvalsh(h_gn)
        eig_fd = np.linalg.eigvalsh(h_fd)
        assert (np.sign(eig_gn) == np.sign(eig_fd)).all()
        assert eig_fd[-1] == pytest.approx(eig_gn[-1], rel=0.2)


class TestSensitivityScreen:
    def test_inert_pulse_has_zero_sensitivities(
        self, inert_mechanism, geometry, fast_solver
    ):
        params = parameter_set_for(inert_mechanism, free=("dG0", "Ga0"))
        des = td.design(700.0, Ar=(1.0, 0.0))
        clean = td.simulate(
            inert_mechanism, geometry, des, params, fast_solver
        ).flux
        obs = est.Observation(
            design=des, flux=clean,
            sigmas={g: 1.0 for g in clean.gases},
        )
        sens = est.sensitivity_screen(
            inert_mechanism, geometry, [obs], params, options=fast_solver
        )
        assert sens["dG0"] == 0.0
        assert sens["Ga0"] == 0.0
