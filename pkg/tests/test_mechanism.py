import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tapdoe as td
from tapdoe.constants import KB_EV, KB_OVER_H
from tapdoe.mechanism import (
    MechanismError,
    check_elemental_balance,
    formula_composition,
    parse_mechanism,
    rate_constants,
    reaction_rates,
    serialize_mechanism,
    stoichiometry_matrix,
)

MINI = """
[gas]
A mass=40.0
[site]
* conc=0.3
[adsorbate]
A* site=*
[steps]
A + * <-> A* : dG=-0.2 Ga=0.3
"""


def eyring_forward(ga, temperature):
    # independent hand evaluation of the forward rate constant
    return KB_OVER_H * temperature * math.exp(-ga / (KB_EV * temperature))


class TestParsing:
    def test_adsorption_line(self, mech1):
        step = mech1.steps[0]
        assert dict(step.reactants) == {"C3H8": 1, "*": 1}
        assert dict(step.products) == {"C3H8*": 1}
        assert step.delta_g == -0.2
        assert step.g_activation == 0.3
        assert step.reversible

    def test_two_site_oxygen_step(self, mech2):
        step = mech2.steps[1]
        assert dict(step.reactants) == {"O2": 1, "^": 2}
        assert dict(step.products) == {"O^": 2}
        assert step.delta_g == -0.7
        assert step.g_activation == 1.25

    def test_no_steps_rejected(self):
        text = MINI.split("[steps]")[0]
        with pytest.raises(MechanismError, match="no reaction steps"):
            parse_mechanism(text)

    def test_unknown_species_with_line_number(self):
        bad = MINI.replace("A + * <-> A*", "A + * <-> B*")
        with pytest.raises(MechanismError, match="unknown species 'B\\*'"):
            parse_mechanism(bad)

    def test_site_imbalance_rejected(self):
        text = """
[gas]
A mass=40.0
[site]
* conc=0.3
^ conc=0.3
[adsorbate]
A^ site=^
[steps]
A + * <-> A^ : dG=-0.2 Ga=0.3
"""
        with pytest.raises(MechanismError, match="imbalance"):
            parse_mechanism(text)

    def test_duplicate_species_rejected(self):
        bad = MINI.replace("[site]", "A mass=2.0\n[site]")
        with pytest.raises(MechanismError, match="duplicate"):
            parse_mechanism(bad)

    def test_syntax_error_reports_line(self):
        bad = MINI.replace("A mass=40.0", "A mass")
        with pytest.raises(MechanismError, match="line 3"):
            parse_mechanism(bad)

    def test_irreversible_arrow(self):
        text = MINI.replace("<->", "->")
        mech = parse_mechanism(text)
        assert not mech.steps[0].reversible

    def test_low_barrier_warns_but_parses(self):
        text = MINI.replace("dG=-0.2 Ga=0.3", "dG=0.5 Ga=0.1")
        with pytest.warns(UserWarning, match="activation energy"):
            mech = parse_mechanism(text)
        assert mech.steps[0].g_activation == 0.1

    @pytest.mark.parametrize("number", [1, 2, 3])
    def test_round_trip_fixture(self, number):
        mech = td.load_fixture_mechanism(number)
        again = parse_mechanism(serialize_mechanism(mech), name=mech.name)
        assert again == mech

    @given(
        dg=st.floats(-5, 2, allow_nan=False),
        ga=st.floats(0, 4, allow_nan=False),
        conc=st.floats(1e-6, 10),
    )
    @settings(max_examples=30, deadline=None)
    def test_round_trip_preserves_floats(self, dg, ga, conc):
        text = (
            MINI.replace("dG=-0.2", f"dG={dg!r}")
            .replace("Ga=0.3", f"Ga={ga!r}")
            .replace("conc=0.3", f"conc={conc!r}")
        )
        mech = parse_mechanism(text)
        assert parse_mechanism(serialize_mechanism(mech)) == mech


class TestStoichiometry:
    def test_single_adsorption_column(self):
        mech = parse_mechanism(MINI)
        sm = stoichiometry_matrix(mech)
        assert sm.species_order == ("A", "A*", "*")
        assert list(sm.entries[:, 0]) == [-1, 1, -1]

    def test_oxygen_dissociation_column(self, mech1):
        sm = stoichiometry_matrix(mech1)
        col = sm.column(1)
        assert col == {"O2": -1, "*": -2, "O*": 2}

    def test_combustion_column_hand_count(self, mech1):
        sm = stoichiometry_matrix(mech1)
        col = sm.column(6)
        assert col == {"C3H4*": -1, "O*": -8, "CO2": 3, "H2O": 2, "*": 9}
        # one C3H4* site and eight O* sites released as nine free sites
        assert -1 - 8 + 9 == 0

    @pytest.mark.parametrize("number", [1, 2, 3])
    def test_site_columns_sum_to_zero(self, number):
        mech = td.load_fixture_mechanism(number)
        sm = stoichiometry_matrix(mech)
        for site in mech.sites:
            weights = np.array(
                [mech.sites_occupied(sp, site.name) for sp in sm.species_order]
            )
            assert (weights @ sm.entries == 0).all()

    def test_elemental_balance_of_fixtures(self, mech1, mech2, mech3):
        for mech in (mech1, mech2, mech3):
            comp = {
                sp.name: formula_composition(sp.name)
                for sp in mech.species
                if sp.kind != "site"
            }
            check_elemental_balance(mech, comp)

    def test_elemental_imbalance_detected(self):
        bad = parse_mechanism(MINI.replace("A + * <-> A*", "2A + * <-> A*"))
        comp = {"A": {"Q": 1}, "A*": {"Q": 1}}
        with pytest.raises(MechanismError, match="elemental imbalance"):
            check_elemental_balance(bad, comp)

    def test_formula_composition(self):
        assert formula_composition("C3H8") == {"C": 3, "H": 8}
        assert formula_composition("C3H8*") == {"C": 3, "H": 8}
        assert formula_composition("O^") == {"O": 1}
        assert formula_composition("H2O") == {"H": 2, "O": 1}


class TestRateConstants:
    def test_forward_eyring_hand_value(self, mech1):
        kf, _ = rate_constants(mech1.steps[0], 700.0)
        assert kf == pytest.approx(eyring_forward(0.3, 700.0), rel=1e-12)
        # prefactor kB*T/h and Boltzmann factor as quoted
        assert KB_OVER_H * 700.0 == pytest.approx(1.4586e13, rel=1e-4)
        assert 0.3 / (KB_EV * 700.0) == pytest.approx(4.9733, rel=1e-4)
        assert kf == pytest.approx(1.009305e11, rel=1e-4)

    def test_reverse_from_equilibrium_constant(self, mech1):
        kf, kr = rate_constants(mech1.steps[0], 700.0)
        k_eq = math.exp(0.2 / (KB_EV * 700.0))
        assert k_eq == pytest.approx(27.536, rel=1e-4)
        assert kr == pytest.approx(kf / k_eq, rel=1e-12)
        assert kr == pytest.approx(3.66508e9, rel=1e-4)

    def test_zero_delta_g_means_equal_constants(self):
        mech = parse_mechanism(MINI.replace("dG=-0.2", "dG=0"))
        kf, kr = rate_constants(mech.steps[0], 650.0)
        assert kf == kr

    def test_irreversible_has_zero_reverse(self):
        mech = parse_mechanism(MINI.replace("<->", "->"))
        _, kr = rate_constants(mech.steps[0], 700.0)
        assert kr == 0.0

    def test_nonpositive_temperature_rejected(self, mech1):
        with pytest.raises(ValueError):
            rate_constants(mech1.steps[0], 0.0)

    @given(
        dg=st.floats(-2, 1),
        ga=st.floats(0, 3),
        temperature=st.floats(300, 1200),
    )
    @settings(max_examples=60, deadline=None)
    def test_thermodynamic_consistency(self, dg, ga, temperature):
        mech = parse_mechanism(
            MINI.replace("dG=-0.2", f"dG={dg!r}").replace("Ga=0.3", f"Ga={ga!r}")
        )
        kf, kr = rate_constants(mech.steps[0], temperature)
        assert kf / kr == pytest.approx(
            math.exp(-dg / (KB_EV * temperature)), rel=1e-12
        )

    @given(
        ga=st.floats(0.1, 2.5),
        bump=st.floats(1e-3, 0.5),
        temperature=st.floats(300, 1200),
    )
    @settings(max_examples=40, deadline=None)
    def test_raising_barrier_lowers_forward_rate(self, ga, bump, temperature):
        lo = parse_mechanism(MINI.replace("Ga=0.3", f"Ga={ga!r}"))
        hi = parse_mechanism(MINI.replace("Ga=0.3", f"Ga={ga + bump!r}"))
        kf_lo, _ = rate_constants(lo.steps[0], temperature)
        kf_hi, _ = rate_constants(hi.steps[0], temperature)
        assert kf_hi < kf_lo


class TestReactionRates:
    def test_zero_concentrations_zero_rates(self, mech1):
        gas = {g: 0.0 for g in mech1.gas_names}
        surf = {s: 0.0 for s in mech1.surface_names}
        rates = reaction_rates(mech1, gas, surf, 700.0)
        assert (rates == 0.0).all()

    def test_hand_mass_action_product(self):
        # choose the barrier so kf comes out at exactly 3.0 1/s
        temperature = 700.0
        ga = KB_EV * temperature * math.log(KB_OVER_H * temperature / 3.0)
        text = MINI.replace("<->", "->").replace("Ga=0.3", f"Ga={ga!r}")
        mech = parse_mechanism(text)
        rates = reaction_rates(
            mech, {"A": 1.0}, {"A*": 5.0, "*": 2.0}, temperature
        )
        assert rates[0] == pytest.approx(6.0, rel=1e-9)

    def test_eighth_order_oxygen_scaling(self, mech1):
        gas = {g: 0.0 for g in mech1.gas_names}
        surf = {s: 0.0 for s in mech1.surface_names}
        surf["C3H4*"] = 1e-3
        surf["O*"] = 2e-2
        r1 = reaction_rates(mech1, gas, surf, 700.0)[6]
        surf["O*"] = 4e-2
        r2 = reaction_rates(mech1, gas, surf, 700.0)[6]
        assert r2 / r1 == pytest.approx(256.0, rel=1e-9)

    def test_negative_concentration_rejected(self, mech1):
        gas = {g: 0.0 for g in mech1.gas_names}
        gas["O2"] = -1.0
        surf = {s: 0.0 for s in mech1.surface_names}
        with pytest.raises(ValueError, match="negative concentration"):
            reaction_rates(mech1, gas, surf, 700.0)
