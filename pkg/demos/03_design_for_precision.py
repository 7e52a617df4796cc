"""
Choosing the most informative next experiment
=============================================

After a first fit, each candidate experiment gets a predicted posterior
covariance from its dynamic flux sensitivities plus the current parameter
covariance; the design with the smallest determinant (D-criterion) promises
the most information.  A reduced grid and coarse solver keep the demo quick.
"""

import tapdoe as td
from tapdoe.estimation import FitOptions, fit, synthetic_observation
from tapdoe.io_utils import design_columns
from tapdoe.noise import NoiseModel
from tapdoe.params import parameter_set_for
from tapdoe.precision import DesignSpace, design_search
from tapdoe.reactor import SolverOptions

mech = td.load_fixture_mechanism(1)
geometry = td.ReactorGeometry()
coarse = SolverOptions(nodes=60, dt=2e-3)
noise = NoiseModel(sigma=0.01, seed=3)

truth = parameter_set_for(mech, free=("dG0", "dG1", "Ga1"))
first = td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))
obs = synthetic_observation(mech, geometry, first, truth, noise, coarse)

start = truth.with_values({"dG0": -0.3, "dG1": -0.3, "Ga1": 1.5})
base = fit(mech, geometry, [obs], start,
           FitOptions(solver=coarse, method="least-squares"))
print("after the first experiment:")
for name in base.free_names:
    print(f"  ci95({name}) = {base.ci95[name]:.3e} eV")

# small grid: intensity, propane delay, and temperature levels
space = DesignSpace(
    intensity_levels=((1.0, 2.0), (1.0, 2.0)),
    delay_levels=(0.0, 0.3, 0.6),
    temperatures=(650.0, 700.0, 750.0),
)
search = design_search(
    mech, geometry, base.params, base.covariance, space,
    kind="D", noise=noise, solver=coarse, workers=2,
)

print("\ntop designs by predicted D-value (lower = more informative):")
for rank, ev in enumerate(search.evaluations[:5], start=1):
    cols = design_columns(ev.design)
    print(f"  #{rank}  {cols}  D = {ev.criteria['D']:.3e}")

# focusing the criterion on one poorly known parameter is a one-liner:
focused = design_search(
    mech, geometry, base.params, base.covariance, space,
    kind="D", subset=("dG1",), noise=noise, solver=coarse, workers=2,
)
print("\nbest design for pinning down dG1 alone:")
print(f"  {design_columns(focused.best.design)}")
