"""Physical constants shared across the package.

All free energies are in eV, temperatures in K, amounts in mol (nmol at the
I/O surface), lengths in m.
"""

# Boltzmann constant in eV/K
KB_EV = 8.617333262e-5

# kB/h in 1/(K*s); the Eyring prefactor is KB_OVER_H * T
KB_OVER_H = 2.0836619e10

# nmol <-> mol
NMOL = 1e-9
