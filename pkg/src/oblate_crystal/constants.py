"""Physical constants (CODATA 2018). Every SI conversion in the package reads from here."""

import math

ELEMENTARY_CHARGE = 1.602176634e-19  # C, exact
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
REDUCED_PLANCK = 1.054571817e-34  # J s
COULOMB_CONSTANT = 1.0 / (4.0 * math.pi * VACUUM_PERMITTIVITY)  # N m^2 / C^2
