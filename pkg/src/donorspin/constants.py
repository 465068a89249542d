"""Physical constants in the unit system used throughout the package.

Energies are expressed as frequencies E/h in MHz and magnetic fields in mT,
so the magneton ratios below carry units of MHz/mT.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    """Magneton-to-Planck ratios (CODATA 2018).

    Attributes
    ----------
    mu_B_over_h : float
        Bohr magneton divided by Planck's constant, MHz/mT.
    mu_N_over_h : float
        Nuclear magneton divided by Planck's constant, MHz/mT.
    """

    mu_B_over_h: float = 13.9962449361
    mu_N_over_h: float = 7.6225932291e-3


CONSTANTS = PhysicalConstants()

#: Boltzmann constant in eV/K (exact in the 2019 SI).
K_B_EV = 8.617333262e-5
