"""Physical constants and unit conversions.

All internal computation is SI (meters, tesla, ampere, A/m).  Configuration
files and CSV exports use the lab-friendly units stated in their headers
(micrometers, gauss, mA/um, microkelvin).
"""

from __future__ import annotations

import scipy.constants as sc

MU0 = sc.mu_0                      # vacuum permeability, T*m/A
GAUSS = 1.0e-4                     # tesla per gauss
UM = 1.0e-6                        # meters per micrometer

# Zeeman energy scale: mu_B / k_B in kelvin per tesla (~0.6717 K/T, i.e.
# ~67.17 uK/G for a unit g_F*m_F).
MUB_OVER_KB = sc.physical_constants["Bohr magneton"][0] / sc.k


def tesla_from_gauss(b_gauss: float) -> float:
    return b_gauss * GAUSS


def gauss_from_tesla(b_tesla: float) -> float:
    return b_tesla / GAUSS


def meters_from_um(x_um: float) -> float:
    return x_um * UM


def um_from_meters(x_m: float) -> float:
    return x_m / UM
