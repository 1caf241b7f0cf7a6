"""Physical constants (CODATA 2018) and unit helpers.

Energies are in micro-electronvolts unless a name says otherwise, times in
picoseconds, frequencies in GHz.
"""

import math

HBAR_UEV_NS = 0.6582119569          # reduced Planck constant [ueV ns]
HBAR_UEV_PS = HBAR_UEV_NS * 1e3     # [ueV ps]
H_UEV_PER_GHZ = 4.135667696         # Planck constant [ueV / GHz]
KB_MEV_PER_K = 0.0861733            # Boltzmann constant [meV / K]

# Width convention for the spectral-diffusion linewidth Gamma.  The closed-form
# overlap uses A = sqrt(log10 2) / (sqrt(2) pi Gamma); the Monte Carlo and the
# quadrature oracle draw frequency offsets with the standard deviation below so
# that all three agree.
LINEWIDTH_LOG = math.log10(2.0)


def linewidth_to_sigma(gamma_ghz):
    """Standard deviation [GHz] of the per-photon frequency offset for linewidth Gamma."""
    return gamma_ghz / (2.0 * math.sqrt(2.0 * LINEWIDTH_LOG))


def sigma_to_linewidth(sigma_ghz):
    return sigma_ghz * 2.0 * math.sqrt(2.0 * LINEWIDTH_LOG)


def ueV_to_GHz(energy_ueV):
    return energy_ueV / H_UEV_PER_GHZ


def GHz_to_ueV(freq_ghz):
    return freq_ghz * H_UEV_PER_GHZ


def constants_block():
    """Constants recorded in every output document."""
    return {
        "hbar_ueV_ns": HBAR_UEV_NS,
        "h_ueV_per_GHz": H_UEV_PER_GHZ,
        "kB_meV_per_K": KB_MEV_PER_K,
        "linewidth_log": "log10(2)",
        "time_resolution_ps": 1,
    }
