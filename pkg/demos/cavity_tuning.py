"""Cavity resonance from a reflectance spectrum and the Purcell factor it implies.

Fits a noisy Fano line, then evaluates the Purcell factor of an emitter
detuned from the fitted resonance.
"""

from spsbench import CavityModel, fit_fano, purcell_vs_detuning
from spsbench.pipeline import synthetic_fano_spectrum

lam, refl = synthetic_fano_spectrum(921.5, q_factor=250.0, q=1.0, noise=0.01, seed=4)
fit = fit_fano(lam, refl)
print(f"submodel {fit.metadata['submodel']}: lambda_c = {fit['lambda_c']:.3f} nm, Q = {fit['Q']:.0f}, q = {fit['q']:.2f}")

cavity = CavityModel(lambda_c0=fit["lambda_c"], q_factor=fit["Q"])
for emitter_nm in (921.5, 922.5, 924.0, 927.0):
    d = emitter_nm - fit["lambda_c"]
    print(f"emitter at {emitter_nm:.1f} nm (detuning {d:+.2f} nm): F_P = {purcell_vs_detuning(cavity, d):5.1f}")
