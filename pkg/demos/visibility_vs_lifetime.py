"""How much does a shorter radiative lifetime buy against spectral diffusion?

Calibrates the diffusion linewidth on one measured visibility, then prints
the predicted visibility over a range of Purcell-shortened lifetimes and
cross-checks a few points against the brute-force quadrature.
"""

from spsbench import calibrate_linewidth, visibility_inhomogeneous
from spsbench.interferometer import pair_visibility_oracle

gamma = calibrate_linewidth(30.0, 0.76)
print(f"diffusion linewidth from V(30 ps) = 0.76: {gamma:.3f} GHz")

print(f"{'T1 [ps]':>8} {'V closed form':>14} {'V quadrature':>13}")
for t1 in (15.0, 30.0, 45.0, 100.0, 300.0, 680.0):
    v = visibility_inhomogeneous(t1, gamma)
    check = f"{pair_visibility_oracle(t1, gamma):13.4f}" if t1 in (30.0, 300.0) else f"{'-':>13}"
    print(f"{t1:8.1f} {v:14.4f} {check}")
