"""How much does the outgoing light change when the medium changes?

First a case with a closed form: no scattering, absorption 1 vs 1.2 in the
unit ball.  The operator distance is then the largest gap in transmission
exp(-L) - exp(-1.2 L) over chord lengths L, and the sweep of beam offsets
should bracket it.  Then a scattering medium is perturbed by eta times a
fixed bump and the data distance is fitted against eta on a log-log scale.

    python demos/03_stability.py
"""
import numpy as np

from albedo_lab.albedo import BeamSpec
from albedo_lab.coefficients import make_phantom, smooth_bump
from albedo_lab.geometry import DomainConfig
from albedo_lab.stability import Responder, operator_distance, verify_holder_exponents
from albedo_lab.transport import Lattice

lat = Lattice.transport(DomainConfig(), h=2 / 16)

a = make_phantom("ball", N=17, sigma0=1.0, c=0.0)
b = make_phantom("ball", N=17, sigma0=1.2, c=0.0)
fam = [BeamSpec.offset(s) for s in np.linspace(0, 0.95, 20)]
d = operator_distance(Responder(a, lat), Responder(b, lat), [fam])
L = 2 * np.sqrt(1 - np.linspace(0, 1, 100001) ** 2)
print(f"bracket [{d['lower']:.5f}, {d['upper']:.5f}], closed form {np.max(np.exp(-L) - np.exp(-1.2 * L)):.5f}")

pair = make_phantom("smooth-bump", N=17)
bump = smooth_bump(pair.grid, (0.3, 0, 0), 0.5)
rep = verify_holder_exponents(pair, 0.5 * bump, 0.3 * bump, etas=(0.4, 0.2, 0.1, 0.05), r_tilde=0.51,
                   sweep=[[BeamSpec.offset(s) for s in (0.0, 0.3, 0.6)]], lattice=lat)
for name, fit in rep.fits.items():
    print(f"{name:10s} slope {fit['slope']:.3f}  guaranteed exponent {fit['theta']:.3f}")
