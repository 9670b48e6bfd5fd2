"""A narrow beam enters a scattering ball.  Split what comes out into the
part that never scattered, the part that scattered once and the rest, and
check each piece against a Monte Carlo simulation of the same particles.

    python demos/01_beam_decomposition.py
"""
import numpy as np

from albedo_lab.albedo import BeamSpec, apply_albedo, bin_masses, sample_beam
from albedo_lab.coefficients import make_phantom
from albedo_lab.geometry import DomainConfig
from albedo_lab.montecarlo import mc_oracle
from albedo_lab.transport import Lattice

# absorption 0.3, scattering 0.3: nothing is absorbed, so all mass must leave
pair = make_phantom("ball", N=17, sigma0=0.3, c=0.3)
lat = Lattice.transport(DomainConfig(), h=2 / 16)
beam = sample_beam(BeamSpec.central(eps=0.04))

dec = apply_albedo(beam, pair, lat)
mc = mc_oracle(beam, pair, 200_000, seed=1)

print("component     deterministic   monte carlo (+- se)")
for i, name in enumerate(("ballistic", "single", "multiple")):
    print(f"{name:12s}  {dec.masses[name]:.5f}         {mc.masses[i]:.5f} +- {mc.stderr[i]:.5f}")
print(f"total         {dec.total_mass():.5f}         {mc.total:.5f}")
print(f"unresolved tail bound {dec.tail_bound:.2e}")

# where the once-scattered particles go: rows are hemispheres of exit
# direction relative to the beam, columns inner/outer transverse radius
print("\nsingle-scatter mass by (direction hemisphere, radius):")
print(np.array2string(bin_masses(dec.single, [0, 0, 1], 2, 2), precision=4))
