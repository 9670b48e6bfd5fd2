"""Recover the absorption from the ballistic part of the outgoing light,
then the scattering kernel from the once-scattered part.

The ballistic masses of shrinking beams are extrapolated to zero width,
giving line integrals of sigma; filtered back-projection slice by slice
turns those into sigma.  Dividing the single-scatter density by the
broken-ray attenuation (computed with that reconstructed sigma) gives k.

    python demos/02_reconstruct.py
"""
from albedo_lab.coefficients import make_phantom
from albedo_lab.inversion import recover_k, recover_line_integrals, recover_sigma

pair = make_phantom("smooth-bump", N=17)

sino = recover_line_integrals(pair.sigma, n_angles=32, n_s=32)
rec = recover_sigma(sino, pair.grid, pair.sigma)
print("sigma errors:", {k: round(v, 4) for k, v in rec.errors.items()})

for label, s in (("true sigma", pair.sigma), ("reconstructed sigma", rec.sigma)):
    kr = recover_k(pair, s)
    print(f"k with {label:20s} rel L2 {kr.relative_error():.4f}  "
          f"({len(kr.khat)} samples, {len(kr.rejected)} rejected)")

amp = recover_k(pair, rec.sigma).assemble(pair.grid, pair.kappa.phase)
# only nodes within one cell of a beam line receive samples; the rest stay 0
hit = amp.amplitude > 0
err = abs(amp.amplitude[hit] - pair.kappa.amplitude[hit]).max()
print(f"scattering amplitude on {hit.sum()} sampled nodes, max error {err:.4f}")
