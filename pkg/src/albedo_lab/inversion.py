"""Reconstruction: sigma from ballistic beam data, k from single-scattering
densities divided by the broken-ray attenuation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .albedo import BeamSpec, _beam_chord_nodes, _exit_depth, eval_E, sample_beam
from .coefficients import AbsorptionField, CartesianGrid, CoefficientPair, ScatteringField
from .errors import DomainError
from .geometry import DirectionSet, chord_interval
from .transport import line_integral
from .xray import Sinogram, fbp_invert, slice_geometry, sobolev_norm

DEFAULT_EPS = (0.08, 0.04, 0.02)
SWEEP_QUADRATURE = {"n_dir": (1, 4), "n_pos": (1, 4)}


def richardson(eps, values) -> np.ndarray:
    """Value at eps = 0 of the quadratic through (eps_i, values_i); values may
    carry trailing axes."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    V = np.vander(eps, 3)
    coef = np.linalg.solve(V, values.reshape(len(eps), -1))
    return coef[-1].reshape(values.shape[1:])


def sweep_ballistic(sigma: AbsorptionField, dirs: np.ndarray, feet: np.ndarray, eps: float,
                    R: float = 2.0, profile: str = "bump", n_dir=(1, 4), n_pos=(1, 4)) -> np.ndarray:
    """Ballistic mass of the beam centred on each (dir, foot) line.

    One beam template is built per distinct direction and translated across
    the feet sharing it.
    """
    out = np.ones(len(dirs))
    keys = np.round(dirs, 12)
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    reach = sigma.rho + eps
    for g in np.unique(inv):
        idx = np.flatnonzero(inv == g)
        idx = idx[np.linalg.norm(feet[idx], axis=1) < reach]
        if not len(idx):
            continue
        v0 = dirs[idx[0]]
        tmpl = sample_beam(BeamSpec(tuple(np.zeros(len(v0))), tuple(v0), eps, profile, n_dir, n_pos), R)
        vj = tmpl.rays.dirs
        x0 = feet[idx]
        shift = x0[:, None, :] - np.einsum("pk,jk->pj", x0, vj)[..., None] * vj[None]
        f = tmpl.rays.feet[None] + shift
        tau = line_integral(sigma, f.reshape(-1, f.shape[-1]), np.tile(vj, (len(idx), 1)))
        w = tmpl.masses
        out[idx] = np.exp(-tau.reshape(len(idx), -1)) @ w
    return out


def recover_line_integrals(sigma: AbsorptionField, n_angles: int = 48, n_s: int = 48, z=None,
                           eps=DEFAULT_EPS, R: float = 2.0, masses=None) -> Sinogram:
    """Sinogram of -log of the eps-extrapolated ballistic masses on the
    stacked-slice sweep.  `sigma` plays the unknown medium generating data;
    pass `masses` (shape (len(eps), n_lines)) to use recorded data instead."""
    z = sigma.grid.axis if z is None else np.asarray(z, dtype=float)
    dirs, feet, angles, s, z = slice_geometry(n_angles, n_s, z, sigma.rho)
    if masses is None:
        masses = np.stack([sweep_ballistic(sigma, dirs, feet, e, R, **SWEEP_QUADRATURE) for e in eps])
    m0 = richardson(eps, masses) if len(eps) == 3 else np.asarray(masses)[-1]
    flagged = ~(m0 > 0)
    vals = np.zeros(len(m0))
    vals[~flagged] = -np.log(np.minimum(m0[~flagged], 1.0))
    return Sinogram(dirs, feet, vals, angles, s, z, {"eps": list(eps)}, flagged)


@dataclass
class SigmaRecovery:
    sigma: AbsorptionField
    errors: dict = field(default_factory=dict)


def field_errors(est: AbsorptionField, truth: AbsorptionField) -> dict:
    """L2 (relative), H^{-1/2} and sup errors on the closed support ball."""
    inside = truth.grid.node_radius() <= truth.rho + 1e-12
    d = np.where(inside, est.values - truth.values, 0.0)
    t = np.where(inside, truth.values, 0.0)
    tn = np.linalg.norm(t)
    return {"l2_rel": float(np.linalg.norm(d) / tn) if tn > 0 else float(np.linalg.norm(d)),
            "h_minus_half": sobolev_norm(d, -0.5, truth.grid.h),
            "sup": float(np.max(np.abs(d)))}


def recover_sigma(sino: Sinogram, grid: CartesianGrid, truth: AbsorptionField | None = None) -> SigmaRecovery:
    """FBP of the sinogram, clipped to be nonnegative, with errors vs truth."""
    raw = fbp_invert(sino, grid)
    est = AbsorptionField(grid, np.clip(raw.values, 0.0, None))
    return SigmaRecovery(est, field_errors(est, truth) if truth is not None else {})


def segment_density(spec: BeamSpec, pair: CoefficientPair, dirs: DirectionSet, n_t: int = 17,
                    R: float = 2.0):
    """Beam-averaged single-scattering density per (chord node q, v_l).

    Node q sits at the same fraction of the support chord on every beam ray,
    so as eps -> 0 the average tends to k(z, v0', v) E at the broken-ray
    point.  Returns (t' nodes on the central line, density (n_t, L)).
    """
    if n_t % 2 == 0:
        n_t += 1
    beam = sample_beam(spec, R)
    rays = beam.rays
    v0, x0 = spec.direction, spec.foot
    ch = chord_interval(x0, v0, pair.grid.rho)
    if ch is None:
        raise DomainError("beam misses the support", x0p=list(x0))
    cn = _beam_chord_nodes(rays, pair.sigma, pair.grid.rho, n_t)
    L = len(dirs)
    z = rays.feet[cn.ray] + cn.t[:, None] * rays.dirs[cn.ray]
    mass = beam.values[cn.ray] * rays.weights[cn.ray]
    zz = np.repeat(z, L, axis=0)
    vv = np.tile(dirs.nodes, (len(z), 1))
    k = pair.kappa.kernel(zz, np.repeat(rays.dirs[cn.ray], L, axis=0), vv)
    if not pair.sigma.is_zero():
        k = k * np.exp(-_exit_depth(pair.sigma, zz, vv))
    dens = ((mass * np.exp(-cn.tau_in))[:, None] * k.reshape(-1, L)).reshape(-1, n_t, L).sum(axis=0)
    total = mass.reshape(-1, n_t)[:, 0].sum()
    return np.linspace(ch[0], ch[1], n_t), dens / total


@dataclass
class KRecovery:
    points: np.ndarray
    v_in: np.ndarray
    v_out: np.ndarray
    khat: np.ndarray
    ktrue: np.ndarray
    E: np.ndarray
    rejected: list = field(default_factory=list)

    def relative_error(self) -> float:
        n = np.linalg.norm(self.ktrue)
        return float(np.linalg.norm(self.khat - self.ktrue) / n) if n > 0 else float(np.linalg.norm(self.khat))

    def write_rejections(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["beam", "t_prime", "direction", "reason", "E"])
            w.writeheader()
            for row in self.rejected:
                w.writerow(row)

    def assemble(self, grid: CartesianGrid, phase) -> ScatteringField:
        """Amplitude estimate c(x) = k / p(v'.v) averaged onto grid nodes by
        inverse-distance weights over samples within one cell."""
        amp = self.khat / np.maximum(phase(np.einsum("ij,ij->i", self.v_in, self.v_out)), 1e-300)
        pts = grid.points()
        num = np.zeros(len(pts))
        den = np.zeros(len(pts))
        node = grid.nearest_index(self.points)
        for off in np.ndindex(*(3,) * grid.n):
            d = np.array(off) - 1
            idx = np.array(np.unravel_index(node, grid.shape)).T + d
            ok = np.all((idx >= 0) & (idx < grid.N), axis=1)
            flat = np.ravel_multi_index(tuple(idx[ok].T), grid.shape)
            dist = np.linalg.norm(pts[flat] - self.points[ok], axis=1)
            near = dist <= grid.h
            wgt = 1.0 / (dist[near] + 1e-3 * grid.h)
            np.add.at(num, flat[near], wgt * amp[ok][near])
            np.add.at(den, flat[near], wgt)
        c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return ScatteringField(grid, c.reshape(grid.shape), phase)


def default_k_beams(n: int = 3, eps: float = 0.02):
    """A few beams crossing the support along two axes."""
    beams = []
    for axis in (n - 1, 0):
        v = np.zeros(n)
        v[axis] = 1.0
        other = (axis + 1) % n
        for s in (0.0, 0.3, -0.45):
            x = np.zeros(n)
            x[other] = s
            beams.append(BeamSpec(tuple(x), tuple(v), eps, n_dir=(2, 4), n_pos=(2, 4)))
    return beams


def recover_k(pair: CoefficientPair, sigma_est: AbsorptionField, beams=None, dirs: DirectionSet | None = None,
              delta: float = 0.05, E_min: float = 1e-6, interior: float = 0.9, R: float = 2.0,
              n_t: int = 17) -> KRecovery:
    """k at broken-ray points from single-scattering data of `pair`,
    with the attenuation removed using `sigma_est`.

    Samples with v nearly parallel to v0' (|v - (v.v0')v0'| <= delta), with
    E below E_min or with the scatter point outside `interior` * rho are
    rejected and logged.
    """
    dirs = dirs or DirectionSet.default(pair.grid.n)
    beams = beams or default_k_beams(pair.grid.n)
    pts, vin, vout, kh, kt, Es, rejected = [], [], [], [], [], [], []
    V = dirs.nodes
    for b, spec in enumerate(beams):
        tq, dens = segment_density(spec, pair, dirs, n_t, R)
        v0 = spec.direction
        perp = np.linalg.norm(V - (V @ v0)[:, None] * v0, axis=1)
        for q, tp in enumerate(tq):
            z = spec.foot + tp * v0
            if np.linalg.norm(z) > interior * pair.grid.rho:
                continue
            t = -(V @ z)
            x = z[None, :] + t[:, None] * V
            E = eval_E(x, t, V, v0, sigma_est, R)
            bad = np.where(perp <= delta, "near-parallel", np.where(E < E_min, "opaque", ""))
            for l in np.flatnonzero(bad != ""):
                rejected.append({"beam": b, "t_prime": float(tp), "direction": int(l),
                                 "reason": str(bad[l]), "E": float(E[l])})
            ok = bad == ""
            m = int(ok.sum())
            zq = np.repeat(z[None], m, 0)
            v0q = np.repeat(v0[None], m, 0)
            pts.append(zq)
            vin.append(v0q)
            vout.append(V[ok])
            kh.append(dens[q, ok] / E[ok])
            kt.append(pair.kappa.kernel(zq, v0q, V[ok]))
            Es.append(E[ok])
    n = pair.grid.n

    def cat(a, shape):
        return np.concatenate(a) if a else np.zeros(shape)

    return KRecovery(cat(pts, (0, n)), cat(vin, (0, n)), cat(vout, (0, n)), cat(kh, 0), cat(kt, 0),
                     cat(Es, 0), rejected)
