"""The albedo operator applied to narrow beams, split by scattering order.

ballistic  unscattered trace, the attenuated beam itself
single     once-scattered trace, assembled from the broken-ray kernel
multiple   trace of the Neumann terms of order two and higher

Beams are smooth mollifiers of a delta on F-, sampled by a local product
quadrature, so every pairing here is a pairing with a smooth function.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .coefficients import CoefficientPair, check_subcritical
from .errors import DomainError, RefusalError
from .geometry import (BoundaryDistribution, DirectionSet, DomainConfig, RaySet, chord_intervals,
                       make_frame, make_frames)
from .transport import Lattice, apply_A2, line_integral, segment_integral, solve_neumann

PROFILES = ("bump", "cosine")
MIN_RESOLUTION = 1e-4


def _profile(name: str, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = u < 1.0
    if name == "bump":
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    elif name == "cosine":
        out[inside] = np.cos(0.5 * np.pi * u[inside]) ** 2
    else:
        raise DomainError("unknown beam profile", profile=name, known=list(PROFILES))
    return out


@dataclass(frozen=True)
class BeamSpec:
    """Smoothed delta at (x0p - R v0p, v0p) of support radius eps.

    x0p is a point of the plane orthogonal to v0p (it is projected if not).
    """

    x0p: tuple
    v0p: tuple
    eps: float = 0.02
    profile: str = "bump"
    n_dir: tuple = (3, 6)
    n_pos: tuple = (3, 6)

    @classmethod
    def central(cls, n: int = 3, eps: float = 0.02, **kw) -> "BeamSpec":
        v = np.zeros(n)
        v[-1] = 1.0
        return cls(tuple(np.zeros(n)), tuple(v), eps, **kw)

    @classmethod
    def offset(cls, s: float, n: int = 3, eps: float = 0.02, **kw) -> "BeamSpec":
        """Beam along the last axis with impact parameter s along the first."""
        x = np.zeros(n)
        x[0] = s
        v = np.zeros(n)
        v[-1] = 1.0
        return cls(tuple(x), tuple(v), eps, **kw)

    def with_eps(self, eps: float) -> "BeamSpec":
        return BeamSpec(self.x0p, self.v0p, eps, self.profile, self.n_dir, self.n_pos)

    @property
    def direction(self) -> np.ndarray:
        v = np.asarray(self.v0p, dtype=float)
        return v / np.linalg.norm(v)

    @property
    def foot(self) -> np.ndarray:
        v = self.direction
        x = np.asarray(self.x0p, dtype=float)
        return x - (x @ v) * v

    def to_dict(self) -> dict:
        return {"x0p": list(map(float, self.x0p)), "v0p": list(map(float, self.v0p)), "eps": self.eps,
                "profile": self.profile, "n_dir": list(self.n_dir), "n_pos": list(self.n_pos)}


def _cap_nodes(v0, radius, n_rad, n_ang, n):
    """Directions with |v - v0| < radius: midpoint nodes and surface weights."""
    th_max = 2.0 * np.arcsin(min(1.0, radius / 2.0))
    if n == 2:
        th = -th_max + (np.arange(2 * n_rad) + 0.5) * (th_max / n_rad)
        e = make_frame(v0)[0]
        nodes = np.cos(th)[:, None] * v0 + np.sin(th)[:, None] * e
        return nodes, np.full(len(th), th_max / n_rad), 2.0 * np.abs(np.sin(th / 2.0)) / radius
    dth = th_max / n_rad
    th = (np.arange(n_rad) + 0.5) * dth
    ph = (np.arange(n_ang) + 0.5) * (2.0 * np.pi / n_ang)
    T, P = np.meshgrid(th, ph, indexing="ij")
    e1, e2 = make_frame(v0)
    nodes = (np.cos(T)[..., None] * v0 + np.sin(T)[..., None]
             * (np.cos(P)[..., None] * e1 + np.sin(P)[..., None] * e2)).reshape(-1, 3)
    w = (np.sin(T) * dth * (2.0 * np.pi / n_ang)).ravel()
    return nodes, w, (2.0 * np.sin(T / 2.0)).ravel() / radius


def _disc_nodes(radius, n_rad, n_ang, n):
    """Transverse offsets with |d| < radius in n-1 dimensions."""
    if n == 2:
        s = -radius + (np.arange(2 * n_rad) + 0.5) * (radius / n_rad)
        return s[:, None], np.full(len(s), radius / n_rad), np.abs(s) / radius
    dr = radius / n_rad
    r = (np.arange(n_rad) + 0.5) * dr
    ph = (np.arange(n_ang) + 0.5) * (2.0 * np.pi / n_ang)
    Rr, P = np.meshgrid(r, ph, indexing="ij")
    d = np.stack([Rr * np.cos(P), Rr * np.sin(P)], axis=-1).reshape(-1, 2)
    return d, (Rr * dr * (2.0 * np.pi / n_ang)).ravel(), Rr.ravel() / radius


def sample_beam(spec: BeamSpec, R: float = 2.0, resolution: float = MIN_RESOLUTION) -> BoundaryDistribution:
    """Product-profile beam on F-, normalised to unit L1 norm.

    Directions lie within eps / (2 (1 + R)) of v0p and transverse offsets
    within eps / 2, so |v' - v0p| + |x' - x0p| < eps on the support.
    """
    if not spec.eps > 0:
        raise DomainError("beam width must be positive", eps=spec.eps)
    if spec.eps < 3.0 * resolution:
        raise RefusalError("beam width below resolvable scale", eps=spec.eps,
                           required_min_eps=3.0 * resolution)
    v0 = spec.direction
    n = len(v0)
    x0 = spec.foot
    if np.linalg.norm(x0) + spec.eps >= R:
        raise DomainError("beam support leaves F-", x0p=list(x0), eps=spec.eps, R=R)
    a = spec.eps / (2.0 * (1.0 + R))
    b = spec.eps / 2.0
    vd, wd, ud = _cap_nodes(v0, a, spec.n_dir[0], spec.n_dir[1], n)
    dd, wx, ux = _disc_nodes(b, spec.n_pos[0], spec.n_pos[1], n)
    frames = make_frames(vd)
    base = x0[None, :] - (vd @ x0)[:, None] * vd
    feet = base[:, None, :] + np.einsum("jk,lkn->ljn", dd, frames)
    J = len(dd)
    dirs = np.repeat(vd, J, axis=0)
    weights = np.outer(wd, wx).ravel()
    prof = np.outer(_profile(spec.profile, ud), _profile(spec.profile, ux)).ravel()
    group = np.repeat(np.arange(len(vd)), J)
    rays = RaySet(dirs, feet.reshape(-1, n), weights, group, vd, R, {"beam": spec.to_dict()})
    vals = prof / np.sum(prof * weights)
    return BoundaryDistribution(rays, vals, -1)


def eval_E(x, t, v, v_prime, sigma, R: float = 2.0) -> np.ndarray:
    """Broken-ray attenuation for a scatter at z = x - t v, x in the plane
    orthogonal to v: exp of minus the optical depth from z to the exit point
    x + R v, and from z back along v_prime to F-.  Row-aligned arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
    vp = np.broadcast_to(np.asarray(v_prime, dtype=float), x.shape)
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
    if sigma.is_zero():
        return np.ones(len(x))
    z = x - t[:, None] * v
    out_leg = segment_integral(sigma, z, x + R * v)
    back = R + np.einsum("ij,ij->i", z, vp)
    in_leg = segment_integral(sigma, z, z - back[:, None] * vp)
    return np.exp(-(out_leg + in_leg))


def _exit_depth(sigma, z, v, n_nodes=17):
    """Optical depth from z to infinity along v."""
    reach = 2.0 * sigma.rho + np.linalg.norm(z, axis=1, keepdims=True)
    return segment_integral(sigma, z, z + reach * v, n_nodes)


def ballistic_component(beam: BoundaryDistribution, sigma) -> BoundaryDistribution:
    """The beam translated to F+ and attenuated by the full line integral."""
    tau = line_integral(sigma, beam.rays.feet, beam.rays.dirs)
    return BoundaryDistribution(beam.rays, beam.values * np.exp(-tau), +1)


@dataclass
class _ChordNodes:
    ray: np.ndarray
    t: np.ndarray
    w: np.ndarray
    tau_in: np.ndarray


def _beam_chord_nodes(rays: RaySet, sigma, rho: float, n_t: int) -> _ChordNodes:
    """Simpson nodes on the support chord of each ray plus the optical depth
    accumulated from F- up to each node."""
    if n_t % 2 == 0:
        n_t += 1
    t_in, t_out, hit = chord_intervals(rays.feet, rays.dirs, rho)
    ii = np.flatnonzero(hit)
    L = t_out[ii] - t_in[ii]
    u = np.linspace(0.0, 1.0, n_t)
    t = t_in[ii, None] + L[:, None] * u[None, :]
    simpson = np.ones(n_t)
    simpson[1:-1:2], simpson[2:-1:2] = 4.0, 2.0
    w = L[:, None] * simpson[None, :] / (3.0 * (n_t - 1))
    if sigma.is_zero():
        tau = np.zeros_like(t)
    else:
        pts = rays.feet[ii, None, :] + t[..., None] * rays.dirs[ii, None, :]
        vals = sigma(pts.reshape(-1, rays.n)).reshape(t.shape)
        tau = cumulative_simpson(vals, dx=1.0, axis=1, initial=0.0) * (L / (n_t - 1))[:, None]
    return _ChordNodes(np.repeat(ii, n_t), t.ravel(), w.ravel(), tau.ravel())


def single_density(x0p, v0p, tprime, v, pair: CoefficientPair, R: float = 2.0) -> np.ndarray:
    """Limit density of the single-scattering part at the broken-ray point:
    k(z, v0', v) E(x, t, v, v0') with z = x0' + t' v0', t = -z.v, x = z - (z.v) v."""
    v0 = np.asarray(v0p, dtype=float)
    tprime = np.atleast_1d(np.asarray(tprime, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    z = np.asarray(x0p, dtype=float)[None, :] + tprime[:, None] * v0
    z, v = np.broadcast_arrays(z, v)
    t = -np.einsum("ij,ij->i", z, v)
    x = z + t[:, None] * v
    return pair.kappa.kernel(z, np.broadcast_to(v0, z.shape), v) * eval_E(x, t, v, v0, pair.sigma, R)


def single_component(beam: BoundaryDistribution, pair: CoefficientPair, dirs: DirectionSet,
                     n_t: int = 17, n_leg: int = 17) -> BoundaryDistribution:
    """Once-scattered trace as weighted atoms on F+.

    Each atom is (beam ray, Simpson node t' on its chord, outgoing v_l):
    mass  f w dt' k(z, v', v_l) w_l E, located at the projection of z.
    """
    rays = beam.rays
    L = len(dirs)
    if pair.kappa.is_zero():
        return _atoms(np.zeros((0, rays.n)), np.zeros(0, dtype=int), np.zeros(0), dirs, rays.R)
    cn = _beam_chord_nodes(rays, pair.sigma, pair.grid.rho, n_t)
    z = rays.feet[cn.ray] + cn.t[:, None] * rays.dirs[cn.ray]
    base = beam.values[cn.ray] * rays.weights[cn.ray] * cn.w * np.exp(-cn.tau_in)
    P = len(z)
    zz = np.repeat(z, L, axis=0)
    vv = np.tile(dirs.nodes, (P, 1))
    up = np.repeat(rays.dirs[cn.ray], L, axis=0)
    k = pair.kappa.kernel(zz, up, vv)
    mass = np.repeat(base, L) * k * np.tile(dirs.weights, P)
    live = mass > 0
    if not pair.sigma.is_zero() and live.any():
        mass[live] *= np.exp(-_exit_depth(pair.sigma, zz[live], vv[live], n_leg))
    feet = zz - np.einsum("ij,ij->i", zz, vv)[:, None] * vv
    return _atoms(feet, np.tile(np.arange(L), P), mass, dirs, rays.R)


def _atoms(feet, group, mass, dirs: DirectionSet, R: float) -> BoundaryDistribution:
    rays = RaySet(dirs.nodes[group], feet, np.ones(len(mass)), group, dirs.nodes, R, {"atoms": True})
    return BoundaryDistribution(rays, mass, +1)


def bin_masses(dist: BoundaryDistribution, axis, n_mu: int = 4, n_r: int = 4, r_max: float = 1.0) -> np.ndarray:
    """Coarse histogram of outgoing mass by mu = v.axis and transverse radius."""
    mu = dist.rays.dirs @ np.asarray(axis, dtype=float)
    r = np.linalg.norm(dist.rays.feet, axis=1)
    i = np.clip(((mu + 1.0) / 2.0 * n_mu).astype(int), 0, n_mu - 1)
    j = np.clip((r / r_max * n_r).astype(int), 0, n_r - 1)
    return np.bincount(i * n_r + j, weights=dist.masses, minlength=n_mu * n_r).reshape(n_mu, n_r)


def relative_l1(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.sum(np.abs(b))
    return float(np.sum(np.abs(a - b)) / scale) if scale > 0 else float(np.sum(np.abs(a)))


@dataclass
class AlbedoDecomposition:
    ballistic: BoundaryDistribution
    single: BoundaryDistribution
    multiple: BoundaryDistribution
    tail_bound: float
    grid_single: BoundaryDistribution | None = None
    order_masses: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @property
    def masses(self) -> dict:
        return {"ballistic": self.ballistic.mass(), "single": self.single.mass(),
                "multiple": self.multiple.mass()}

    def total_mass(self) -> float:
        return sum(self.masses.values())

    def to_dict(self) -> dict:
        return {"masses": self.masses, "tail_bound": self.tail_bound,
                "order_masses": self.order_masses, "report": self.report}


def _empty_trace(lattice: Lattice) -> BoundaryDistribution:
    return BoundaryDistribution(lattice.rays, np.zeros(len(lattice.rays)), +1)


def multiple_component(beam: BoundaryDistribution, pair: CoefficientPair, lattice: Lattice,
                       tol: float = 1e-6, max_orders: int = 80):
    """Trace of the Neumann terms of order >= 2 on the transport lattice.

    Returns (multiple trace, tail bound, solution); the solution also holds
    the lattice order-1 term used for cross-checks.
    """
    beam_lat = Lattice(beam.rays, pair.grid.rho, lattice.h, workers=lattice.workers)
    sol = solve_neumann(beam, pair, tol, max_orders, lattice=lattice, input_lattice=beam_lat)
    if len(sol.orders) < 3:
        return _empty_trace(lattice), sol.report.tail_bound, sol
    vals = sum(f.values[:, -1] for f in sol.orders[2:])
    return BoundaryDistribution(lattice.rays, vals, +1), sol.report.tail_bound, sol


def apply_albedo(spec_or_beam, pair: CoefficientPair, lattice: Lattice | None = None,
                 tol: float = 1e-6, R: float = 2.0, out_dirs: DirectionSet | None = None) -> AlbedoDecomposition:
    """Ballistic, single and multiple parts of the albedo image of a beam."""
    beam = sample_beam(spec_or_beam, R) if isinstance(spec_or_beam, BeamSpec) else spec_or_beam
    R = beam.rays.R
    domain = DomainConfig(pair.grid.n, R, pair.grid.rho)
    sub = check_subcritical(pair, domain)
    if not sub.ok:
        raise RefusalError("albedo decomposition needs a subcritical pair", **sub.to_dict())
    ball = ballistic_component(beam, pair.sigma)
    if pair.kappa.is_zero():
        dirs = out_dirs or DirectionSet.default(domain.n)
        empty = _atoms(np.zeros((0, domain.n)), np.zeros(0, dtype=int), np.zeros(0), dirs, R)
        return AlbedoDecomposition(ball, empty, empty, 0.0, None, [ball.mass()],
                                   {"subcritical": sub.to_dict()})
    lattice = lattice or Lattice.transport(domain, h=pair.grid.h)
    dirs = out_dirs or lattice.dirs
    single = single_component(beam, pair, dirs)
    mult, tail, sol = multiple_component(beam, pair, lattice, tol)
    grid_single = sol.orders[1].trace() if len(sol.orders) > 1 else _empty_trace(lattice)
    orders = [ball.mass(), single.mass()] + [f.trace().mass() for f in sol.orders[2:]]
    report = {"subcritical": sub.to_dict(), "neumann": sol.report.to_dict(),
              "grid_single_mass": grid_single.mass()}
    return AlbedoDecomposition(ball, single, mult, tail, grid_single, orders, report)


def kernel_traces(beam: BoundaryDistribution, pair: CoefficientPair, lattice: Lattice):
    """Ballistic and once-scattered outgoing traces written directly as the
    kernel integrals, on the lattice quadrature used by the Neumann solver:

      alpha1 f = exp(-tau(R)) f,
      alpha2 f = int exp(-(tau(R) - tau(s))) (A2 J f)(s) ds   (trapezoid in s).
    """
    beam_lat = Lattice(beam.rays, pair.grid.rho, lattice.h, workers=lattice.workers)
    tau_b = beam_lat.optical_depth(pair.sigma)
    a1 = BoundaryDistribution(beam.rays, beam.values * np.exp(-tau_b[:, -1]), +1)
    from .transport import RayField
    jf = RayField(beam_lat, beam.values[:, None] * np.exp(-tau_b))
    Q = apply_A2(jf, pair.kappa, lattice).values
    tau = lattice.optical_depth(pair.sigma)
    a2 = np.trapezoid(np.exp(tau - tau[:, -1:]) * Q, lattice.t, axis=1)
    return a1, BoundaryDistribution(lattice.rays, a2, +1)


def beta_order2(x0p, v0p, pair: CoefficientPair, out_dirs: DirectionSet, R: float = 2.0,
                omega: DirectionSet | None = None, n_t: int = 9, n_r: int = 13,
                n_leg: int = 17) -> BoundaryDistribution:
    """Twice-scattered trace of a delta beam by direct quadrature of the
    two-collision kernel: first collision at z1 on the beam line, flight
    along omega to z2 = z1 + r omega, second collision into v_l.  Polar
    coordinates about z1 absorb the |z2 - z1|^{1-n} factor."""
    n = pair.grid.n
    omega = omega or DirectionSet.default(n, 2)
    v0 = np.asarray(v0p, dtype=float)
    v0 = v0 / np.linalg.norm(v0)
    x0 = np.asarray(x0p, dtype=float)
    x0 = x0 - (x0 @ v0) * v0
    line = RaySet(v0[None, :], x0[None, :], np.ones(1), np.zeros(1, dtype=int), v0[None, :], R)
    cn = _beam_chord_nodes(line, pair.sigma, pair.grid.rho, n_t)
    feet_all, group_all, mass_all = [], [], []
    L = len(out_dirs)
    for z1, w1, tau1 in zip(line.feet[cn.ray] + cn.t[:, None] * v0, cn.w, cn.tau_in):
        k1 = pair.kappa.kernel(np.repeat(z1[None], len(omega), 0), np.broadcast_to(v0, (len(omega), n)),
                               omega.nodes)
        use = np.flatnonzero(k1 > 0)
        if not len(use):
            continue
        fan_dirs = omega.nodes[use]
        # parameters measured from z1, so r = t
        _, t_out, _ = chord_intervals(np.repeat(z1[None], len(use), 0), fan_dirs, pair.grid.rho)
        r_hi = np.clip(t_out, 0.0, None)
        m = n_r if n_r % 2 else n_r + 1
        u = np.linspace(0.0, 1.0, m)
        r = r_hi[:, None] * u[None, :]
        simpson = np.ones(m)
        simpson[1:-1:2], simpson[2:-1:2] = 4.0, 2.0
        wr = r_hi[:, None] * simpson[None, :] / (3.0 * (m - 1))
        z2 = z1[None, None, :] + r[..., None] * fan_dirs[:, None, :]
        if pair.sigma.is_zero():
            tau12 = np.zeros_like(r)
        else:
            sv = pair.sigma(z2.reshape(-1, n)).reshape(r.shape)
            tau12 = cumulative_simpson(sv, dx=1.0, axis=1, initial=0.0) * (r_hi / (m - 1))[:, None]
        a = (w1 * np.exp(-tau1) * omega.weights[use] * k1[use])[:, None] * wr * np.exp(-tau12)
        z2f = z2.reshape(-1, n)
        af = a.ravel()
        keep = af > 0
        z2f, af = z2f[keep], af[keep]
        wf = np.repeat(fan_dirs, m, axis=0)[keep]
        P = len(z2f)
        zz = np.repeat(z2f, L, axis=0)
        vv = np.tile(out_dirs.nodes, (P, 1))
        k2 = pair.kappa.kernel(zz, np.repeat(wf, L, axis=0), vv)
        mass = np.repeat(af, L) * k2 * np.tile(out_dirs.weights, P)
        live = mass > 0
        if not pair.sigma.is_zero() and live.any():
            mass[live] *= np.exp(-_exit_depth(pair.sigma, zz[live], vv[live], n_leg))
        feet_all.append(zz - np.einsum("ij,ij->i", zz, vv)[:, None] * vv)
        group_all.append(np.tile(np.arange(L), P))
        mass_all.append(mass)
    if not mass_all:
        return _atoms(np.zeros((0, n)), np.zeros(0, dtype=int), np.zeros(0), out_dirs, R)
    return _atoms(np.concatenate(feet_all), np.concatenate(group_all), np.concatenate(mass_all), out_dirs, R)


@dataclass
class ColumnReport:
    values: list
    bound: float
    margins: list
    passed: bool
    exponent: float | None = None
    exponent_levels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"values": self.values, "bound": self.bound, "margins": self.margins,
                "passed": self.passed, "exponent": self.exponent, "exponent_levels": self.exponent_levels}


def column_integral(pair: CoefficientPair, x, v, omega: DirectionSet | None = None, n_r: int = 33) -> float:
    """Integral over outgoing (x, v) of the unattenuated two-collision kernel
    of a point source at (x, v'): sum over omega of k(x, v', omega) times the
    integral of sigma_p along the ray from x in direction omega."""
    n = pair.grid.n
    omega = omega or DirectionSet.default(n, 2)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    k1 = pair.kappa.kernel(np.repeat(x[None], len(omega), 0), np.broadcast_to(v, (len(omega), n)), omega.nodes)
    _, t_out, _ = chord_intervals(np.repeat(x[None], len(omega), 0), omega.nodes, pair.grid.rho)
    r_hi = np.clip(t_out, 0.0, None)
    m = n_r if n_r % 2 else n_r + 1
    r = r_hi[:, None] * np.linspace(0.0, 1.0, m)[None, :]
    pts = x[None, None, :] + r[..., None] * omega.nodes[:, None, :]
    if pair.kappa.tabulated:
        from .coefficients import sigma_p
        sp = sigma_p(pair.kappa, pts.reshape(-1, n), np.repeat(omega.nodes, m, axis=0),
                     pair.kappa.table_dirs).reshape(r.shape)
    else:
        sp = pair.kappa.c(pts.reshape(-1, n)).reshape(r.shape)
    simpson = np.ones(m)
    simpson[1:-1:2], simpson[2:-1:2] = 4.0, 2.0
    line = (sp * simpson[None, :]).sum(axis=1) * r_hi / (3.0 * (m - 1))
    return float(np.sum(omega.weights * k1 * line))


def column_mass_near_singularity(pair: CoefficientPair, x, v, a: float, out_dirs: DirectionSet | None = None,
                                 n_d: int = 6, n_theta: int = 12, n_phi: int = 24) -> float:
    """Mass of the two-collision column of a point source at (x, v') inside
    the set {|x_out - proj_v(x)| < a} of F+, for every outgoing v (n = 3).

    For each v the kernel behaves like 1/d near the projected source point;
    writing the line variable as d tan(phi) removes the singularity.
    """
    if pair.grid.n != 3:
        raise DomainError("column singularity scan is implemented for n = 3")
    out_dirs = out_dirs or DirectionSet.default(3)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    gd, gw = np.polynomial.legendre.leggauss(n_d)
    d = 0.5 * a * (gd + 1.0)
    wd = 0.5 * a * gw
    th = (np.arange(n_theta) + 0.5) * (2.0 * np.pi / n_theta)
    gp, gpw = np.polynomial.legendre.leggauss(n_phi)
    ph = 0.5 * np.pi * gp
    wph = 0.5 * np.pi * gpw
    total = 0.0
    for vl, wl, fr in zip(out_dirs.nodes, out_dirs.weights, out_dirs.frames):
        D, T, PH = np.meshgrid(d, th, ph, indexing="ij")
        xi = D[..., None] * (np.cos(T)[..., None] * fr[0] + np.sin(T)[..., None] * fr[1])
        s = D * np.tan(PH)
        y = x + xi + s[..., None] * vl
        dy = y - x
        om = dy / np.linalg.norm(dy, axis=-1, keepdims=True)
        yf, of = y.reshape(-1, 3), om.reshape(-1, 3)
        k1 = pair.kappa.kernel(np.repeat(x[None], len(yf), 0), np.broadcast_to(v, yf.shape), of)
        k2 = pair.kappa.kernel(yf, of, np.broadcast_to(vl, yf.shape))
        w = (wd[:, None, None] * (2.0 * np.pi / n_theta) * wph[None, None, :]).repeat(n_theta, 1)
        total += wl * float(np.sum(w.ravel() * k1 * k2))
    return total


def beta_column_check(pair: CoefficientPair, samples, R: float = 2.0, slack: float = 0.05,
                      exponent_point=None, areas=None) -> ColumnReport:
    """Column integrals of the two-collision kernel against R sup(sigma_p)^2,
    and optionally the log-log exponent of the column mass captured by
    shrinking discs (of area A) around its singular point."""
    sp = pair.kappa.sup_sigma_p()
    bound = R * sp**2
    values = [column_integral(pair, x, v) for x, v in samples]
    margins = [bound * (1 + slack) - c for c in values]
    rep = ColumnReport(values, bound, margins, all(m >= 0 for m in margins))
    if exponent_point is not None and not pair.kappa.is_zero():
        x, v = exponent_point
        areas = areas or [0.04 * 2.0**-j for j in range(4)]
        masses = [column_mass_near_singularity(pair, x, v, np.sqrt(A / np.pi)) for A in areas]
        rep.exponent = float(np.polyfit(np.log(areas), np.log(masses), 1)[0])
        rep.exponent_levels = [{"area": A, "mass": m} for A, m in zip(areas, masses)]
    return rep
