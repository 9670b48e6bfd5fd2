"""Stability estimates for the albedo operator.

Test functions concentrating on the single-scattering segment of a beam,
the three-part pairing of a test function with the albedo difference of two
coefficient pairs, a bracket for the operator distance, and numerical checks
of the line and segment estimates and of their Hölder consequences.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .albedo import BeamSpec, apply_albedo, ballistic_component, eval_E, sample_beam, single_component
from .coefficients import (AbsorptionField, CoefficientPair, ScatteringField, check_subcritical, sigma_p,
                           smooth_bump)
from .errors import DomainError, RefusalError
from .geometry import BoundaryDistribution, DirectionSet, DomainConfig, chord_interval
from .inversion import richardson
from .transport import Lattice, line_integral
from .xray import sobolev_norm

PARALLEL_TOL = 1e-12


def skew_distance(x, v, x0p, v0p):
    """Distance between the lines x + t v and x0p + t' v0p, with the minimising
    (t, t').  Accepts single points or row-aligned arrays."""
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    x0 = np.asarray(x0p, dtype=float)
    v0 = np.asarray(v0p, dtype=float)
    v0 = v0 / np.linalg.norm(v0)
    c = v @ v0
    den = 1.0 - c * c
    if np.any(den <= PARALLEL_TOL):
        raise DomainError("skew distance is undefined for parallel lines")
    dx = x - x0
    t = -np.einsum("ij,ij->i", dx, v - c[:, None] * v0) / den
    tp = np.einsum("ij,ij->i", dx, v0[None, :] - c[:, None] * v) / den
    d = np.linalg.norm(x + t[:, None] * v - x0 - tp[:, None] * v0, axis=1)
    if single:
        return float(d[0]), float(t[0]), float(tp[0])
    return d, t, tp


def _psi(u):
    out = np.zeros_like(u)
    m = u > 0
    out[m] = np.exp(-1.0 / u[m])
    return out


def smoothstep(u) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    a, b = _psi(u), _psi(1.0 - u)
    return a / (a + b)


@dataclass
class TestFunction:
    """phi = cutoff * rho_m(t', v) on F+, feet y (orthogonal to v) and unit v.

    The cutoff is 1 on the inner set and vanishes off the outer set:
      outer: |y| < R - delta, |v - (v.v0)v0| > delta, d < 1/l
      inner: |y| <= R - delta - 1/l, |v - (v.v0)v0| >= delta + 1/l, d <= 1/(2l)
    """

    __test__ = False

    x0p: np.ndarray
    v0p: np.ndarray
    delta: float
    m: int
    l: int
    R: float = 2.0
    sign: object = None

    def __post_init__(self):
        if not 0 < self.delta < min(self.R, 1.0):
            raise DomainError("cut parameter must satisfy 0 < delta < min(R, 1)", delta=self.delta, R=self.R)
        if not self.l > 1.0 / (self.R - self.delta) + self.delta:
            raise DomainError("tube index too small", l=self.l, required=1.0 / (self.R - self.delta) + self.delta)
        self.v0p = np.asarray(self.v0p, dtype=float) / np.linalg.norm(self.v0p)
        x0 = np.asarray(self.x0p, dtype=float)
        self.x0p = x0 - (x0 @ self.v0p) * self.v0p

    def _parts(self, y, v):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        a = np.linalg.norm(y, axis=1)
        b = np.linalg.norm(v - (v @ self.v0p)[:, None] * self.v0p, axis=1)
        ok = b > 1e-6
        d = np.full(len(y), np.inf)
        tp = np.zeros(len(y))
        if np.any(ok):
            d[ok], _, tp[ok] = skew_distance(y[ok], v[ok], self.x0p, self.v0p)
        return a, b, d, tp

    def cutoff(self, y, v) -> np.ndarray:
        a, b, d, _ = self._parts(y, v)
        inv = 1.0 / self.l
        return (smoothstep((self.R - self.delta - a) / inv) * smoothstep((b - self.delta) / inv)
                * smoothstep((inv - d) / (0.5 * inv)))

    def inner(self, y, v) -> np.ndarray:
        a, b, d, _ = self._parts(y, v)
        inv = 1.0 / self.l
        return (a <= self.R - self.delta - inv) & (b >= self.delta + inv) & (d <= 0.5 * inv)

    def outer(self, y, v) -> np.ndarray:
        a, b, d, _ = self._parts(y, v)
        return (a < self.R - self.delta) & (b > self.delta) & (d < 1.0 / self.l)

    def rho_m(self, tp, v) -> np.ndarray:
        if self.sign is None:
            return np.ones(len(np.atleast_1d(tp)))
        return self.sign(np.atleast_1d(tp), np.atleast_2d(v))

    def __call__(self, y, v) -> np.ndarray:
        a, b, d, tp = self._parts(y, v)
        cut = self.cutoff(y, v)
        out = np.zeros(len(cut))
        nz = cut > 0
        if np.any(nz):
            out[nz] = cut[nz] * self.rho_m(tp[nz], np.atleast_2d(v)[nz])
        return out

    def support_area(self, rays) -> float:
        """Quadrature area of supp phi over the rays of an F+ grid."""
        return float(np.sum(rays.weights[self.cutoff(rays.feet, rays.dirs) > 0]))

    def to_dict(self) -> dict:
        return {"x0p": self.x0p.tolist(), "v0p": self.v0p.tolist(), "delta": self.delta, "m": self.m,
                "l": self.l, "R": self.R, "sign": "none" if self.sign is None else "model"}


def kernel_difference(pair: CoefficientPair, pair_t: CoefficientPair):
    """(z, v', v) -> (k - k~)(z, v', v), row-aligned."""
    def diff(z, vp, v):
        return pair.kappa.kernel(z, vp, v) - pair_t.kappa.kernel(z, vp, v)
    return diff


def make_test_function(beam: BeamSpec, diff, delta: float = 0.1, m: int = 4, l: int = 8, R: float = 2.0,
                       exact: bool = False, dirs: DirectionSet | None = None, rho: float = 1.0) -> TestFunction:
    """Test function of a beam with rho_m approximating sign(diff) on its line.

    rho_m = 2 S(m D / D_max) - 1 for D = diff(x0' + t' v0', v0', v): it is -1
    where D <= 0 and +1 on {D >= D_max / m}, so the transition shrinks as 1/m.
    `exact` uses the sign itself.  diff may be None (rho_m = 1).  t' is
    clamped to the support chord before D is evaluated.
    """
    if m < 1:
        raise DomainError("sign index must be positive", m=m)
    v0, x0 = beam.direction, beam.foot
    if diff is None:
        return TestFunction(x0, v0, delta, m, l, R)
    dirs = dirs or DirectionSet.default(len(v0))
    ch = chord_interval(x0, v0, rho) or (-rho, rho)
    tq = np.linspace(ch[0], ch[1], 33)
    z = np.repeat(x0[None] + tq[:, None] * v0, len(dirs), 0)
    V = np.tile(dirs.nodes, (len(tq), 1))
    dmax = float(np.max(np.abs(diff(z, np.broadcast_to(v0, z.shape), V)))) or 1.0

    # the sign only matters on the support chord; outside it the nearest
    # chord point is used so that scatter points on the boundary keep theirs
    lo, hi = ch[0] + 1e-9 * rho, ch[1] - 1e-9 * rho

    def sign(tp, v):
        zz = x0[None] + np.clip(tp, lo, hi)[:, None] * v0
        D = diff(zz, np.broadcast_to(v0, zz.shape), v)
        if exact:
            return np.where(D > 0, 1.0, -1.0)
        return 2.0 * smoothstep(m * D / dmax) - 1.0

    return TestFunction(x0, v0, delta, m, l, R, sign)


def _identical(pair: CoefficientPair, pair_t: CoefficientPair) -> bool:
    if pair is pair_t:
        return True
    a, b = pair.kappa, pair_t.kappa
    same_k = (np.array_equal(a.amplitude, b.amplitude) and a.phase.params() == b.phase.params()
              and (a.table is None) == (b.table is None)
              and (a.table is None or np.array_equal(a.table, b.table)))
    return same_k and np.array_equal(pair.sigma.values, pair_t.sigma.values)


class Responder:
    """Albedo decompositions of beams for one pair on a fixed lattice, memoised."""

    def __init__(self, pair: CoefficientPair, lattice: Lattice | None = None, R: float = 2.0,
                 dirs: DirectionSet | None = None, tol: float = 1e-6):
        self.pair = pair
        self.R = R
        domain = DomainConfig(pair.grid.n, R, pair.grid.rho)
        self.lattice = lattice or Lattice.transport(domain, h=pair.grid.h)
        self.dirs = dirs or self.lattice.dirs
        self.tol = tol
        self._cache = {}

    def __call__(self, spec: BeamSpec):
        if spec not in self._cache:
            self._cache[spec] = apply_albedo(spec, self.pair, self.lattice, self.tol, self.R, self.dirs)
        return self._cache[spec]

    def light(self, spec: BeamSpec):
        """Ballistic and single parts only."""
        beam = sample_beam(spec, self.R)
        return ballistic_component(beam, self.pair.sigma), single_component(beam, self.pair, self.dirs)


def _diff_norm(a: BoundaryDistribution, b: BoundaryDistribution) -> float:
    if len(a.values) == len(b.values):
        return float(np.sum(np.abs(a.masses - b.masses)))
    # different supports (one side empty): mutually singular parts
    return float(np.sum(np.abs(a.masses)) + np.sum(np.abs(b.masses)))


def _pair_with(phi, dist: BoundaryDistribution) -> float:
    if not len(dist.values):
        return 0.0
    return float(np.sum(phi(dist.rays.feet, dist.rays.dirs) * dist.masses))


@dataclass
class Column:
    """L1 norms of the component differences for one beam."""
    beam: dict
    ballistic: float
    single: float
    multiple: float
    tails: float

    @property
    def lower(self) -> float:
        return self.ballistic + self.single + self.multiple

    @property
    def upper(self) -> float:
        return self.lower + self.tails


def column(spec: BeamSpec, resp: Responder, resp_t: Responder) -> Column:
    a, b = resp(spec), resp_t(spec)
    same = _identical(resp.pair, resp_t.pair)
    return Column(spec.to_dict(), _diff_norm(a.ballistic, b.ballistic), _diff_norm(a.single, b.single),
                  _diff_norm(a.multiple, b.multiple), 0.0 if same else a.tail_bound + b.tail_bound)


def pairing(phi, spec: BeamSpec, resp: Responder, resp_t: Responder, eps=(0.08, 0.04, 0.02)) -> dict:
    """I1 + I2 + I3 decomposition of  int phi (A - A~) f_eps  over F+.

    Ballistic and single parts are paired at every eps and extrapolated to
    eps = 0; the multiple part is paired at the smallest eps.  `total` pairs
    phi with the whole outgoing distributions independently of the split.
    """
    eps = sorted(eps, reverse=True)
    spec = spec.with_eps(eps[-1])
    a, b = resp(spec), resp_t(spec)
    I1 = _pair_with(phi, a.ballistic) - _pair_with(phi, b.ballistic)
    I2 = _pair_with(phi, a.single) - _pair_with(phi, b.single)
    I3 = _pair_with(phi, a.multiple) - _pair_with(phi, b.multiple)

    def whole(dec):
        parts = [dec.ballistic, dec.single, dec.multiple]
        vals = [phi(p.rays.feet, p.rays.dirs) * p.masses for p in parts if len(p.values)]
        return float(np.sum(np.concatenate(vals)))

    total = whole(a) - whole(b)
    col = column(spec, resp, resp_t)
    out = {"I1": I1, "I2": I2, "I3": I3, "total": total, "norm": col.lower, "eps": eps[-1]}
    if len(eps) == 3:
        i1, i2 = [], []
        for e in eps:
            (ba, sa), (bb, sb) = resp.light(spec.with_eps(e)), resp_t.light(spec.with_eps(e))
            i1.append(_pair_with(phi, ba) - _pair_with(phi, bb))
            i2.append(_pair_with(phi, sa) - _pair_with(phi, sb))
        out["I1_limit"] = float(richardson(eps, i1))
        out["I2_limit"] = float(richardson(eps, i2))
    return out


def _line_quadrature(spec: BeamSpec, rho: float, n_t: int = 33):
    v0, x0 = spec.direction, spec.foot
    ch = chord_interval(x0, v0, rho)
    if ch is None:
        return np.zeros((0, len(v0))), np.zeros(0)
    t = np.linspace(ch[0], ch[1], n_t)
    w = np.ones(n_t)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= (ch[1] - ch[0]) / (3.0 * (n_t - 1))
    return x0[None] + t[:, None] * v0, w


def i21_limit(phi, spec: BeamSpec, pair: CoefficientPair, pair_t: CoefficientPair,
              dirs: DirectionSet | None = None, R: float = 2.0, n_t: int = 33, absolute: bool = False) -> float:
    """Limit of the single-scattering pairing: int int (k - k~) phi E dt' dv,
    phi taken at the exit of the broken ray.  `absolute` replaces the
    integrand by |k - k~| E (phi ignored) for the segment estimate."""
    dirs = dirs or DirectionSet.default(pair.grid.n)
    z, wt = _line_quadrature(spec, pair.grid.rho, n_t)
    if not len(z):
        return 0.0
    v0 = spec.direction
    L = len(dirs)
    zz = np.repeat(z, L, 0)
    V = np.tile(dirs.nodes, (len(z), 1))
    v0s = np.broadcast_to(v0, zz.shape)
    D = pair.kappa.kernel(zz, v0s, V) - pair_t.kappa.kernel(zz, v0s, V)
    t = -np.einsum("ij,ij->i", zz, V)
    x = zz + t[:, None] * V
    E = eval_E(x, t, V, v0, pair.sigma, R)
    f = np.abs(D) * E if absolute else D * E * phi(x, V)
    return float(np.sum(f.reshape(len(z), L) * wt[:, None] * dirs.weights[None, :]))


def sup_E_gap(sigma, sigma_t, v0, dirs: DirectionSet, stride: int = 2, R: float = 2.0) -> float:
    """Sampled sup over scatter points z and directions v of |E - E~|."""
    if np.array_equal(sigma.values, sigma_t.values):
        return 0.0
    g = sigma.grid
    idx = np.arange(0, g.N, stride)
    pts = g.points().reshape(*g.shape, g.n)[np.ix_(idx, idx, idx)].reshape(-1, g.n)
    pts = pts[np.linalg.norm(pts, axis=1) <= g.rho]
    L = len(dirs)
    zz = np.repeat(pts, L, 0)
    V = np.tile(dirs.nodes, (len(pts), 1))
    t = -np.einsum("ij,ij->i", zz, V)
    x = zz + t[:, None] * V
    return float(np.max(np.abs(eval_E(x, t, V, v0, sigma, R) - eval_E(x, t, V, v0, sigma_t, R))))


def default_sweep(n: int = 3, eps: float = 0.02, offsets=(0.0, 0.3, 0.6, 0.85)):
    """Beam families for the distance bracket: offsets along one transverse
    axis for each of two directions."""
    fams = []
    for axis in (n - 1, 0):
        v = np.zeros(n)
        v[axis] = 1.0
        other = (axis + 1) % n
        fam = []
        for s in offsets:
            x = np.zeros(n)
            x[other] = s
            fam.append(BeamSpec(tuple(x), tuple(v), eps))
        fams.append(fam)
    return fams


def _slack(values) -> float:
    """Possible excess of the true maximum over the sampled one along a family,
    from the second difference next to the sampled maximum."""
    c = np.asarray(values, dtype=float)
    if len(c) < 3:
        return 0.0
    j = int(np.clip(np.argmax(c), 1, len(c) - 2))
    return abs(c[j - 1] - 2.0 * c[j] + c[j + 1]) / 8.0


def operator_distance(resp: Responder, resp_t: Responder, sweep=None) -> dict:
    """Bracket for the L1 operator distance of the two albedo operators.

    lower: max over swept unit-mass beams of |(A - A~) f_eps|.  upper: max of
    the same columns plus both Neumann tail bounds, plus a sweep-density
    slack per family.  Beams may be given as a flat list or as families.
    """
    sweep = sweep or default_sweep(resp.pair.grid.n)
    if isinstance(sweep[0], BeamSpec):
        sweep = [sweep]
    if _identical(resp.pair, resp_t.pair):
        return {"lower": 0.0, "upper": 0.0, "slack": 0.0, "columns": []}
    cols, lower, upper, slack = [], 0.0, 0.0, 0.0
    for fam in sweep:
        fc = [column(s, resp, resp_t) for s in fam]
        cols.extend(fc)
        lower = max(lower, max(c.lower for c in fc))
        upper = max(upper, max(c.upper for c in fc))
        slack = max(slack, _slack([c.upper for c in fc]))
    return {"lower": lower, "upper": max(upper + slack, lower), "slack": slack,
            "columns": [{**c.beam, "lower": c.lower, "upper": c.upper} for c in cols]}


@dataclass
class StabilityReport:
    rows: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    FIELDS = ("inequality", "cell", "lhs", "rhs", "margin", "tolerance", "passed", "delta", "eps", "p",
              "r", "r_tilde", "theta", "eta")

    def add(self, inequality: str, cell, lhs: float, rhs: float, tolerance: float, **params):
        margin = rhs - lhs
        self.rows.append({"inequality": inequality, "cell": cell, "lhs": float(lhs), "rhs": float(rhs),
                          "margin": float(margin), "tolerance": float(tolerance),
                          "passed": bool(margin >= -tolerance), **params})

    @property
    def ok(self) -> bool:
        return all(r["passed"] for r in self.rows) and all(f.get("passed", True) for f in self.fits.values())

    def to_dict(self) -> dict:
        return {"rows": self.rows, "distances": self.distances, "fits": self.fits, "ok": self.ok}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r.get(k, "") for k in self.FIELDS})
        return buf.getvalue()

    def extend(self, other: "StabilityReport"):
        self.rows += other.rows
        self.distances += other.distances
        self.fits.update(other.fits)
        return self


def _require_3d(pair: CoefficientPair):
    if pair.grid.n < 3:
        raise RefusalError("stability estimates need n >= 3", n=pair.grid.n)


def verify_distance_bounds(resp: Responder, resp_t: Responder, spec: BeamSpec, sweep=None,
                           rel_tol: float = 0.02, cell=0, stride: int = 2) -> StabilityReport:
    """Line transmission gap and weighted segment estimate for one beam line.

    rhs uses the upper distance over `sweep` (default: the beam itself).
    A row passes when margin >= -rel_tol * rhs.
    """
    pair, pair_t = resp.pair, resp_t.pair
    _require_3d(pair)
    R = resp.R
    dist = operator_distance(resp, resp_t, sweep or [spec])
    up = dist["upper"]
    v0, x0 = spec.direction, spec.foot
    tau = line_integral(pair.sigma, x0[None], v0[None])[0]
    tau_t = line_integral(pair_t.sigma, x0[None], v0[None])[0]
    rep = StabilityReport(distances=[{"cell": cell, **{k: dist[k] for k in ("lower", "upper", "slack")}}])
    rep.add("line", cell, abs(np.exp(-tau) - np.exp(-tau_t)), up, rel_tol * up, eps=spec.eps)
    lhs = i21_limit(None, spec, pair, pair_t, resp.dirs, R, absolute=True)
    z, _ = _line_quadrature(spec, pair.grid.rho)
    sp = float(np.max(sigma_p(pair_t.kappa, z, v0, resp.dirs))) if len(z) else 0.0
    gap = sup_E_gap(pair.sigma, pair_t.sigma, v0, resp.dirs, stride, R)
    rhs = 2.0 * R * sp * gap + up
    rep.add("segment", cell, lhs, rhs, rel_tol * rhs, eps=spec.eps)
    return rep


def multiplicative_perturbation(pair: CoefficientPair, sigma_factor=None, c_factor=None, label=None):
    """Pair with sigma * sigma_factor and c * c_factor (grid arrays)."""
    s = pair.sigma.values if sigma_factor is None else pair.sigma.values * sigma_factor
    c = pair.kappa.amplitude if c_factor is None else pair.kappa.amplitude * c_factor
    return CoefficientPair(AbsorptionField(pair.grid, s), ScatteringField(pair.grid, c, pair.kappa.phase),
                           label or pair.label + "~", dict(pair.params))


def perturbation_grid(pair: CoefficientPair, n_sigma: int = 10, n_k: int = 10, seed: int = 0,
                      sigma_amp: float = 0.3, c_amp: float = 0.5):
    """Random smooth multiplicative perturbations (1 + a bump) of sigma and of c.

    Factors stay in [1 - amp, 1 + amp]; with c <= sigma / 2 this keeps the
    pair admissible and absorption dominated.
    """
    rng = np.random.default_rng(seed)
    g = pair.grid
    out = []
    for kind, count, amp in (("sigma", n_sigma, sigma_amp), ("k", n_k, c_amp)):
        for i in range(count):
            c = rng.normal(size=g.n)
            c *= rng.uniform(0.0, 0.5 * g.rho) / max(np.linalg.norm(c), 1e-12)
            a = rng.uniform(-amp, amp)
            f = 1.0 + a * smooth_bump(g, tuple(c), 0.5 * g.rho)
            p = (multiplicative_perturbation(pair, sigma_factor=f) if kind == "sigma"
                 else multiplicative_perturbation(pair, c_factor=f))
            out.append((kind, i, {"center": c.tolist(), "amplitude": a}, p))
    return out


def k_l1_norm(kappa_a, kappa_b, dirs: DirectionSet | None = None) -> float:
    """|k - k~| in L1(space x V x V) on the grid (separable kernels)."""
    g = kappa_a.grid
    if kappa_a.phase.params() == kappa_b.phase.params():
        from .geometry import sphere_area
        return float(np.sum(np.abs(kappa_a.amplitude - kappa_b.amplitude)) * g.h**g.n * sphere_area(g.n))
    dirs = dirs or DirectionSet.default(g.n)
    Pa = kappa_a.phase_matrix(dirs.nodes, dirs.nodes)
    Pb = kappa_b.phase_matrix(dirs.nodes, dirs.nodes)
    ww = np.outer(dirs.weights, dirs.weights)
    tot = 0.0
    for ca, cb in zip(kappa_a.amplitude.ravel(), kappa_b.amplitude.ravel()):
        if ca or cb:
            tot += np.sum(np.abs(ca * Pa - cb * Pb) * ww)
    return float(tot * g.h**g.n)


def holder_exponents(n: int, r_tilde: float, s: float = -0.5, r: float | None = None) -> dict:
    r = r_tilde / 2.0 if r is None else r
    if not 0 < r < r_tilde:
        raise DomainError("need 0 < r < r_tilde", r=r, r_tilde=r_tilde)
    if not -0.5 <= s < n / 2.0 + r_tilde:
        raise DomainError("Sobolev index out of range", s=s)
    den = n + 1 + 2.0 * r_tilde
    return {"sigma": (n + 2.0 * (r_tilde - s)) / den, "k": 2.0 * (r_tilde - r) / den, "r": r, "s": s}


def check_membership(pair: CoefficientPair, r_tilde: float, M: float) -> dict:
    n = pair.grid.n
    hs = sobolev_norm(pair.sigma, n / 2.0 + r_tilde)
    sp = pair.kappa.sup_sigma_p()
    if not (hs <= M and sp <= M):
        raise RefusalError("pair outside the regularity class", h_norm=hs, sup_sigma_p=sp, M=M)
    return {"h_norm": hs, "sup_sigma_p": sp}


def verify_holder_exponents(pair: CoefficientPair, zeta, kappa_pert, etas=(0.4, 0.2, 0.1, 0.05),
                            r_tilde: float = 0.51, r: float | None = None, s: float = -0.5, M: float = 100.0,
                            sweep=None, lattice: Lattice | None = None, R: float = 2.0, fit_tol: float = 0.15,
                            line: BeamSpec | None = None) -> StabilityReport:
    """Hölder exponents of the sigma and k estimates over the family
    sigma~ = sigma + eta zeta, c~ = c + eta kappa_pert.

    Slopes of log(lhs) against log(upper distance) are fitted over the eta
    levels and must reach theta - fit_tol.  Raw rows use the constant
    measured at the largest eta.
    """
    _require_3d(pair)
    n = pair.grid.n
    th = holder_exponents(n, r_tilde, s, r)
    check_membership(pair, r_tilde, M)
    resp = Responder(pair, lattice, R)
    sweep = sweep or default_sweep(n)
    line = line or (sweep[0][0] if isinstance(sweep[0], list) else sweep[0])
    zeta = np.zeros(pair.grid.shape) if zeta is None else np.asarray(zeta, dtype=float)
    kp = np.zeros(pair.grid.shape) if kappa_pert is None else np.asarray(kappa_pert, dtype=float)
    rep = StabilityReport()
    recs = []
    for eta in etas:
        pt = CoefficientPair(AbsorptionField(pair.grid, pair.sigma.values + eta * zeta),
                             ScatteringField(pair.grid, pair.kappa.amplitude + eta * kp, pair.kappa.phase),
                             f"{pair.label}+{eta}", dict(pair.params))
        check_membership(pt, r_tilde, M)
        sub = check_subcritical(pt, DomainConfig(n, R, pair.grid.rho))
        if not sub.ok:
            raise RefusalError("perturbed pair is not subcritical", eta=eta, **sub.to_dict())
        resp_t = Responder(pt, resp.lattice, R, resp.dirs)
        dist = operator_distance(resp, resp_t, sweep)
        d_sig = sobolev_norm(pair.sigma.values - pt.sigma.values, s, pair.grid.h)
        z, w = _line_quadrature(line, pair.grid.rho)
        L = len(resp.dirs)
        zz = np.repeat(z, L, 0)
        V = np.tile(resp.dirs.nodes, (len(z), 1))
        v0s = np.broadcast_to(line.direction, zz.shape)
        dk = np.abs(pair.kappa.kernel(zz, v0s, V) - pt.kappa.kernel(zz, v0s, V)).reshape(len(z), L)
        d_line = float(np.sum(dk * w[:, None] * resp.dirs.weights[None, :]))
        d_k = k_l1_norm(pair.kappa, pt.kappa)
        recs.append({"eta": eta, "lower": dist["lower"], "upper": dist["upper"], "sigma": d_sig,
                     "k_line": d_line, "k_l1": d_k})
        rep.distances.append({"cell": f"eta={eta}", **{k: dist[k] for k in ("lower", "upper", "slack")}})
    D = np.array([q["upper"] for q in recs])
    for key, theta, name, extra in (("sigma", th["sigma"], "sigma-Hs", False),
                                    ("k_line", th["k"], "k-line", True), ("k_l1", th["k"], "k-L1", True)):
        lhs = np.array([q[key] for q in recs])
        if np.all(lhs > 0) and np.all(D > 0):
            slope = float(np.polyfit(np.log(D), np.log(lhs), 1)[0])
        else:
            slope = float("nan")
        rep.fits[name] = {"slope": slope, "theta": theta, "passed": bool(slope >= theta - fit_tol)
                          if np.isfinite(slope) else not np.any(lhs > 0)}
        j = int(np.argmax([q["eta"] for q in recs]))
        shape = D**theta * ((1.0 + D ** (1.0 - theta)) if extra else 1.0)
        C = lhs[j] / shape[j] if shape[j] > 0 else 0.0
        rep.fits[name]["constant"] = float(C)
        for q, val, sh in zip(recs, lhs, shape):
            rhs = C * sh
            rep.add(name, f"eta={q['eta']}", val, rhs, fit_tol * rhs, r=th["r"], r_tilde=r_tilde,
                    theta=theta, eta=q["eta"])
    return rep
