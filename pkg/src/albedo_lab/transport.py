"""Transport operators on ray lattices: the boundary lift J, the attenuated
backward integral T1^{-1}, the scattering integral A2, K = T1^{-1} A2 and
the Neumann series for (I + K) f = J f_-.

Phase-space functions are stored along oriented lines (a RaySet) at a
shared set of t-nodes spanning [-R, R].  The interior nodes are uniform on
[-tau, tau] where tau just covers the support ball; fields are constant
along a line outside the support, so the trapezoid weights remain exact
there.  A2 is applied by depositing angular moments onto a padded Cartesian
grid and gathering them back onto the output lines with a normalisation
that conserves mass exactly.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_simpson

from .coefficients import AbsorptionField, CoefficientPair, ScatteringField, check_subcritical
from .errors import DomainError, RefusalError, TruncationError
from .geometry import (BoundaryDistribution, DirectionSet, DiscRule, DomainConfig, RaySet,
                       chord_intervals)

SIMPSON_INTERVALS = 64
CHUNK = 4096


def _chunks(n, size=CHUNK):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def optical_depth_table(rays: RaySet, sigma: AbsorptionField, t: np.ndarray, workers: int = 1) -> np.ndarray:
    """tau[i, j] = integral of sigma from -R to t[j] along ray i.

    Each chord through the support ball gets a 65-node cumulative Simpson
    rule (step at most rho/32), interpolated linearly to the t-nodes.
    """
    out = np.zeros((len(rays), len(t)))
    if sigma.is_zero():
        return out
    t_in, t_out, hit = chord_intervals(rays.feet, rays.dirs, sigma.rho)
    idx = np.flatnonzero(hit)
    k = np.arange(SIMPSON_INTERVALS + 1)

    def work(sl):
        ii = idx[sl]
        L = t_out[ii] - t_in[ii]
        step = L / SIMPSON_INTERVALS
        s = t_in[ii, None] + step[:, None] * k[None, :]
        pts = rays.feet[ii, None, :] + s[..., None] * rays.dirs[ii, None, :]
        vals = sigma(pts.reshape(-1, rays.n)).reshape(s.shape)
        cum = cumulative_simpson(vals, dx=1.0, axis=1, initial=0.0) * step[:, None]
        u = np.clip((t[None, :] - t_in[ii, None]) / np.where(step > 0, step, 1.0)[:, None],
                    0.0, SIMPSON_INTERVALS)
        j0 = np.minimum(u.astype(int), SIMPSON_INTERVALS - 1)
        fr = u - j0
        lo = np.take_along_axis(cum, j0, axis=1)
        hi = np.take_along_axis(cum, j0 + 1, axis=1)
        return ii, lo + fr * (hi - lo)

    for ii, tau in _map(work, _chunks(len(idx)), workers):
        out[ii] = tau
    return out


def line_integral(sigma: AbsorptionField, x0, v) -> np.ndarray:
    """Integral of sigma over whole lines x0 + s v (Simpson on the chord)."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    reach = 2.0 * sigma.rho + np.linalg.norm(x0, axis=1, keepdims=True)
    return segment_integral(sigma, x0 - reach * v, x0 + reach * v)


def segment_integral(sigma: AbsorptionField, a, b, n_nodes: int = SIMPSON_INTERVALS + 1) -> np.ndarray:
    """Integral of sigma along the straight segments a[i] -> b[i]."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    L = np.linalg.norm(d, axis=1)
    v = d / np.where(L > 0, L, 1.0)[:, None]
    t_in, t_out, hit = chord_intervals(a, v, sigma.rho)
    lo = np.clip(t_in, 0.0, L)
    hi = np.clip(t_out, 0.0, L)
    hit &= hi > lo
    out = np.zeros(len(a))
    if not hit.any():
        return out
    m = n_nodes - 1
    ii = np.flatnonzero(hit)
    step = (hi[ii] - lo[ii]) / m
    s = lo[ii, None] + step[:, None] * np.arange(n_nodes)[None, :]
    pts = a[ii, None, :] + s[..., None] * v[ii, None, :]
    vals = sigma(pts.reshape(-1, a.shape[1])).reshape(s.shape)
    out[ii] = cumulative_simpson(vals, dx=1.0, axis=1, initial=0.0)[:, -1] * step
    return out


def _t_nodes(R: float, tau: float, n_core: int):
    core = np.linspace(-tau, tau, n_core)
    t = core if tau >= R - 1e-12 else np.concatenate([[-R], core, [R]])
    w = np.zeros_like(t)
    d = np.diff(t)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return t, w


class Lattice:
    """Lines x = y + t v with t-nodes and a padded deposit grid of spacing h.

    A lattice built by `transport` has one ray group per direction of a
    DirectionSet and can receive gathered sources; any lattice can deposit.
    """

    def __init__(self, rays: RaySet, rho: float, h: float, h_t: float | None = None,
                 dirs: DirectionSet | None = None, workers: int = 1):
        n = rays.n
        self.rays, self.rho, self.workers = rays, float(rho), int(workers)
        self.n = n
        N = int(round(2.0 * rho / h)) + 1
        self.h = 2.0 * rho / (N - 1)
        self.pad = 2
        self.Ng = N + 2 * self.pad
        self.origin = -(self.rho + self.pad * self.h)
        self.margin = (np.sqrt(n) + 1.0) * self.h
        tau = min(rays.R, self.rho + self.margin)
        h_t = h_t or 0.5 * self.h
        n_core = max(3, int(np.ceil(2.0 * tau / h_t)) + 1)
        self.t, self.wt = _t_nodes(rays.R, tau, n_core)
        self.dirs = dirs
        self.n_groups = len(rays.group_dirs)
        self._cache = {}
        self._build_hats()

    @classmethod
    def transport(cls, domain: DomainConfig, dirs: DirectionSet | None = None, h: float = 0.1,
                  h_ray: float | None = None, h_t: float | None = None, workers: int = 1) -> "Lattice":
        """Global lattice: every direction times a transverse rule of spacing
        h_ray, keeping only lines that pass within a margin of the support."""
        dirs = dirs or DirectionSet.default(domain.n)
        N = int(round(2.0 * domain.rho / h)) + 1
        hh = 2.0 * domain.rho / (N - 1)
        margin = (np.sqrt(domain.n) + 1.0) * hh
        disc = DiscRule.spacing(domain.n, domain.R, h_ray or hh)
        rays = RaySet.tensor(dirs, disc, max_radius=min(domain.R, domain.rho + margin))
        return cls(rays, domain.rho, hh, h_t, dirs, workers)

    @property
    def shape(self):
        return (len(self.rays), len(self.t))

    @property
    def n_points(self) -> int:
        return len(self.rays) * len(self.t)

    def points(self) -> np.ndarray:
        return self.rays.points(self.t).reshape(-1, self.n)

    def _build_hats(self):
        nr, nt, n = len(self.rays), len(self.t), self.n
        base = np.zeros(nr * nt, dtype=np.int64)
        frac = np.zeros((nr * nt, n))
        valid = np.zeros(nr * nt, dtype=bool)
        strides = np.array([self.Ng ** (n - 1 - k) for k in range(n)], dtype=np.int64)

        def work(sl):
            pts = self.rays.feet[sl, None, :] + self.t[None, :, None] * self.rays.dirs[sl, None, :]
            s = (pts.reshape(-1, n) - self.origin) / self.h
            i0 = np.floor(s).astype(np.int64)
            ok = np.all((i0 >= 0) & (i0 <= self.Ng - 2), axis=1)
            i0 = np.clip(i0, 0, self.Ng - 2)
            return sl, i0 @ strides, s - i0, ok

        for sl, b, f, ok in _map(work, _chunks(nr, max(1, CHUNK // 4)), self.workers):
            p = slice(sl.start * nt, sl.stop * nt)
            base[p], frac[p], valid[p] = b, f, ok
        frac[~valid] = 0.0
        self.base, self.frac, self.valid = base, frac, valid
        self.corners = [(np.array(c), int(np.dot(c, strides)))
                        for c in np.ndindex(*(2,) * n)]
        self.point_group = np.repeat(self.rays.group, nt)

    def corner_weights(self):
        for c, off in self.corners:
            w = np.where(c[None, :] == 1, self.frac, 1.0 - self.frac).prod(axis=1)
            yield off, w * self.valid

    def hat_matrix(self) -> sparse.csr_matrix:
        """H[point, node * G + group(point)] = hat_node(point)."""

        def build():
            G = self.n_groups
            rows, cols, vals = [], [], []
            pidx = np.flatnonzero(self.valid)
            for off, w in self.corner_weights():
                rows.append(pidx)
                cols.append((self.base[pidx] + off) * G + self.point_group[pidx])
                vals.append(w[pidx])
            shape = (self.n_points, self.Ng**self.n * G)
            return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                     shape=shape)

        return self.cached("hat", self, build)

    def cached(self, key, obj, fn):
        hit = self._cache.get((key, id(obj)))
        if hit is None or hit[0] is not obj:
            hit = (obj, fn())
            self._cache[(key, id(obj))] = hit
        return hit[1]

    def optical_depth(self, sigma: AbsorptionField) -> np.ndarray:
        return self.cached("tau", sigma, lambda: optical_depth_table(self.rays, sigma, self.t, self.workers))

    def values_at_points(self, fn, key, obj) -> np.ndarray:
        return self.cached(key, obj, lambda: fn(self.points()).reshape(self.shape))

    def grid_points(self) -> np.ndarray:
        ax = self.origin + self.h * np.arange(self.Ng)
        mesh = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def source_shape(self, kappa: ScatteringField) -> np.ndarray:
        """Pointwise profile given to gathered sources: the amplitude c(x) in
        separable mode, the support indicator in tabulated mode."""
        if not kappa.tabulated:
            return self.values_at_points(kappa.c, "c", kappa)

        def support(x):
            return (np.einsum("ij,ij->i", x, x) <= kappa.rho**2 * (1 + 1e-12)).astype(float)

        return self.values_at_points(support, "supp", kappa)

    def gather_norm(self, kappa: ScatteringField) -> np.ndarray:
        """m[node, l] = sum over lines of direction l of dy * w_t * shape * hat_node."""
        if self.dirs is None:
            raise DomainError("lattice has no direction set; it cannot receive sources")

        def build():
            dy = self.rays.weights / self.dirs.weights[self.rays.group]
            wpt = (dy[:, None] * self.wt[None, :] * self.source_shape(kappa)).ravel()
            return (self.hat_matrix().T @ wpt).reshape(-1, len(self.dirs))

        return self.cached("gnorm", kappa, build)


@dataclass
class RayField:
    """Phase-space function sampled on a lattice: values[ray, t-node]."""

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.lattice.shape:
            raise DomainError("field shape does not match its lattice",
                              shape=self.values.shape, expected=self.lattice.shape)

    def norm(self) -> float:
        """L1(O, |v| dx dv) norm."""
        lat = self.lattice
        return float(np.sum(lat.rays.weights[:, None] * lat.wt[None, :] * np.abs(self.values)))

    def integral(self, weight=None) -> float:
        lat = self.lattice
        v = self.values if weight is None else self.values * weight
        return float(np.sum(lat.rays.weights[:, None] * lat.wt[None, :] * v))

    def trace(self) -> BoundaryDistribution:
        """Restriction to F+ (t = +R)."""
        return BoundaryDistribution(self.lattice.rays, self.values[:, -1], +1)

    def __add__(self, other: "RayField") -> "RayField":
        if other.lattice is not self.lattice:
            raise DomainError("fields live on different lattices")
        return RayField(self.lattice, self.values + other.values)

    def __neg__(self) -> "RayField":
        return RayField(self.lattice, -self.values)

    def scaled(self, s: float) -> "RayField":
        return RayField(self.lattice, self.values * s)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "RayField":
        return cls(lattice, np.zeros(lattice.shape))


def lattice_for(f_minus: BoundaryDistribution, rho: float, h: float = 0.1, h_t=None, workers: int = 1) -> Lattice:
    return Lattice(f_minus.rays, rho, h, h_t, workers=workers)


def apply_J(f_minus: BoundaryDistribution, sigma: AbsorptionField, lattice: Lattice | None = None) -> RayField:
    """J f_-(x, v) = exp(-integral of sigma from the F- foot to x) f_-(foot, v)."""
    if f_minus.side != -1:
        raise DomainError("J acts on data given on F-")
    lat = lattice or lattice_for(f_minus, sigma.rho, sigma.grid.h)
    if lat.rays is not f_minus.rays:
        raise DomainError("lattice rays must be the rays of f_-")
    att = np.exp(-lat.optical_depth(sigma))
    return RayField(lat, f_minus.values[:, None] * att)


def apply_T1inv(g: RayField, sigma: AbsorptionField) -> RayField:
    """T1^{-1} g(x, v) = -integral_{-R}^{t} exp(-(tau(t) - tau(s))) g(y + s v, v) ds."""
    lat = g.lattice
    tau = lat.optical_depth(sigma)
    shift = tau - tau[:, -1:]
    integrand = np.exp(shift) * g.values
    d = np.diff(lat.t)
    cum = np.zeros_like(integrand)
    cum[:, 1:] = np.cumsum(0.5 * d[None, :] * (integrand[:, 1:] + integrand[:, :-1]), axis=1)
    return RayField(lat, -np.exp(-shift) * cum)


def deposit(f: RayField, kappa: ScatteringField, with_amplitude: bool = True) -> np.ndarray:
    """D[node, G] = sum of c(x) f(x, v) dv dy dt hat_node(x) over samples of group G."""
    lat = f.lattice
    mass = lat.rays.weights[:, None] * lat.wt[None, :] * f.values
    if with_amplitude:
        mass = mass * lat.values_at_points(kappa.c, "c", kappa)
    return (lat.hat_matrix().T @ mass.ravel()).reshape(-1, lat.n_groups)


def scatter_source(f: RayField, kappa: ScatteringField, out: Lattice) -> np.ndarray:
    """Q[node, l] ~ (A2 f)(x_node, v_l) for the directions of `out`."""
    src_lat = f.lattice
    hn = out.h**out.n
    if not kappa.tabulated:
        D = deposit(f, kappa)
        P = kappa.phase_matrix(out.dirs, src_lat.rays.group_dirs)
        return (D @ P.T) / hn
    D = deposit(f, kappa, with_amplitude=False)
    Q = np.zeros((D.shape[0], len(out.dirs)))
    live = np.flatnonzero(np.any(D != 0, axis=1))
    if len(live):
        pts = out.grid_points()[live]
        inside = np.einsum("ij,ij->i", pts, pts) <= kappa.rho**2 * (1 + 1e-12)
        live, pts = live[inside], pts[inside]
        node = kappa.grid.nearest_index(pts)
        gi = np.argmax(src_lat.rays.group_dirs @ kappa.table_dirs.nodes.T, axis=1)
        li = np.argmax(out.dirs.nodes @ kappa.table_dirs.nodes.T, axis=1)
        for sl in _chunks(len(live), 512):
            k = kappa.table[node[sl]][:, gi][:, :, li]
            Q[live[sl]] = np.einsum("ng,ngl->nl", D[live[sl]], k)
    return Q / hn


def gather(Q: np.ndarray, out: Lattice, kappa: ScatteringField) -> RayField:
    """Spread nodal sources onto the lines of `out`, preserving total mass.

    Between nodes the source follows the spatial profile of k, so a sharp
    support edge stays sharp instead of being smeared over one cell.
    """
    m = out.gather_norm(kappa)
    Qn = np.divide(Q * out.h**out.n, m, out=np.zeros_like(Q), where=m > 0)
    vals = (out.hat_matrix() @ Qn.ravel()).reshape(out.shape) * out.source_shape(kappa)
    return RayField(out, vals)


def apply_A2(f: RayField, kappa: ScatteringField, out: Lattice | None = None) -> RayField:
    """(A2 f)(x, v) = integral of k(x, v', v) f(x, v') dv' on the lines of `out`."""
    out = out or f.lattice
    return gather(scatter_source(f, kappa, out), out, kappa)


def apply_K(f: RayField, pair: CoefficientPair, out: Lattice | None = None) -> RayField:
    """K f = T1^{-1} A2 f.  For f >= 0 the result is <= 0."""
    out = out or f.lattice
    if pair.kappa.is_zero():
        return RayField.zeros(out)
    return apply_T1inv(apply_A2(f, pair.kappa, out), pair.sigma)


def sigma_p_at_points(lat: Lattice, kappa: ScatteringField) -> np.ndarray:
    if not kappa.tabulated:
        return lat.values_at_points(kappa.c, "c", kappa)

    def build():
        pts = lat.points()
        inside = np.einsum("ij,ij->i", pts, pts) <= kappa.rho**2 * (1 + 1e-12)
        sp = np.einsum("gml,l->gm", kappa.table, kappa.table_dirs.weights)
        gi = np.argmax(lat.rays.group_dirs @ kappa.table_dirs.nodes.T, axis=1)
        out = np.zeros(len(pts))
        out[inside] = sp[kappa.grid.nearest_index(pts[inside]), gi[lat.point_group[inside]]]
        return out.reshape(lat.shape)

    return lat.cached("sp", kappa, build)


def absorbed(f: RayField, pair: CoefficientPair) -> float:
    """Integral over O of (sigma - sigma_p) f."""
    lat = f.lattice
    s = lat.values_at_points(pair.sigma, "sigma", pair.sigma)
    return f.integral(s - sigma_p_at_points(lat, pair.kappa))


@dataclass
class NeumannReport:
    terms: list
    tail_bound: float
    orders_used: int
    contraction: float
    tol: float
    ratios: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"terms": self.terms, "ratios": self.ratios, "tail_bound": self.tail_bound,
                "orders_used": self.orders_used, "contraction": self.contraction, "tol": self.tol}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class NeumannSolution:
    """Terms (-K)^m J f_- of the Neumann series; term 0 lives on the lattice of
    the incoming data, later terms on the transport lattice."""

    orders: list
    report: NeumannReport

    def total(self) -> RayField:
        out = self.orders[0]
        for f in self.orders[1:]:
            out = out + f
        return out

    def scattered(self) -> RayField | None:
        """Sum of the terms of order >= 1 (all on the transport lattice)."""
        if len(self.orders) < 2:
            return None
        out = self.orders[1]
        for f in self.orders[2:]:
            out = out + f
        return out

    def outgoing_mass(self, order: int | None = None) -> float:
        fs = self.orders if order is None else [self.orders[order]]
        return sum(f.trace().mass() for f in fs)

    def absorbed(self, pair: CoefficientPair) -> float:
        return sum(absorbed(f, pair) for f in self.orders)


def solve_neumann(f_minus: BoundaryDistribution, pair: CoefficientPair, tol: float = 1e-6,
                  max_orders: int = 80, lattice: Lattice | None = None, R: float | None = None,
                  input_lattice: Lattice | None = None, first_order: RayField | None = None):
    """Sum (-K)^m J f_- until the geometric tail bound drops below tol.

    Refuses when neither subcriticality condition holds; raises
    TruncationError if max_orders is reached first.  `first_order` may supply
    a precomputed term 1 on `lattice`.
    """
    R = R or f_minus.rays.R
    domain = DomainConfig(pair.grid.n, R, pair.grid.rho)
    sub = check_subcritical(pair, domain)
    if not sub.ok:
        raise RefusalError("neither subcriticality condition holds; the Neumann series may diverge",
                           **sub.to_dict())
    q = sub.contraction
    if input_lattice is None:
        if lattice is not None and lattice.rays is f_minus.rays:
            input_lattice = lattice
        else:
            input_lattice = lattice_for(f_minus, pair.grid.rho, lattice.h if lattice else pair.grid.h)
    term = apply_J(f_minus, pair.sigma, input_lattice)
    orders = [term]
    norms = [term.norm()]
    if pair.kappa.is_zero() or norms[0] == 0.0:
        return NeumannSolution(orders, NeumannReport(norms, 0.0, 1, q, tol))
    lattice = lattice or Lattice.transport(domain, h=pair.grid.h, workers=input_lattice.workers)
    tail = np.inf
    for m in range(1, max_orders + 1):
        if m == 1 and first_order is not None:
            term = first_order
        else:
            term = -apply_K(term, pair, lattice)
        orders.append(term)
        norms.append(term.norm())
        tail = norms[-1] * q / (1.0 - q)
        if tail < tol:
            break
    ratios = [b / a for a, b in zip(norms[:-1], norms[1:]) if a > 0]
    report = NeumannReport(norms, float(tail), len(orders), q, tol, ratios)
    if tail >= tol:
        raise TruncationError("Neumann tail bound above tolerance", **report.to_dict())
    return NeumannSolution(orders, report)


def transport_residual(f: RayField, pair: CoefficientPair) -> float:
    """Relative L1 size of df/dt + sigma f - A2 f at interior nodes of a field
    that lives on a transport lattice."""
    lat = f.lattice
    af = apply_A2(f, pair.kappa, lat).values
    s = lat.values_at_points(pair.sigma, "sigma", pair.sigma)
    t = lat.t
    dfdt = (f.values[:, 2:] - f.values[:, :-2]) / (t[2:] - t[:-2])[None, :]
    res = dfdt + s[:, 1:-1] * f.values[:, 1:-1] - af[:, 1:-1]
    w = lat.rays.weights[:, None] * lat.wt[None, 1:-1]
    scale = np.sum(w * (np.abs(dfdt) + np.abs(s[:, 1:-1] * f.values[:, 1:-1])))
    return float(np.sum(w * np.abs(res)) / scale) if scale > 0 else 0.0
