"""Absorption and scattering coefficients on a regular lattice, the
admissibility and subcriticality checks, and the shipped phantoms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import AdmissibilityError, DomainError
from .geometry import DirectionSet, DomainConfig, sphere_area


class CartesianGrid:
    """Regular lattice with N nodes per axis covering [-rho, rho]^n."""

    def __init__(self, n: int, N: int, rho: float):
        if N < 3:
            raise DomainError("grid needs at least 3 nodes per axis", N=N)
        self.n, self.N, self.rho = n, N, float(rho)
        self.axis = np.linspace(-rho, rho, N)
        self.h = self.axis[1] - self.axis[0]
        self.shape = (N,) * n

    def __eq__(self, other):
        return (isinstance(other, CartesianGrid) and (self.n, self.N, self.rho) == (other.n, other.N, other.rho))

    def __hash__(self):
        return hash((self.n, self.N, self.rho))

    @property
    def size(self) -> int:
        return self.N**self.n

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node_radius(self) -> np.ndarray:
        return np.linalg.norm(self.points(), axis=1).reshape(self.shape)

    def active_mask(self) -> np.ndarray:
        """Nodes that touch a cell meeting the closed support ball."""
        return self.node_radius() <= self.rho + np.sqrt(self.n) * self.h + 1e-12

    def interpolate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of nodal values at points x of shape (m, n)."""
        x = np.asarray(x, dtype=float)
        coords = (x.T + self.rho) / self.h
        return map_coordinates(values, coords, order=1, mode="nearest", prefilter=False)

    def nearest_index(self, x: np.ndarray) -> np.ndarray:
        """Flat index of the nearest node."""
        idx = np.clip(np.rint((np.asarray(x) + self.rho) / self.h).astype(int), 0, self.N - 1)
        return np.ravel_multi_index(tuple(idx.T), self.shape)

    def to_dict(self) -> dict:
        return {"n": self.n, "N": self.N, "rho": self.rho, "spacing": self.h,
                "origin": [-self.rho] * self.n, "shape": list(self.shape)}


def smooth_bump(grid: CartesianGrid, center=None, radius: float | None = None) -> np.ndarray:
    """Nodal values of exp(1 - 1/(1 - |x - c|^2 / r^2)), peak 1, C-infinity,
    vanishing with all derivatives at |x - c| = r."""
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    r = grid.rho if radius is None else float(radius)
    s2 = np.sum((grid.points() - c) ** 2, axis=1) / r**2
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return out.reshape(grid.shape)


class AbsorptionField:
    """sigma(x) from nodal values, multilinear in between, zero outside the
    closed ball of radius rho."""

    def __init__(self, grid: CartesianGrid, values):
        self.grid = grid
        v = np.array(values, dtype=float).reshape(grid.shape)
        v[~grid.active_mask()] = 0.0
        v.setflags(write=False)
        self.values = v

    @property
    def rho(self) -> float:
        return self.grid.rho

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.einsum("ij,ij->i", x, x) <= self.rho**2 * (1 + 1e-12)
        out = np.zeros(len(x))
        if inside.any():
            out[inside] = self.grid.interpolate(self.values, x[inside])
        return out

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __add__(self, other: "AbsorptionField") -> "AbsorptionField":
        return AbsorptionField(self.grid, self.values + other.values)

    def scaled(self, s: float) -> "AbsorptionField":
        return AbsorptionField(self.grid, self.values * s)

    @classmethod
    def zeros(cls, grid: CartesianGrid) -> "AbsorptionField":
        return cls(grid, np.zeros(grid.shape))


class PhaseFunction:
    """Normalised phase p(mu), mu = v'.v, with  integral over S^{n-1} of p = 1.

    Supported models: 'isotropic', 'quadratic' (p proportional to (1+mu)^2)
    and 'hg' (Henyey-Greenstein with asymmetry g).
    """

    def __init__(self, name: str = "isotropic", n: int = 3, g: float = 0.0):
        if name not in ("isotropic", "quadratic", "hg"):
            raise DomainError("unknown phase model", name=name)
        if name == "hg" and not -1 < g < 1:
            raise DomainError("HG asymmetry must lie in (-1, 1)", g=g)
        self.name, self.n, self.g = name, n, float(g)
        self._cdf = None

    def params(self) -> dict:
        return {"name": self.name, "g": self.g}

    def __call__(self, mu) -> np.ndarray:
        mu = np.clip(np.asarray(mu, dtype=float), -1.0, 1.0)
        if self.name == "isotropic":
            return np.full_like(mu, 1.0 / sphere_area(self.n))
        if self.name == "quadratic":
            norm = 16.0 * np.pi / 3.0 if self.n == 3 else 3.0 * np.pi
            return (1.0 + mu) ** 2 / norm
        g = self.g
        if self.n == 3:
            return (1 - g * g) / (4 * np.pi * (1 + g * g - 2 * g * mu) ** 1.5)
        return (1 - g * g) / (2 * np.pi * (1 + g * g - 2 * g * mu))

    def sample_mu(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling of the scattering cosine (3-D) from uniforms."""
        if self.n != 3:
            raise DomainError("cosine sampling is defined for n = 3; use sample_angle")
        if self.name == "isotropic":
            return 2.0 * u - 1.0
        if self.name == "quadratic":
            return 2.0 * np.cbrt(u) - 1.0
        g = self.g
        if abs(g) < 1e-8:
            return 2.0 * u - 1.0
        frac = (1 - g * g) / (1 - g + 2 * g * u)
        return np.clip((1 + g * g - frac * frac) / (2 * g), -1.0, 1.0)

    def sample_angle(self, u: np.ndarray) -> np.ndarray:
        """Signed deflection angle in (-pi, pi) for n = 2, from a tabulated CDF."""
        if self._cdf is None:
            th = np.linspace(-np.pi, np.pi, 8193)
            dens = self(np.cos(th))
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(th))])
            self._cdf = (th, cdf / cdf[-1])
        th, cdf = self._cdf
        return np.interp(u, cdf, th)


class ScatteringField:
    """k(x, v', v) = c(x) p(v'.v) in separable mode, or a table
    k[node, v'-node, v-node] with nearest-cell lookup in tabulated mode."""

    def __init__(self, grid: CartesianGrid, amplitude, phase: PhaseFunction | None = None,
                 table=None, table_dirs: DirectionSet | None = None):
        self.grid = grid
        c = np.array(amplitude, dtype=float).reshape(grid.shape)
        c[~grid.active_mask()] = 0.0
        c.setflags(write=False)
        self.amplitude = c
        self.phase = phase or PhaseFunction("isotropic", grid.n)
        self.table = None if table is None else np.asarray(table, dtype=float)
        self.table_dirs = table_dirs
        if self.table is not None:
            if table_dirs is None:
                raise DomainError("tabulated k needs its direction set")
            L = len(table_dirs)
            if self.table.shape != (grid.size, L, L):
                raise DomainError("table must have shape (nodes, L, L)", shape=self.table.shape)
            t = self.table.copy()
            t[~grid.active_mask().ravel()] = 0.0
            t.setflags(write=False)
            self.table = t

    @property
    def tabulated(self) -> bool:
        return self.table is not None

    @property
    def rho(self) -> float:
        return self.grid.rho

    def _support(self, x):
        return np.einsum("ij,ij->i", x, x) <= self.rho**2 * (1 + 1e-12)

    def c(self, x) -> np.ndarray:
        """Spatial amplitude, zero outside the closed support ball."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        m = self._support(x)
        if m.any():
            out[m] = self.grid.interpolate(self.amplitude, x[m])
        return out

    def _dir_index(self, v):
        return np.argmax(np.atleast_2d(v) @ self.table_dirs.nodes.T, axis=1)

    def kernel(self, x, vp, v) -> np.ndarray:
        """Pointwise k(x, v', v); arguments are row-aligned arrays."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vp = np.broadcast_to(np.asarray(vp, dtype=float), x.shape)
        v = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
        if not self.tabulated:
            return self.c(x) * self.phase(np.einsum("ij,ij->i", vp, v))
        out = np.zeros(len(x))
        m = self._support(x)
        if m.any():
            node = self.grid.nearest_index(x[m])
            out[m] = self.table[node, self._dir_index(vp[m]), self._dir_index(v[m])]
        return out

    def sup_sigma_p(self) -> float:
        """Grid sup of sigma_p."""
        if not self.tabulated:
            return float(np.max(self.amplitude)) if self.amplitude.size else 0.0
        sp = np.einsum("gml,l->gm", self.table, self.table_dirs.weights)
        return float(np.max(sp)) if sp.size else 0.0

    def sigma_p_nodes(self, dirs: DirectionSet | None = None) -> np.ndarray:
        """sigma_p at the grid nodes, maximised over incoming directions."""
        if not self.tabulated:
            return self.amplitude
        sp = np.einsum("gml,l->gm", self.table, self.table_dirs.weights)
        return sp.max(axis=1).reshape(self.grid.shape)

    def phase_matrix(self, out_dirs: DirectionSet, in_dirs) -> np.ndarray:
        """P[l, m] = p(v_l . u_m) scaled so that sum_l w_l P[l, m] = 1 exactly.

        `in_dirs` is an array of unit vectors (m, n).  Discrete normalisation
        keeps sigma_p exact on the direction quadrature.
        """
        u = np.atleast_2d(np.asarray(in_dirs, dtype=float))
        P = self.phase(out_dirs.nodes @ u.T)
        return P / (out_dirs.weights @ P)[None, :]

    def is_zero(self) -> bool:
        if self.tabulated:
            return not np.any(self.table)
        return not np.any(self.amplitude)

    def scaled(self, s: float) -> "ScatteringField":
        if self.tabulated:
            return ScatteringField(self.grid, self.amplitude * s, self.phase, self.table * s, self.table_dirs)
        return ScatteringField(self.grid, self.amplitude * s, self.phase)

    def with_amplitude(self, c) -> "ScatteringField":
        return ScatteringField(self.grid, c, self.phase)

    def tabulate(self, dirs: DirectionSet) -> "ScatteringField":
        """Tabulated copy of a separable field on the given direction set."""
        P = self.phase(dirs.nodes @ dirs.nodes.T)
        table = self.amplitude.reshape(-1, 1, 1) * P[None]
        return ScatteringField(self.grid, self.amplitude, self.phase, table, dirs)


def sigma_p(kappa: ScatteringField, x, v_prime, dirs: DirectionSet) -> np.ndarray:
    """sigma_p(x, v') by direction quadrature of k over the outgoing v."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    vp = np.atleast_2d(np.asarray(v_prime, dtype=float))
    vp = np.broadcast_to(vp, x.shape)
    out = np.zeros(len(x))
    for l in range(len(dirs)):
        out += dirs.weights[l] * kappa.kernel(x, vp, np.broadcast_to(dirs.nodes[l], x.shape))
    return out


@dataclass
class CoefficientPair:
    sigma: AbsorptionField
    kappa: ScatteringField
    label: str = "pair"
    params: dict = field(default_factory=dict)

    @property
    def grid(self) -> CartesianGrid:
        return self.sigma.grid


@dataclass
class AdmissibilityReport:
    ok: bool
    sup_sigma: float
    sup_sigma_p: float
    violations: list

    def raise_if_failed(self):
        if not self.ok:
            raise AdmissibilityError("coefficients are not admissible", violations=self.violations)
        return self


def check_admissible(pair: CoefficientPair, strict: bool = False) -> AdmissibilityReport:
    """Nonnegativity, support in the closed ball and finiteness of both sup norms."""
    violations = []
    active = pair.grid.active_mask()
    for name, arr in (("sigma", pair.sigma.values), ("k", pair.kappa.amplitude)):
        bad = np.argwhere(active & ~(arr >= 0))
        if len(bad):
            violations.append({"hypothesis": f"{name} >= 0", "cells": bad[:10].tolist(), "count": int(len(bad))})
        if not np.all(np.isfinite(arr)):
            violations.append({"hypothesis": f"{name} bounded", "cells": np.argwhere(~np.isfinite(arr))[:10].tolist()})
        outside = np.argwhere(~active & (arr != 0))
        if len(outside):
            violations.append({"hypothesis": f"{name} supported in closed ball", "cells": outside[:10].tolist()})
    if pair.kappa.tabulated:
        bad = np.argwhere(~(pair.kappa.table >= 0))
        if len(bad):
            violations.append({"hypothesis": "k >= 0", "entries": bad[:10].tolist(), "count": int(len(bad))})
    sup_s = pair.sigma.sup()
    sup_p = pair.kappa.sup_sigma_p()
    if not (np.isfinite(sup_s) and np.isfinite(sup_p)):
        violations.append({"hypothesis": "finite sup norms"})
    rep = AdmissibilityReport(not violations, sup_s, sup_p, violations)
    return rep.raise_if_failed() if strict else rep


@dataclass
class SubcriticalityReport:
    c1: bool
    c2: bool
    contraction: float
    sup_sigma_p: float
    status: str

    @property
    def ok(self) -> bool:
        return self.c1 or self.c2

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "contraction": self.contraction,
                "sup_sigma_p": self.sup_sigma_p, "status": self.status}


def check_subcritical(pair: CoefficientPair, domain: DomainConfig) -> SubcriticalityReport:
    """Conditions (sigma - sigma_p >= 0) and (2 R sup sigma_p < 1), with the
    resulting contraction bound on A2 T1^{-1}."""
    sp = pair.kappa.sup_sigma_p()
    active = pair.grid.active_mask()
    diff = pair.sigma.values - pair.kappa.sigma_p_nodes()
    c2 = bool(np.all(diff[active] >= -1e-12))
    c1 = bool(2.0 * domain.R * sp < 1.0)
    if c2:
        q = float(-np.expm1(-2.0 * domain.R * sp))
    elif c1:
        q = 2.0 * domain.R * sp
    else:
        q = float("nan")
    status = "ok" if (c1 or c2) else "warning: neither subcriticality condition holds"
    return SubcriticalityReport(c1, c2, q, sp, status)


PHANTOMS = ("zero", "ball", "smooth-bump", "two-bumps", "anisotropic")


def _ball_values(grid: CartesianGrid, value: float) -> np.ndarray:
    # constant on the ball and on the band of nodes just outside it, so the
    # interpolant cut at |x| = rho is exactly the indicator
    return np.where(grid.active_mask(), value, 0.0)


def make_phantom(name: str, domain: DomainConfig | None = None, N: int = 33, **params) -> CoefficientPair:
    """Deterministic coefficient pairs.

    zero         sigma = k = 0
    ball         sigma = sigma0, c = c on the ball, isotropic phase
    smooth-bump  sigma = sigma0 * bump, c = c * bump (bump peaks at 1)
    two-bumps    two off-centre bumps of radius rho/2
    anisotropic  ball with a forward-peaked phase ('quadratic' or 'hg')
    """
    domain = domain or DomainConfig()
    grid = CartesianGrid(domain.n, N, domain.rho)
    sigma0 = float(params.get("sigma0", 1.0))
    c0 = float(params.get("c", 0.3))
    phase = PhaseFunction(params.get("phase", "isotropic"), domain.n, float(params.get("g", 0.0)))
    if name == "zero":
        s = np.zeros(grid.shape)
        c = np.zeros(grid.shape)
    elif name == "ball":
        s, c = _ball_values(grid, sigma0), _ball_values(grid, c0)
    elif name == "smooth-bump":
        b = smooth_bump(grid)
        s, c = sigma0 * b, c0 * b
    elif name == "two-bumps":
        off = np.zeros(domain.n)
        off[0] = 0.45 * domain.rho
        b = smooth_bump(grid, off, 0.5 * domain.rho) + smooth_bump(grid, -off, 0.5 * domain.rho)
        s, c = sigma0 * b, c0 * b
    elif name == "anisotropic":
        if phase.name == "isotropic":
            phase = PhaseFunction("quadratic", domain.n)
        s, c = _ball_values(grid, sigma0), _ball_values(grid, c0)
    else:
        raise DomainError("unknown phantom", name=name, known=list(PHANTOMS))
    record = {"name": name, "N": N, "sigma0": sigma0, "c": c0, "phase": phase.params()}
    return CoefficientPair(AbsorptionField(grid, s), ScatteringField(grid, c, phase), name, record)
