"""Phase-space geometry: the slab-cylinder domain O, the measurement discs F±,
transverse frames, ray/ball intersections and the quadrature rules that come
from writing O as directions x transverse discs x line segments.

Velocities live on the unit sphere, so |v| = 1 and every |v|-weighted measure
is the plain one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

BOUNDARY_TOL = 1e-9
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1}."""
    if n == 2:
        return 2.0 * np.pi
    if n == 3:
        return 4.0 * np.pi
    raise DomainError("dimension must be 2 or 3", n=n)


@dataclass(frozen=True)
class DomainConfig:
    """Dimension n, enclosing radius R and coefficient support radius rho."""

    n: int = 3
    R: float = 2.0
    rho: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise DomainError("dimension must be 2 or 3", n=self.n)
        if not (self.R > self.rho > 0):
            raise DomainError("need R > rho > 0", R=self.R, rho=self.rho)

    @property
    def volume_O(self) -> float:
        """|S^{n-1}| * |Pi_v(R)| * 2R."""
        disc = np.pi * self.R**2 if self.n == 3 else 2.0 * self.R
        return sphere_area(self.n) * disc * 2.0 * self.R


def make_frame(v_hat) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to `v_hat`.

    Returns an array of shape (n-1, n).  In 3-D the first vector is the
    coordinate axis of least |component| made orthogonal to v by Gram-Schmidt
    and the second is v x e1, so (e1, e2, v) is right handed.  In 2-D the
    single vector is v rotated by +90 degrees.
    """
    v = np.asarray(v_hat, dtype=float)
    if v.shape == (2,):
        return np.array([[-v[1], v[0]]])
    if v.shape != (3,):
        raise DomainError("direction must have 2 or 3 components", shape=v.shape)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(v)))] = 1.0
    e1 = axis - np.dot(axis, v) * v
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    e2 /= np.linalg.norm(e2)
    return np.array([e1, e2])


def make_frames(v_hats: np.ndarray) -> np.ndarray:
    """Vectorised `make_frame` over rows; shape (m, n-1, n)."""
    v_hats = np.atleast_2d(np.asarray(v_hats, dtype=float))
    return np.stack([make_frame(v) for v in v_hats]) if len(v_hats) else np.zeros((0, v_hats.shape[1] - 1, v_hats.shape[1]))


def chord_interval(x0, v_hat, radius: float):
    """Parameters (t_in, t_out) where x0 + t v lies in the open ball, or None."""
    if radius <= 0:
        raise DomainError("radius must be positive", radius=radius)
    t_in, t_out, hit = chord_intervals(np.atleast_2d(x0), np.atleast_2d(v_hat), radius)
    if not hit[0]:
        return None
    return float(t_in[0]), float(t_out[0])


def chord_intervals(x0: np.ndarray, v_hat: np.ndarray, radius: float):
    """Vectorised ball intersection for unit directions.

    Returns t_in, t_out and a boolean hit mask; entries without intersection
    hold t_in = t_out = 0.
    """
    b = np.einsum("ij,ij->i", x0, v_hat)
    c = np.einsum("ij,ij->i", x0, x0) - radius**2
    disc = b * b - c
    hit = disc > 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t_in = np.where(hit, -b - root, 0.0)
    t_out = np.where(hit, -b + root, 0.0)
    return t_in, t_out, hit


def transverse_part(x: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    """x - (x.v)v, row-wise."""
    return x - np.einsum("ij,ij->i", x, v_hat)[:, None] * v_hat


def project_to_F(x, v_hat, sign: int, R: float, tol: float = BOUNDARY_TOL):
    """Map x to its F+ (sign=+1) or F- (sign=-1) coordinates along direction v.

    Returns (transverse point in Pi_v(R), point on F±).  Points whose
    transverse distance exceeds R by more than `tol` are rejected.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v_hat, dtype=float)
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1", sign=sign)
    y = x - np.dot(x, v) * v
    r = np.linalg.norm(y)
    if r >= R + tol:
        raise DomainError("transverse point outside Pi_v(R)", radius=float(r), R=R)
    if r >= R:
        y = y * ((R - tol) / r)
    return y, y + sign * R * v


class DirectionSet:
    """Quadrature on S^{n-1} with deterministic transverse frames."""

    def __init__(self, nodes, weights, frames=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.n = self.nodes.shape[1]
        self.frames = make_frames(self.nodes) if frames is None else np.asarray(frames, dtype=float)
        for a in (self.nodes, self.weights, self.frames):
            a.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def gauss_product(cls, n_polar: int, n_azimuth: int) -> "DirectionSet":
        """Gauss-Legendre in cos(theta) times a uniform azimuth grid (n = 3)."""
        mu, wmu = np.polynomial.legendre.leggauss(n_polar)
        phi = (np.arange(n_azimuth) + 0.5) * (2.0 * np.pi / n_azimuth)
        M, P = np.meshgrid(mu, phi, indexing="ij")
        s = np.sqrt(1.0 - M**2)
        nodes = np.stack([s * np.cos(P), s * np.sin(P), M], axis=-1).reshape(-1, 3)
        weights = np.repeat(wmu * (2.0 * np.pi / n_azimuth), n_azimuth)
        return cls(nodes, weights)

    @classmethod
    def circle(cls, m: int) -> "DirectionSet":
        """Uniform midpoint rule on S^1 (n = 2)."""
        phi = (np.arange(m) + 0.5) * (2.0 * np.pi / m)
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return cls(nodes, np.full(m, 2.0 * np.pi / m))

    @classmethod
    def default(cls, n: int, level: int = 1) -> "DirectionSet":
        if n == 3:
            return cls.gauss_product(6 * level, 12 * level)
        return cls.circle(32 * level)

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes.tolist(), "weights": self.weights.tolist(),
                           "frames": self.frames.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DirectionSet":
        d = json.loads(text)
        return cls(np.array(d["nodes"]), np.array(d["weights"]), np.array(d["frames"]))


class DiscRule:
    """Equal-weight rule on the transverse ball of radius R in n-1 dimensions.

    `coords` are coordinates in the frame of a direction; the rule is the
    same for every direction.
    """

    def __init__(self, coords, R: float, total: float):
        self.coords = np.ascontiguousarray(coords, dtype=float)
        self.R = float(R)
        self.weight = total / len(self.coords)
        self.coords.setflags(write=False)

    def __len__(self):
        return len(self.coords)

    @classmethod
    def polar(cls, R: float, n_r: int, n_theta: int) -> "DiscRule":
        """Midpoints of an n_r x n_theta grid uniform in r^2 and in angle."""
        u = (np.arange(n_r) + 0.5) / n_r
        th = (np.arange(n_theta) + 0.5) * (2.0 * np.pi / n_theta)
        U, T = np.meshgrid(u, th, indexing="ij")
        r = R * np.sqrt(U)
        coords = np.stack([r * np.cos(T), r * np.sin(T)], axis=-1).reshape(-1, 2)
        return cls(coords, R, np.pi * R**2)

    @classmethod
    def spiral(cls, R: float, n_points: int) -> "DiscRule":
        """Vogel spiral: uniform in r^2, golden-angle steps; nearly uniform spacing."""
        j = np.arange(n_points)
        r = R * np.sqrt((j + 0.5) / n_points)
        th = j * GOLDEN_ANGLE
        return cls(np.stack([r * np.cos(th), r * np.sin(th)], axis=-1), R, np.pi * R**2)

    @classmethod
    def segment(cls, R: float, n_points: int) -> "DiscRule":
        """Midpoint rule on (-R, R), the transverse 'disc' when n = 2."""
        s = -R + (np.arange(n_points) + 0.5) * (2.0 * R / n_points)
        return cls(s[:, None], R, 2.0 * R)

    @classmethod
    def default(cls, n: int, R: float, level: int = 1) -> "DiscRule":
        if n == 3:
            return cls.polar(R, 16 * level, 48 * level)
        return cls.segment(R, 128 * level)

    @classmethod
    def spacing(cls, n: int, R: float, h: float) -> "DiscRule":
        """Rule with roughly uniform spacing h (spiral in 3-D, segment in 2-D)."""
        if n == 3:
            return cls.spiral(R, max(1, int(np.ceil(np.pi * R**2 / h**2))))
        return cls.segment(R, max(1, int(np.ceil(2.0 * R / h))))


@dataclass(frozen=True)
class RaySet:
    """A set of oriented lines x = foot + t*dir with quadrature weights.

    Each row is one sample (v, y) of F± with y in Pi_v(R); `weights` carry the
    product measure dv dy.  Rows are grouped by direction: `group[i]` indexes
    `group_dirs`, so operators that act per direction can batch work.
    """

    dirs: np.ndarray
    feet: np.ndarray
    weights: np.ndarray
    group: np.ndarray
    group_dirs: np.ndarray
    R: float
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.weights)

    @property
    def n(self) -> int:
        return self.dirs.shape[1]

    @classmethod
    def tensor(cls, dirs: DirectionSet, disc: DiscRule, max_radius: float | None = None) -> "RaySet":
        """Every direction node combined with every disc node (optionally only
        disc nodes with radius < max_radius)."""
        coords = disc.coords
        if max_radius is not None:
            coords = coords[np.linalg.norm(coords, axis=1) < max_radius]
        J = len(coords)
        feet = np.einsum("jk,lkn->ljn", coords, dirs.frames).reshape(-1, dirs.n)
        dv = np.repeat(dirs.nodes, J, axis=0)
        w = np.repeat(dirs.weights * disc.weight, J)
        group = np.repeat(np.arange(len(dirs)), J)
        return cls(dv, feet, w, group, dirs.nodes.copy(), disc.R,
                   {"n_dirs": len(dirs), "n_disc": J, "disc_weight": disc.weight})

    def subset(self, mask) -> "RaySet":
        return RaySet(self.dirs[mask], self.feet[mask], self.weights[mask], self.group[mask],
                      self.group_dirs, self.R, dict(self.meta))

    def points(self, t) -> np.ndarray:
        """Positions foot + t*dir; t broadcast against rows."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.feet + t * self.dirs
        return self.feet[:, None, :] + t[..., None] * self.dirs[:, None, :]


class BoundaryDistribution:
    """Samples of a function on F+ (side=+1) or F- (side=-1)."""

    def __init__(self, rays: RaySet, values, side: int):
        if side not in (1, -1):
            raise DomainError("side must be +1 or -1", side=side)
        self.rays = rays
        self.values = np.asarray(values, dtype=float)
        self.side = side
        if self.values.shape != (len(rays),):
            raise DomainError("values must have one entry per ray",
                              shape=self.values.shape, rays=len(rays))

    @property
    def boundary_points(self) -> np.ndarray:
        return self.rays.feet + self.side * self.rays.R * self.rays.dirs

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.rays.weights

    def mass(self) -> float:
        return float(np.sum(self.masses))

    def norm(self) -> float:
        return boundary_norm(self)

    def scaled(self, factor: float) -> "BoundaryDistribution":
        return BoundaryDistribution(self.rays, self.values * factor, self.side)

    @classmethod
    def constant(cls, rays: RaySet, value: float, side: int) -> "BoundaryDistribution":
        return cls(rays, np.full(len(rays), float(value)), side)


def boundary_norm(g: BoundaryDistribution) -> float:
    """L1 norm on F±: sum over samples of |g| times the dv dy weight."""
    return float(np.sum(np.abs(g.values) * g.rays.weights))


def integrate_O(sampler, dirs: DirectionSet, disc: DiscRule, n_t: int = 128) -> float:
    """Integral over O written as directions x transverse disc x (-R, R).

    `sampler(x, v)` takes arrays of positions and directions of shape (m, n)
    and returns m values.  The line factor uses the n_t-point midpoint rule.
    """
    R = disc.R
    t = -R + (np.arange(n_t) + 0.5) * (2.0 * R / n_t)
    wt = 2.0 * R / n_t
    total = 0.0
    for l in range(len(dirs)):
        v = dirs.nodes[l]
        feet = disc.coords @ dirs.frames[l]
        x = (feet[:, None, :] + t[None, :, None] * v).reshape(-1, dirs.n)
        vals = np.asarray(sampler(x, np.broadcast_to(v, x.shape)), dtype=float)
        total += dirs.weights[l] * disc.weight * wt * float(np.sum(vals))
    return total
