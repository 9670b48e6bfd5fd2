"""X-ray transform, filtered back-projection on stacked slices, discrete
Sobolev norms and the interpolation and embedding inequalities."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coefficients import AbsorptionField, CartesianGrid
from .errors import DomainError
from .transport import line_integral


@dataclass
class Sinogram:
    """Line integrals over lines x = foot + t dir.

    On the stacked-slice geometry (n = 3) lines lie in planes z = const with
    direction (cos a, sin a, 0) and foot s (-sin a, cos a, 0) + z e3;
    `values` then reshape to (n_z, n_angle, n_s).
    """

    dirs: np.ndarray
    feet: np.ndarray
    values: np.ndarray
    angles: np.ndarray | None = None
    s: np.ndarray | None = None
    z: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    flagged: np.ndarray | None = None

    @property
    def stacked(self) -> np.ndarray:
        return self.values.reshape(len(self.z), len(self.angles), len(self.s))

    def to_manifest(self) -> dict:
        return {"geometry": "stacked-slices" if self.angles is not None else "rays",
                "axis": [0.0, 0.0, 1.0], "n_lines": int(len(self.values)),
                "angles": None if self.angles is None else self.angles.tolist(),
                "s": None if self.s is None else self.s.tolist(),
                "z": None if self.z is None else self.z.tolist(), **self.meta}

    def to_csv(self, path) -> None:
        cols = [self.feet, self.dirs, self.values[:, None]]
        head = ",".join([f"x{i}" for i in range(self.feet.shape[1])]
                        + [f"v{i}" for i in range(self.dirs.shape[1])] + ["value"])
        np.savetxt(path, np.hstack(cols), delimiter=",", header=head, comments="")


def slice_geometry(n_angles: int, n_s: int, z, rho: float):
    """Directions, feet, angles and offsets of the stacked-slice sweep.

    Angles cover [0, pi); offsets are n_s uniform midpoints of (-rho, rho).
    """
    angles = np.arange(n_angles) * (np.pi / n_angles)
    s = -rho + (np.arange(n_s) + 0.5) * (2.0 * rho / n_s)
    z = np.asarray(z, dtype=float)
    Z, A, S = np.meshgrid(z, angles, s, indexing="ij")
    dirs = np.stack([np.cos(A), np.sin(A), np.zeros_like(A)], axis=-1).reshape(-1, 3)
    feet = np.stack([-S * np.sin(A), S * np.cos(A), Z], axis=-1).reshape(-1, 3)
    return dirs, feet, angles, s, z


def xray_transform(sigma: AbsorptionField, dirs=None, feet=None, n_angles: int = 48, n_s: int = 48,
                   z=None) -> Sinogram:
    """P sigma on the given lines, or on the stacked-slice sweep when no
    lines are passed (slices at the grid's z nodes)."""
    if dirs is None:
        z = sigma.grid.axis if z is None else z
        dirs, feet, angles, s, z = slice_geometry(n_angles, n_s, z, sigma.rho)
        vals = line_integral(sigma, feet, dirs)
        return Sinogram(dirs, feet, vals, angles, s, z)
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    feet = np.atleast_2d(np.asarray(feet, dtype=float))
    return Sinogram(dirs, feet, line_integral(sigma, feet, dirs))


def ramp_kernel(n: int, ds: float) -> np.ndarray:
    """Spatial band-limited ramp filter sampled at offsets -(n-1)..(n-1)."""
    k = np.arange(-(n - 1), n)
    h = np.zeros(len(k))
    h[k == 0] = 1.0 / (4.0 * ds * ds)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi**2 * k[odd] ** 2 * ds * ds)
    return h


def filter_projections(p: np.ndarray, ds: float) -> np.ndarray:
    """Convolve each row with the ramp kernel (FFT, zero padded)."""
    n = p.shape[-1]
    h = ramp_kernel(n, ds)
    size = 1 << int(np.ceil(np.log2(len(h) + n)))
    conv = np.fft.irfft(np.fft.rfft(p, size, axis=-1) * np.fft.rfft(h, size), size, axis=-1)
    return ds * conv[..., n - 1:2 * n - 1]


def fbp_slice(p: np.ndarray, angles: np.ndarray, s: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Parallel-beam FBP of one slice onto points (X, Y).

    Projections vanish outside the sampled offsets; they are zero-extended
    before filtering so the filtered tails reach every output point.
    """
    ds = s[1] - s[0]
    reach = np.max(np.hypot(X, Y))
    pad = max(0, int(np.ceil((reach - s[-1]) / ds)) + 1)
    s_ext = s[0] + ds * np.arange(-pad, len(s) + pad)
    p_ext = np.pad(p, ((0, 0), (pad, pad)))
    q = filter_projections(p_ext, ds)
    out = np.zeros_like(X, dtype=float)
    for a, qa in zip(angles, q):
        u = -X * np.sin(a) + Y * np.cos(a)
        out += np.interp(u, s_ext, qa, left=0.0, right=0.0)
    return out * (np.pi / len(angles))


def fbp_invert(sino: Sinogram, grid: CartesianGrid) -> AbsorptionField:
    """Slice-by-slice ramp-filtered back-projection onto `grid` (n = 3)."""
    if sino.angles is None:
        raise DomainError("FBP needs the stacked-slice geometry")
    n_a, n_s = len(sino.angles), len(sino.s)
    recommended = int(np.ceil(np.pi * n_s / 2))
    if n_a < recommended / 2:
        warnings.warn(f"angular sampling below Nyquist estimate: {n_a} angles for {n_s} offsets "
                      f"(about {recommended} recommended)", stacklevel=2)
    data = sino.stacked
    X, Y = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    vol = np.zeros(grid.shape)
    for iz, zval in enumerate(grid.axis):
        j = np.flatnonzero(np.isclose(sino.z, zval, atol=1e-12))
        if len(j):
            sl = data[j[0]]
        else:
            # linear interpolation between neighbouring slices
            jj = np.searchsorted(sino.z, zval)
            if jj == 0 or jj == len(sino.z):
                continue
            a = (zval - sino.z[jj - 1]) / (sino.z[jj] - sino.z[jj - 1])
            sl = (1 - a) * data[jj - 1] + a * data[jj]
        if not np.any(sl):
            continue
        vol[:, :, iz] = fbp_slice(sl, sino.angles, sino.s, X, Y)
    return AbsorptionField(grid, vol)


def _spectrum_weights(shape, h, s):
    freqs = [2.0 * np.pi * np.fft.fftfreq(m, d=h) for m in shape]
    mesh = np.meshgrid(*freqs, indexing="ij")
    xi2 = sum(m**2 for m in mesh)
    return (1.0 + xi2) ** s


def sobolev_norm_periodic(values: np.ndarray, h: float, s: float) -> float:
    """H^s norm of a grid function on its periodic box (side = size * h),
    normalised so that s = 0 gives the discrete L2 norm."""
    values = np.asarray(values, dtype=float)
    F = np.fft.fftn(values) * h**values.ndim
    box = np.prod([m * h for m in values.shape])
    return float(np.sqrt(np.sum(_spectrum_weights(values.shape, h, s) * np.abs(F) ** 2) / box))


def pad_box(values: np.ndarray) -> np.ndarray:
    """Zero-pad a field on [-rho, rho]^n to a periodic box of side 4 rho."""
    N = values.shape[0]
    M = 2 * (N - 1)
    out = np.zeros((M,) * values.ndim)
    out[tuple(slice(0, N) for _ in range(values.ndim))] = values
    return out


def sobolev_norm(field, s: float, h: float | None = None) -> float:
    """H^s norm of a field supported in the ball, via the padded periodic box."""
    if isinstance(field, AbsorptionField):
        values, h = field.values, field.grid.h
    else:
        values = np.asarray(field, dtype=float)
        if h is None:
            raise DomainError("grid spacing required for raw arrays")
    return sobolev_norm_periodic(pad_box(values), h, s)


def interpolation_check(field, s: float, s_high: float, h: float | None = None, s_low: float = -0.5,
                        periodic: bool = False) -> float:
    """RHS - LHS of  |f|_s <= |f|_{s_high}^lam |f|_{s_low}^{1-lam},
    lam = (s - s_low) / (s_high - s_low)."""
    if not s_low <= s <= s_high:
        raise DomainError("interpolation exponent out of range", s=s, s_low=s_low, s_high=s_high)
    if periodic:
        def norm(t):
            return sobolev_norm_periodic(np.asarray(field, dtype=float), h, t)
    else:
        def norm(t):
            return sobolev_norm(field, t, h)
    lam = (s - s_low) / (s_high - s_low)
    lhs = norm(s)
    rhs = norm(s_high) ** lam * norm(s_low) ** (1.0 - lam)
    return float(rhs - lhs)


def embedding_constant(grid: CartesianGrid, r_tilde: float, widths=None) -> float:
    """Lower estimate of the sup-norm embedding constant for H^{n/2 + r_tilde}:
    max over centred Gaussians of sup|f| / |f|_{H^{n/2 + r_tilde}}."""
    if r_tilde <= 0:
        raise DomainError("r_tilde must be positive", r_tilde=r_tilde)
    widths = [0.1, 0.15, 0.2, 0.3, 0.4] if widths is None else list(widths)
    if not widths:
        raise DomainError("empty probe family")
    x2 = np.sum(grid.points() ** 2, axis=1).reshape(grid.shape)
    s = grid.n / 2.0 + r_tilde
    ratios = []
    for w in widths:
        f = np.exp(-x2 / (2.0 * w * w))
        ratios.append(np.max(np.abs(f)) / sobolev_norm(f, s, grid.h))
    return float(max(ratios))
