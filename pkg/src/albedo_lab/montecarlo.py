"""Monte Carlo oracle for the albedo decomposition.

Particles are tracked with weighted delta tracking inside the support ball:
tentative collisions at a constant majorant rate, real scattering with
probability c / majorant, and weight corrections on the remaining
(absorbing or null) events.  Exits are tallied by scattering order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientPair
from .errors import DomainError
from .geometry import BoundaryDistribution, chord_intervals

BATCH = 1 << 16
MIN_PARTICLES = 10_000


@dataclass
class MCResult:
    masses: np.ndarray
    stderr: np.ndarray
    total: float
    total_stderr: float
    n_particles: int
    seed: int
    exits: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        keys = ("ballistic", "single", "multiple")
        return {"masses": dict(zip(keys, map(float, self.masses))),
                "stderr": dict(zip(keys, map(float, self.stderr))),
                "total": self.total, "total_stderr": self.total_stderr,
                "n_particles": self.n_particles, "seed": self.seed}


def _rotate(d: np.ndarray, rng: np.random.Generator, phase) -> np.ndarray:
    m, n = d.shape
    if n == 2:
        th = phase.sample_angle(rng.random(m))
        perp = np.stack([-d[:, 1], d[:, 0]], axis=1)
        return np.cos(th)[:, None] * d + np.sin(th)[:, None] * perp
    mu = phase.sample_mu(rng.random(m))
    phi = 2.0 * np.pi * rng.random(m)
    a = np.where((np.abs(d[:, 0]) < 0.9)[:, None], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    e1 = a - np.einsum("ij,ij->i", a, d)[:, None] * d
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(d, e1)
    s = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    out = mu[:, None] * d + s[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _run_batch(beam: BoundaryDistribution, pair: CoefficientPair, n: int, seed_seq, record: bool):
    rng = np.random.default_rng(seed_seq)
    rays = beam.rays
    p = np.clip(beam.masses, 0.0, None)
    idx = rng.choice(len(p), size=n, p=p / p.sum())
    d = rays.dirs[idx].copy()
    x = rays.feet[idx] - rays.R * d
    w = np.ones(n)
    order = np.zeros(n, dtype=int)
    rho = pair.grid.rho
    sig, kap = pair.sigma, pair.kappa
    cmax = kap.sup_sigma_p()
    smax = max(sig.sup(), cmax) + cmax

    out_w = np.zeros(n)
    out_order = np.zeros(n, dtype=int)
    out_x = np.zeros_like(x)
    out_d = np.zeros_like(d)

    t_in, _, hit = chord_intervals(x, d, rho)
    x[hit] += np.clip(t_in[hit], 0.0, None)[:, None] * d[hit]
    alive = np.flatnonzero(hit)
    gone = np.flatnonzero(~hit)
    out_w[gone], out_x[gone], out_d[gone] = w[gone], x[gone], d[gone]

    while len(alive):
        xa, da = x[alive], d[alive]
        _, t_out, h = chord_intervals(xa, da, rho)
        t_out = np.where(h, np.clip(t_out, 0.0, None), 0.0)
        step = rng.exponential(1.0 / smax, len(alive)) if smax > 0 else np.full(len(alive), np.inf)
        leave = step >= t_out
        li = alive[leave]
        out_w[li], out_order[li] = w[li], order[li]
        out_x[li] = xa[leave] + t_out[leave, None] * da[leave]
        out_d[li] = da[leave]
        stay = alive[~leave]
        if not len(stay):
            break
        x[stay] += step[~leave, None] * d[stay]
        s_loc = sig(x[stay])
        c_loc = kap.c(x[stay])
        scatter = rng.random(len(stay)) * smax < c_loc
        sc = stay[scatter]
        if len(sc):
            d[sc] = _rotate(d[sc], rng, kap.phase)
            order[sc] += 1
        ns = ~scatter
        w[stay[ns]] *= (smax - s_loc[ns]) / (smax - c_loc[ns])
        alive = stay

    cls = np.minimum(out_order, 2)
    score = np.zeros((3, n))
    score[cls, np.arange(n)] = out_w
    rec = {}
    if record:
        foot = out_x - np.einsum("ij,ij->i", out_x, out_d)[:, None] * out_d
        rec = {"order": out_order, "weight": out_w, "dir": out_d, "foot": foot}
    return score.sum(axis=1), (score**2).sum(axis=1), out_w.sum(), (out_w**2).sum(), rec


def mc_oracle(beam: BoundaryDistribution, pair: CoefficientPair, n_particles: int = 1_000_000,
              seed: int = 0, workers: int = 1, record: bool = False, batch: int = BATCH) -> MCResult:
    """Unbiased per-order estimates of the outgoing mass of a beam.

    Batches draw from independent streams spawned from `seed`, and are merged
    in batch order, so results do not depend on `workers`.
    """
    if n_particles < MIN_PARTICLES:
        raise DomainError("Monte Carlo oracle needs at least 1e4 particles", n_particles=n_particles)
    if pair.kappa.tabulated:
        raise DomainError("Monte Carlo oracle samples separable kernels only")
    if beam.side != -1:
        raise DomainError("beam must live on F-")
    sizes = [batch] * (n_particles // batch)
    if n_particles % batch:
        sizes.append(n_particles % batch)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, seqs))

    def run(job):
        return _run_batch(beam, pair, job[0], job[1], record)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    t1 = sum(p[2] for p in parts)
    t2 = sum(p[3] for p in parts)
    N = n_particles
    scale = beam.mass()
    mean = s1 / N
    se = np.sqrt(np.clip(s2 / N - mean**2, 0.0, None) / N)
    tm = t1 / N
    tse = float(np.sqrt(max(t2 / N - tm**2, 0.0) / N))
    exits = {}
    if record:
        exits = {k: np.concatenate([p[4][k] for p in parts]) for k in parts[0][4]}
        exits["weight"] = exits["weight"] * scale / N
    return MCResult(mean * scale, se * scale, float(tm * scale), tse * scale, N, seed, exits)


def exits_as_distribution(res: MCResult, R: float, orders=None) -> BoundaryDistribution:
    """Recorded exits as weighted atoms on F+ (optionally one order class)."""
    from .geometry import RaySet
    e = res.exits
    sel = np.ones(len(e["weight"]), dtype=bool) if orders is None else np.isin(np.minimum(e["order"], 2), orders)
    d = e["dir"][sel]
    rays = RaySet(d, e["foot"][sel], np.ones(int(sel.sum())), np.zeros(int(sel.sum()), dtype=int), d[:1], R)
    return BoundaryDistribution(rays, e["weight"][sel], +1)
