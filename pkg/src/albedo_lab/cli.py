"""Batch driver: `albedo-lab <forward|albedo|reconstruct|stability|validate>`."""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .errors import AlbedoLabError, ConfigError, RefusalError
from .storage import canonical_json, provenance, save_array, save_field, write_json

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}
_PHANTOM = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": ["zero", "ball", "smooth-bump", "two-bumps", "anisotropic"]},
        "sigma0": {"type": "number", "minimum": 0},
        "c": {"type": "number", "minimum": 0},
        "phase": {"enum": ["isotropic", "quadratic", "hg"]},
        "g": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
    },
    "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "domain": {"type": "object", "properties": {
            "n": {"enum": [2, 3]}, "R": {"type": "number", "exclusiveMinimum": 0},
            "rho": {"type": "number", "exclusiveMinimum": 0}}, "additionalProperties": False},
        "resolution": {"type": "object", "properties": {
            "N": {"type": "integer", "minimum": 5},
            "direction_level": {"type": "integer", "minimum": 1},
            "lattice_h": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "sweep_angles": {"type": "integer", "minimum": 4},
            "sweep_offsets": {"type": "integer", "minimum": 4}}, "additionalProperties": False},
        "phantom": _PHANTOM,
        "perturbed": {"oneOf": [_PHANTOM, {"type": "null"}]},
        "beams": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["x0p", "v0p"],
            "properties": {"x0p": _VEC, "v0p": _VEC, "eps": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False}},
        "monte_carlo": {"type": "object", "properties": {
            "particles": {"type": "integer", "minimum": 0}}, "additionalProperties": False},
        "reconstruct": {"type": "object", "properties": {
            "eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "delta": {"type": "number", "exclusiveMinimum": 0}}, "additionalProperties": False},
        "stability": {"type": "object", "properties": {
            "n_sigma": {"type": "integer", "minimum": 0}, "n_k": {"type": "integer", "minimum": 0},
            "sigma_amp": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "c_amp": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "etas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
            "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            "l": {"type": "integer", "minimum": 1}, "m": {"type": "integer", "minimum": 1},
            "r_tilde": {"type": "number", "exclusiveMinimum": 0},
            "M": {"type": "number", "exclusiveMinimum": 0},
            "rel_tol": {"type": "number", "minimum": 0}}, "additionalProperties": False},
        "tolerances": {"type": "object", "properties": {
            "neumann": {"type": "number", "exclusiveMinimum": 0},
            "mc_sigmas": {"type": "number", "exclusiveMinimum": 0},
            "quadrature_rel": {"type": "number", "minimum": 0},
            "mass_balance": {"type": "number", "exclusiveMinimum": 0}}, "additionalProperties": False},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
    "additionalProperties": False,
}
DEFAULTS = {
    "domain": {"n": 3, "R": 2.0, "rho": 1.0},
    "resolution": {"N": 17, "direction_level": 1, "lattice_h": None, "sweep_angles": 48, "sweep_offsets": 48},
    "phantom": {"name": "ball"},
    "perturbed": None,
    "beams": [{"x0p": [0.0, 0.0, 0.0], "v0p": [0.0, 0.0, 1.0], "eps": 0.02}],
    "monte_carlo": {"particles": 100_000},
    "reconstruct": {"eps": [0.08, 0.04, 0.02], "delta": 0.05},
    "stability": {"n_sigma": 10, "n_k": 10, "sigma_amp": 0.3, "c_amp": 0.5, "etas": [0.4, 0.2, 0.1, 0.05],
                  "deltas": [0.05, 0.1], "l": 8, "m": 4, "r_tilde": 0.51, "M": 100.0, "rel_tol": 0.02},
    "tolerances": {"neumann": 1e-6, "mc_sigmas": 3.0, "quadrature_rel": 0.02, "mass_balance": 0.02},
    "seed": 0,
    "threads": 1,
    "output": "out",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Read, validate and complete an experiment configuration."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", path=str(path)) from None
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}", path=where) from None
    cfg = _merge(DEFAULTS, raw)
    cfg = _merge(cfg, overrides)
    n = cfg["domain"]["n"]
    for b in cfg["beams"]:
        if len(b["x0p"]) != n or len(b["v0p"]) != n:
            raise ConfigError("beam vectors must match the domain dimension", n=n, beam=b)
    return cfg


class Context:
    """Objects built once per run from a configuration."""

    def __init__(self, cfg: dict):
        from .geometry import DirectionSet, DomainConfig

        self.cfg = cfg
        d = cfg["domain"]
        self.domain = DomainConfig(d["n"], d["R"], d["rho"])
        res = cfg["resolution"]
        self.N = res["N"]
        self.pair = self.phantom(cfg["phantom"])
        self.pair_t = self.phantom(cfg["perturbed"]) if cfg["perturbed"] else None
        self.dirs = DirectionSet.default(self.domain.n, res["direction_level"])
        self.workers = cfg["threads"]
        self.seed = cfg["seed"]
        self._lattice = None

    def phantom(self, spec):
        from .coefficients import make_phantom
        spec = dict(spec)
        return make_phantom(spec.pop("name"), self.domain, self.N, **spec)

    @property
    def lattice(self):
        from .transport import Lattice
        if self._lattice is None:
            h = self.cfg["resolution"]["lattice_h"] or self.pair.grid.h
            self._lattice = Lattice.transport(self.domain, self.dirs, h=h, workers=self.workers)
        return self._lattice

    def beams(self):
        from .albedo import BeamSpec
        return [BeamSpec(tuple(b["x0p"]), tuple(b["v0p"]), b.get("eps", 0.02)) for b in self.cfg["beams"]]

    @property
    def physics(self) -> dict:
        """The configuration minus settings that cannot change results."""
        return {k: v for k, v in self.cfg.items() if k not in ("output", "threads")}

    @property
    def stamp(self) -> dict:
        return provenance(self.physics, self.seed)


def run_forward(ctx: Context, out: Path) -> int:
    from .albedo import sample_beam
    from .transport import solve_neumann

    beam = sample_beam(ctx.beams()[0], ctx.domain.R)
    lat = None if ctx.pair.kappa.is_zero() else ctx.lattice
    sol = solve_neumann(beam, ctx.pair, ctx.cfg["tolerances"]["neumann"], lattice=lat)
    write_json(out / "neumann_report.json", {**ctx.stamp, "report": sol.report.to_dict(),
                                              "outgoing_mass": sol.outgoing_mass(),
                                              "absorbed": sol.absorbed(ctx.pair),
                                              "beam": ctx.beams()[0].to_dict()})
    parts = {"unscattered": sol.orders[0], "scattered": sol.scattered()}
    for name, f in parts.items():
        if f is not None:
            tr = f.trace()
            save_array(out / f"outgoing_{name}", tr.values, {**ctx.stamp, "kind": f"outgoing-trace-{name}",
                                                            "n_rays": len(tr.values)})
    return 0


def _mc_check(dec, mc, tol) -> list:
    rows = []
    for i, key in enumerate(("ballistic", "single", "multiple")):
        det = dec.masses[key]
        allowed = tol["mc_sigmas"] * mc.stderr[i] + tol["quadrature_rel"] * abs(det) + 1e-12
        rows.append({"component": key, "deterministic": det, "monte_carlo": float(mc.masses[i]),
                     "stderr": float(mc.stderr[i]), "allowed": allowed,
                     "passed": bool(abs(det - mc.masses[i]) <= allowed)})
    return rows


def run_albedo(ctx: Context, out: Path) -> int:
    from .albedo import apply_albedo, sample_beam
    from .montecarlo import mc_oracle

    tol = ctx.cfg["tolerances"]
    n_mc = ctx.cfg["monte_carlo"]["particles"]
    for i, spec in enumerate(ctx.beams()):
        beam = sample_beam(spec, ctx.domain.R)
        dec = apply_albedo(beam, ctx.pair, ctx.lattice if not ctx.pair.kappa.is_zero() else None,
                           tol["neumann"], ctx.domain.R, ctx.dirs)
        record = {**ctx.stamp, "beam": spec.to_dict(), "decomposition": dec.to_dict()}
        if n_mc:
            mc = mc_oracle(beam, ctx.pair, n_mc, ctx.seed + i, ctx.workers)
            record["monte_carlo"] = mc.to_dict()
            record["cross_check"] = _mc_check(dec, mc, tol)
        write_json(out / f"albedo_{i}.json", record)
        for key in ("ballistic", "single", "multiple"):
            dist = getattr(dec, key)
            save_array(out / f"albedo_{i}_{key}", dist.values, {**ctx.stamp, "component": key,
                                                                 "beam": spec.to_dict()})
    return 0


def run_reconstruct(ctx: Context, out: Path) -> int:
    from .inversion import recover_k, recover_line_integrals, recover_sigma

    if ctx.domain.n != 3:
        raise ConfigError("reconstruction uses the stacked-slice geometry (n = 3)")
    res, rc = ctx.cfg["resolution"], ctx.cfg["reconstruct"]
    pair = ctx.pair
    sino = recover_line_integrals(pair.sigma, res["sweep_angles"], res["sweep_offsets"], eps=tuple(rc["eps"]),
                                  R=ctx.domain.R)
    save_array(out / "sinogram", sino.stacked, {**ctx.stamp, **sino.to_manifest(),
                                          "flagged": int(np.count_nonzero(sino.flagged))})
    sino.to_csv(out / "sinogram.csv")
    rec = recover_sigma(sino, pair.grid, pair.sigma)
    save_field(out / "sigma_hat", rec.sigma, ctx.stamp)
    k_true = recover_k(pair, pair.sigma, dirs=ctx.dirs, delta=rc["delta"], R=ctx.domain.R)
    k_rec = recover_k(pair, rec.sigma, dirs=ctx.dirs, delta=rc["delta"], R=ctx.domain.R)
    save_field(out / "k_hat", k_rec.assemble(pair.grid, pair.kappa.phase), ctx.stamp)
    k_rec.write_rejections(out / "rejections.csv")
    table = {"sigma_l2_rel": rec.errors.get("l2_rel"), "sigma_h_minus_half": rec.errors.get("h_minus_half"),
             "sigma_sup": rec.errors.get("sup"), "k_rel_true_sigma": k_true.relative_error(),
             "k_rel_reconstructed_sigma": k_rec.relative_error(), "k_samples": int(len(k_rec.khat)),
             "k_rejected": len(k_rec.rejected)}
    write_json(out / "errors.json", {**ctx.stamp, "errors": table})
    lines = ["quantity,value"] + [f"{k},{v!r}" for k, v in table.items()]
    (out / "errors.csv").write_text("\n".join(lines) + "\n")
    return 0


def _default_family(pair):
    from .coefficients import smooth_bump
    g = pair.grid
    b = smooth_bump(g, (0.3 * g.rho,) + (0.0,) * (g.n - 1), 0.5 * g.rho)
    return 0.5 * b, 0.3 * b


def run_stability(ctx: Context, out: Path) -> int:
    from .albedo import BeamSpec
    from .stability import (Responder, StabilityReport, kernel_difference, make_test_function, pairing,
                            perturbation_grid, verify_distance_bounds, verify_holder_exponents)

    st = ctx.cfg["stability"]
    pair = ctx.pair
    resp = Responder(pair, ctx.lattice, ctx.domain.R, ctx.dirs, ctx.cfg["tolerances"]["neumann"])
    spec = ctx.beams()[0]
    report = StabilityReport()
    grid = perturbation_grid(pair, st["n_sigma"], st["n_k"], ctx.seed, st["sigma_amp"], st["c_amp"])
    if ctx.pair_t is not None:
        grid = [("given", 0, {}, ctx.pair_t)] + grid
    first_k = None
    for kind, i, params, pt in grid:
        rt = Responder(pt, ctx.lattice, ctx.domain.R, ctx.dirs, ctx.cfg["tolerances"]["neumann"])
        report.extend(verify_distance_bounds(resp, rt, spec, rel_tol=st["rel_tol"], cell=f"{kind}-{i}"))
        if kind == "k" and first_k is None:
            first_k = rt
    if first_k is not None:
        diff = kernel_difference(pair, first_k.pair)
        for delta in st["deltas"]:
            phi = make_test_function(spec, diff, delta, st["m"], st["l"], ctx.domain.R, dirs=ctx.dirs,
                                     rho=ctx.domain.rho)
            pr = pairing(phi, spec, resp, first_k)
            cell = f"pairing-delta={delta}"
            report.add("pairing-split", cell, abs(pr["I1"] + pr["I2"] + pr["I3"] - pr["total"]), 1e-9, 0.0,
                       delta=delta, eps=pr["eps"])
            report.add("pairing-bound", cell, abs(pr["total"]), pr["norm"], 1e-12, delta=delta, eps=pr["eps"])
    zeta, kp = _default_family(pair)
    beams = [BeamSpec(spec.x0p, spec.v0p, spec.eps)] + [
        BeamSpec.offset(s, ctx.domain.n, spec.eps) for s in (0.3, 0.6)]
    report.extend(verify_holder_exponents(pair, zeta, kp, tuple(st["etas"]), st["r_tilde"], M=st["M"], sweep=[beams],
                               lattice=ctx.lattice, R=ctx.domain.R))
    write_json(out / "stability.json", {**ctx.stamp, **report.to_dict()})
    (out / "stability.csv").write_text(report.to_csv())
    return 0 if report.ok else 3


def run_validate(ctx: Context, out: Path) -> int:
    from .albedo import apply_albedo, sample_beam
    from .coefficients import check_admissible, check_subcritical
    from .montecarlo import mc_oracle
    from .transport import solve_neumann

    tol = ctx.cfg["tolerances"]
    pair = ctx.pair
    checks = []
    adm = check_admissible(pair)
    checks.append({"check": "admissible", "passed": bool(adm.ok), "violations": len(adm.violations)})
    sub = check_subcritical(pair, ctx.domain)
    checks.append({"check": "subcritical", "passed": bool(sub.ok), **sub.to_dict()})
    if sub.ok:
        lat = ctx.lattice if not pair.kappa.is_zero() else None
        n_mc = ctx.cfg["monte_carlo"]["particles"]
        for i, spec in enumerate(ctx.beams()):
            beam = sample_beam(spec, ctx.domain.R)
            dec = apply_albedo(beam, pair, lat, tol["neumann"], ctx.domain.R, ctx.dirs)
            if lat is not None:
                sol = solve_neumann(beam, pair, tol["neumann"], lattice=lat)
                gap = abs(sol.outgoing_mass() + sol.absorbed(pair) - beam.mass()) / beam.mass()
            else:
                gap = 0.0
            checks.append({"check": f"mass-balance-{i}", "value": gap, "tolerance": tol["mass_balance"],
                           "passed": bool(gap <= tol["mass_balance"])})
            checks.append({"check": f"trace-norms-{i}", "masses": dec.masses, "tail_bound": dec.tail_bound,
                           "passed": bool(all(m >= 0 for m in dec.masses.values())
                                          and dec.total_mass() <= beam.mass() + tol["mass_balance"])})
            if n_mc and not pair.kappa.tabulated:
                mc = mc_oracle(beam, pair, n_mc, ctx.seed + i, ctx.workers)
                rows = _mc_check(dec, mc, tol)
                checks.append({"check": f"kernel-vs-mc-{i}", "rows": rows,
                               "passed": all(r["passed"] for r in rows)})
    ok = all(c["passed"] for c in checks)
    write_json(out / "validate.json", {**ctx.stamp, "ok": ok, "checks": checks})
    if not sub.ok:
        raise RefusalError("pair is not subcritical", **sub.to_dict())
    return 0 if ok else 3


COMMANDS = {"forward": run_forward, "albedo": run_albedo, "reconstruct": run_reconstruct,
            "stability": run_stability, "validate": run_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="albedo-lab", description="Albedo operator experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment configuration (defaults when omitted)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    return p


def run(command: str, config=None, out=None, threads=None, seed=None) -> int:
    over = {k: v for k, v in (("output", out), ("threads", threads), ("seed", seed)) if v is not None}
    out_dir = Path(out) if out else None
    try:
        if threads is not None and threads < 1:
            raise ConfigError("threads must be positive", threads=threads)
        cfg = load_config(config, over)
        out_dir = Path(cfg["output"])
        out_dir.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg)
        write_json(out_dir / "config.json", {**ctx.stamp, "config": ctx.physics})
        return COMMANDS[command](ctx, out_dir)
    except AlbedoLabError as exc:
        _report_error(exc.to_dict(), out_dir)
        return exc.exit_code


def _report_error(err: dict, out_dir):
    text = canonical_json(err)
    sys.stderr.write(text)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text)
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
