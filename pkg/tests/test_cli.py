import csv
import json
import math

import pytest

from albedo_lab.cli import DEFAULTS, load_config, main, run
from albedo_lab.errors import ConfigError


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_defaults_validate():
    cfg = load_config()
    assert cfg["resolution"]["N"] == DEFAULTS["resolution"]["N"]


@pytest.mark.parametrize("bad", [{"phantom": {"name": "cube"}}, {"seed": -1}, {"extra": 1},
                                 {"beams": [{"x0p": [0, 0], "v0p": [0, 0, 1]}]},
                                 {"phantom": {"name": "ball", "g": 1.5}}])
def test_config_errors(tmp_path, bad):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, bad))


def test_unreadable_config(tmp_path, capsys):
    code = main(["validate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert json.loads((tmp_path / "o" / "error.json").read_text()) == err


def test_validate_zero(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "zero"}, "monte_carlo": {"particles": 20000}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    rep = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert rep["ok"]
    masses = [c for c in rep["checks"] if c["check"].startswith("trace-norms")][0]["masses"]
    assert masses["single"] == 0 and masses["multiple"] == 0


def test_validate_scattering_ball(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "ball"}, "monte_carlo": {"particles": 20000}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    checks = {c["check"]: c for c in json.loads((tmp_path / "v" / "validate.json").read_text())["checks"]}
    assert checks["mass-balance-0"]["passed"] and checks["mass-balance-0"]["value"] < 0.02
    assert checks["kernel-vs-mc-0"]["passed"]


def test_validate_refuses_supercritical(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "ball", "sigma0": 0.0, "c": 0.3}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 2
    err = json.loads((tmp_path / "v" / "error.json").read_text())
    assert err["error"] == "RefusalError"


def test_bad_threads(tmp_path):
    assert run("validate", out=str(tmp_path / "t"), threads=0) == 2


def test_albedo_artifacts_deterministic(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "ball"}, "monte_carlo": {"particles": 30000}})
    assert main(["albedo", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["albedo", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "albedo_0.json" in names and "albedo_0_single.f64" in names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    rec = json.loads((tmp_path / "a" / "albedo_0.json").read_text())
    assert all(r["passed"] for r in rec["cross_check"])
    assert rec["config_hash"] == json.loads((tmp_path / "a" / "config.json").read_text())["config_hash"]


def test_forward(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "ball"}})
    assert main(["forward", "--config", cfg, "--out", str(tmp_path / "f")]) == 0
    rep = json.loads((tmp_path / "f" / "neumann_report.json").read_text())
    assert rep["report"]["tail_bound"] < 1e-6
    assert rep["outgoing_mass"] + rep["absorbed"] == pytest.approx(1.0, rel=0.02)
    assert (tmp_path / "f" / "outgoing_scattered.f64").exists()


def test_reconstruct_small(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "smooth-bump"},
                           "resolution": {"N": 17, "sweep_angles": 16, "sweep_offsets": 16}})
    assert main(["reconstruct", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    err = json.loads((tmp_path / "r" / "errors.json").read_text())["errors"]
    assert all(math.isfinite(v) for v in err.values())
    with open(tmp_path / "r" / "rejections.csv") as fh:
        assert next(csv.reader(fh)) == ["beam", "t_prime", "direction", "reason", "E"]
    for stem in ("sinogram", "sigma_hat", "k_hat"):
        assert (tmp_path / "r" / f"{stem}.f64").exists()


@pytest.mark.slow
def test_stability_small_grid(tmp_path):
    cfg = write(tmp_path, {"phantom": {"name": "smooth-bump"},
                           "stability": {"n_sigma": 2, "n_k": 2, "etas": [0.4, 0.2], "deltas": [0.1]}})
    code = main(["stability", "--config", cfg, "--out", str(tmp_path / "s")])
    with open(tmp_path / "s" / "stability.csv") as fh:
        rows = list(csv.DictReader(fh))
    cells = {r["cell"] for r in rows if r["inequality"] in ("line", "segment")}
    assert cells == {"sigma-0", "sigma-1", "k-0", "k-1"}
    assert sum(r["inequality"] in ("line", "segment") for r in rows) == 2 * len(cells)
    assert all(math.isfinite(float(r["margin"])) for r in rows)
    assert code == (0 if all(r["passed"] == "True" for r in rows) else 3)
