"""CLI tests: config schema, experiment runners, manifests, determinism."""

from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np

from fastconv import cli, csvio, mc
from fastconv.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, load_config, run
from fastconv.engine import DensityVector


def tiny_density_config(tmp_path: Path, **overrides) -> Path:
    cfg = {
        "experiment": "density",
        "model": {"family": "piecewise", "sigma": 1.0, "epsilon": 2.0},
        "measure": "objective",
        "grid": {"z_min": -10.24, "m": 256},
        "time": {"dtau": 2e-3, "n": 100, "snapshots": [0.1, 0.2]},
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestConfigValidation:
    def test_empty_file_exits_2_naming_missing_field(self, tmp_path, capsys):
        p = tmp_path / "empty.json"
        p.write_text("{}")
        assert run(str(p)) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "experiment" in err

    def test_non_json_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("not json at all")
        assert run(str(p)) == EXIT_CONFIG

    def test_unknown_keys_rejected(self, tmp_path):
        p = tiny_density_config(tmp_path)
        cfg = json.loads(p.read_text())
        cfg["surprise"] = 1
        p.write_text(json.dumps(cfg))
        assert run(str(p)) == EXIT_CONFIG

    def test_missing_block_for_experiment(self, tmp_path):
        p = tiny_density_config(tmp_path)
        cfg = json.loads(p.read_text())
        del cfg["time"]
        p.write_text(json.dumps(cfg))
        assert run(str(p)) == EXIT_CONFIG

    def test_joint_requires_u_grid(self, tmp_path):
        p = tmp_path / "joint.json"
        p.write_text(json.dumps({
            "experiment": "joint-density",
            "model": {"family": "piecewise", "sigma": 1.0, "epsilon": 2.0},
            "measure": "risk-neutral",
            "functional": "geometric-average",
            "grid": {"z_min": -10.24, "m": 256},
            "time": {"dtau": 2e-3, "n": 50},
            "output_dir": str(tmp_path / "out"),
        }))
        assert run(str(p)) == EXIT_CONFIG

    def test_domain_violation_is_numerical_failure(self, tmp_path):
        p = tiny_density_config(tmp_path)
        cfg = json.loads(p.read_text())
        cfg["model"]["epsilon"] = -2.0
        p.write_text(json.dumps(cfg))
        assert run(str(p)) == EXIT_NUMERICAL

    def test_bundled_configs_all_validate(self):
        names = [
            "stationary_quadratic", "friedrich_fx", "piecewise_objective_eps2",
            "piecewise_rn_eps2", "asian_joint", "vnb_joint", "vanilla_piecewise_atm",
            "asian_price_atm", "vnb_price_atm", "vnb_surface_a01_w0",
            "vnb_surface_a01_w5", "vnb_surface_a04_w0", "vnb_surface_a04_w5",
        ]
        for name in names:
            cfg = load_config(cli.bundled_config_path(name))
            assert cfg["experiment"] in ("density", "joint-density", "price", "surface")


class TestDensityExperiment:
    def test_outputs_and_manifest(self, tmp_path):
        p = tiny_density_config(tmp_path)
        assert run(str(p)) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "density_tau0.1.csv").exists()
        assert (out / "density_tau0.2.csv").exists()
        manifest = json.loads((out / "run-manifest.json").read_text())
        assert manifest["package"] == "fastconv"
        assert manifest["config"]["grid"]["m"] == 256
        assert "tau=0.2" in manifest["mass_deficits"]
        header = (out / "density_tau0.1.csv").read_text().splitlines()[0]
        assert header == "z,density,tau"

    def test_reruns_are_byte_identical(self, tmp_path):
        p = tiny_density_config(tmp_path)
        assert run(str(p)) == EXIT_OK
        first = (tmp_path / "out" / "density_tau0.2.csv").read_bytes()
        assert run(str(p)) == EXIT_OK
        assert (tmp_path / "out" / "density_tau0.2.csv").read_bytes() == first

    def test_manifest_round_trip(self, tmp_path):
        p = tiny_density_config(tmp_path)
        assert run(str(p)) == EXIT_OK
        out = tmp_path / "out"
        first = (out / "density_tau0.2.csv").read_bytes()
        # re-run from the manifest alone
        assert run(str(out / "run-manifest.json")) == EXIT_OK
        assert (out / "density_tau0.2.csv").read_bytes() == first

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FASTCONV_OUTPUT_ROOT", str(tmp_path / "root"))
        p = tiny_density_config(tmp_path, output_dir="nested/exp")
        assert run(str(p)) == EXIT_OK
        assert (tmp_path / "root" / "nested" / "exp" / "run-manifest.json").exists()


class TestPriceExperiment:
    def test_price_with_mc_and_seed_override(self, tmp_path):
        cfg = {
            "experiment": "price",
            "model": {"family": "piecewise", "sigma": 1.0, "epsilon": 2.0, "r": 0.03},
            "grid": {"z_min": -10.24, "m": 512},
            "time": {"dtau": 2e-3, "n": 500},
            "contract": {"spot": 100.0, "strike": 100.0, "maturity": 0.25, "rate": 0.03,
                         "t0": 0.0, "kind": "call", "style": "vanilla-piecewise"},
            "mc": {"n_paths": 5000, "seed": 3},
            "output_dir": str(tmp_path / "out"),
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        assert run(str(p)) == EXIT_OK
        out = tmp_path / "out"
        rows = (out / "price.csv").read_text().splitlines()
        assert rows[0] == "style,strike,maturity,price,mass_deficit"
        assert rows[1].startswith("vanilla-piecewise,100,")
        mc1 = (out / "mc_estimates.csv").read_text()
        assert run(str(p), seed_override=4) == EXIT_OK
        mc2 = (out / "mc_estimates.csv").read_text()
        assert mc1 != mc2  # seed override reaches the sampler
        price2 = (out / "price.csv").read_text().splitlines()[1]
        assert price2 == rows[1]  # the deterministic engine is untouched

    def test_joint_density_experiment(self, tmp_path):
        cfg = {
            "experiment": "joint-density",
            "model": {"family": "vnb", "alpha": 0.1, "sigma": 0.3, "t0": 0.2, "T": 0.7,
                      "r": 0.03, "omega0": 0.0},
            "measure": "risk-neutral",
            "functional": "integrated-omega-squared",
            "grid": {"z_min": -10.24, "m": 256, "u_min": -5.12, "m_u": 256},
            "time": {"dtau": 5e-3, "n": 251},
            "output_dir": str(tmp_path / "out"),
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        assert run(str(p)) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "joint.csv").read_text().splitlines()[0] == "u,z,density"
        assert (out / "marginal_z.csv").read_text().splitlines()[0] == "z,density,tau"
        assert (out / "marginal_u.csv").read_text().splitlines()[0] == "u,density,tau"


class TestSubcommands:
    def test_validate_subset(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("FASTCONV_OUTPUT_ROOT", str(tmp_path))
        code = cli.main(["validate", "--criteria", "8,10", "--out", "rep"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "rep" / "validation_report.json").read_text())
        assert [r["criterion"] for r in report] == [8, 10]
        assert all(r["passed"] for r in report)
        printed = capsys.readouterr().out
        assert "ACCEPTANCE" in printed and "PASS" in printed

    def test_bench_smoke(self, capsys):
        code = cli.main(["bench", "--sizes", "256,512", "--steps", "20"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "m=   256" in out or "m=  256" in out.replace("  ", " ")

    def test_bench_rejects_non_power_of_two(self):
        assert cli.main(["bench", "--sizes", "100"]) == EXIT_CONFIG

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "fastconv.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "run" in proc.stdout and "validate" in proc.stdout


class TestCsvWriters:
    def test_seventeen_digit_round_trip(self, tmp_path):
        vals = np.array([1.0 / 3.0, math.pi, 1e-17])
        d = DensityVector(values=vals, tau=0.125, dz=0.5)
        path = tmp_path / "d.csv"
        csvio.write_density_csv(path, d, np.array([-0.5, 0.0, 0.5]))
        rows = path.read_text().splitlines()[1:]
        parsed = np.array([float(r.split(",")[1]) for r in rows])
        assert np.array_equal(parsed, vals)

    def test_histogram_format(self, tmp_path):
        h = mc.histogram(np.array([0.1, 0.2, 0.9]), bins=2, range=(0.0, 1.0))
        path = tmp_path / "h.csv"
        csvio.write_histogram_csv(path, h)
        lines = path.read_text().splitlines()
        assert lines[0] == "bin_lo,bin_hi,density,ci_lo,ci_hi"
        assert len(lines) == 3

    def test_estimates_format(self, tmp_path):
        est = mc.McEstimate(mean=1.25, std_error=0.5)
        path = tmp_path / "e.csv"
        csvio.write_estimates_csv(path, [("atm-call", est)])
        lines = path.read_text().splitlines()
        assert lines[0] == "label,mean,stderr,ci_lo,ci_hi"
        assert lines[1].startswith("atm-call,1.25,0.5,")
