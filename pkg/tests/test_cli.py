import json
import subprocess
import sys

import numpy as np
import pytest

from bellwigner.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main
from bellwigner.pipeline import ExperimentConfig, RunReport, parse_eta_grid, run_sample

SLOW_CHECKS = ["--skip", "error_cross_validation", "--skip", "inefficiency_simulation"]


def run_cli(*args):
    return main([str(a) for a in args])


class TestIdeal:
    def test_main_table(self, tmp_path, capsys):
        assert run_cli("ideal", "--out", tmp_path) == EXIT_OK
        rows = (tmp_path / "probabilities.csv").read_text().splitlines()
        assert len(rows) == 65
        probs = [float(r.split(",")[-1]) for r in rows[1:]]
        assert {round(p, 4) for p in probs} == {0.4268, 0.0732, 0.0}
        summary = json.loads(capsys.readouterr().out)
        assert summary["S"] == pytest.approx(2 * np.sqrt(2), abs=1e-12)

    @pytest.mark.parametrize("variant", ["alt_observables", "alt_polarizer_protocol"])
    def test_variants_same_s(self, tmp_path, capsys, variant):
        assert run_cli("ideal", "--variant", variant, "--out", tmp_path) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["S"] == pytest.approx(2 * np.sqrt(2), abs=1e-12)

    def test_report_written(self, tmp_path):
        run_cli("ideal", "--out", tmp_path)
        report = RunReport.from_json((tmp_path / "report.json").read_text())
        assert report.counts is None and report.exact.method == "exact"


class TestSample:
    def test_zero_noise_near_tsirelson(self, tmp_path, capsys):
        assert run_cli("sample", "--out", tmp_path, "--seed", 1) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert abs(summary["S"] - 2 * np.sqrt(2)) < 3 * summary["sigma_analytic"]
        assert (tmp_path / "counts.csv").read_text().startswith(
            "setting_x,setting_y,outcome_a,outcome_b,eigenvalue_a,eigenvalue_b,count\n")

    def test_seed_gives_identical_bytes(self, tmp_path):
        names = ("report.json", "counts.csv", "probabilities.csv")
        snapshots = []
        for _ in range(2):
            run_cli("sample", "--out", tmp_path, "--seed", 42, "--mc-samples", 20000)
            snapshots.append([(tmp_path / n).read_bytes() for n in names])
        assert snapshots[0] == snapshots[1]
        run_cli("sample", "--out", tmp_path, "--seed", 43, "--mc-samples", 20000)
        assert (tmp_path / "counts.csv").read_bytes() != snapshots[0][1]

    def test_report_roundtrip(self):
        report = run_sample(ExperimentConfig(seed=3, mc_samples=10_000))
        assert RunReport.from_json(report.to_json()) == report

    def test_polarizer_variant(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"variant": "alt_polarizer_protocol",
                                   "noise": {"polarizer_loss": 0.0483}, "mc_samples": 10000}))
        assert run_cli("sample", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
        assert json.loads(capsys.readouterr().out)["S"] > 2

    def test_config_file_and_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5, "total_events": 800,
                                   "noise": {"source_fidelity": 0.987, "bsm_fidelity": 0.9684}}))
        merged = ExperimentConfig.load(cfg).with_overrides(seed=9, total_events=None)
        assert merged.seed == 9 and merged.total_events == 800
        assert merged.noise.bsm_infidelity == pytest.approx(0.0316)


class TestLoophole:
    def test_threshold_lines(self, tmp_path, capsys):
        assert run_cli("loophole", "--out", tmp_path) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "threshold 0.8748"
        assert out[1] == "chsh_reference 0.8284"
        rows = (tmp_path / "efficiency.csv").read_text().splitlines()
        assert rows[0] == "eta,S" and len(rows) == 22
        assert float(rows[-1].split(",")[1]) == pytest.approx(2 * np.sqrt(2))

    def test_grid_parsing(self):
        assert parse_eta_grid("0.9:1.0:0.05") == [0.9, 0.95, 1.0]

    @pytest.mark.parametrize("grid", ["0.9:1.0", "1:0.5:0.1", "0:1:0", "a:b:c"])
    def test_bad_grid(self, tmp_path, grid):
        assert run_cli("loophole", "--eta-grid", grid, "--out", tmp_path) == EXIT_CONFIG


class TestErrors:
    def test_unknown_variant_in_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"variant": "tripartite"}))
        assert run_cli("ideal", "--config", cfg, "--out", tmp_path) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert run_cli("ideal", "--config", tmp_path / "nope.json") == EXIT_CONFIG

    def test_unknown_field(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"events": 10}))
        assert run_cli("ideal", "--config", cfg) == EXIT_CONFIG

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run_cli("ideal", "--out", blocker / "sub") == EXIT_CONFIG

    def test_bad_flag(self):
        assert run_cli("sample", "--events", "many") == EXIT_CONFIG

    def test_too_few_events(self):
        assert run_cli("sample", "--events", 3) == EXIT_CONFIG


class TestVerify:
    def test_pristine_build_passes(self, capsys):
        code = run_cli("verify")
        assert code == EXIT_OK, capsys.readouterr().err

    def test_passes_without_noise_bracket(self, capsys):
        assert run_cli("verify", "--skip", "noise_plausibility", *SLOW_CHECKS) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "PASS four_photon_amplitudes" in out

    def test_injected_sign_flip_is_named(self, capsys):
        code = run_cli("verify", "--inject-fault", "four_photon_sign",
                       "--skip", "noise_plausibility", *SLOW_CHECKS)
        assert code == EXIT_VERIFY
        manifest = capsys.readouterr().err
        assert "four_photon_amplitudes" in manifest

    def test_tolerance_override_honoured(self, capsys):
        args = ["verify", *SLOW_CHECKS]
        default = run_cli(*args)
        capsys.readouterr()
        widened = run_cli(*args, "--tol", "s_low=0", "--tol", "s_high=3")
        assert "PASS noise_plausibility" in capsys.readouterr().out
        assert (default, widened) == (EXIT_VERIFY, EXIT_OK)

    @pytest.mark.parametrize("bad", [["--tol", "nonsense=1"], ["--tol", "exact=x"],
                                     ["--skip", "no_such_check"]])
    def test_bad_overrides(self, bad):
        assert run_cli("verify", *bad) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bellwigner", "ideal", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["variant"] == "main"
