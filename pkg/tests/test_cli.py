import csv
import json

import pytest

from qfk_lab import cli
from qfk_lab.errors import ConvergenceError, ResourceError
from qfk_lab.experiments import ConfigError, check_resources, normalize_config

TINY = {
    "variance": {"circuits": [{"family": "HEA", "L": 2, "kernels": ["Fidelity", "SLDQFKParamShift"]},
                              {"family": "ALA", "m": 2, "L": 2, "kernels": ["ALDQFKNormalized"]}],
                 "n_values": [2, 4], "points": 8, "data_sets": 2, "param_sets": 2},
    "fourier": {"settings": [[2, 1]], "grid_points": 30, "theta_seeds": 2},
    "classify": {"L_values": [2], "w_values": [2, 3, 4], "theta_seeds": 2, "points": 40, "grid_points": 30},
    "geodiff": {"n_values": [2, 3], "points": 10, "trials": 2},
    "moments": {"dims": [2], "samples": 2000, "closure_samples": 1000, "fidelity_n": [2],
                "aldqfk_n": [2], "ala_n": [4], "jackknife_batches": 10},
}


def _run(tmp_path, sub, cfg=None, *extra):
    path = tmp_path / f"{sub}.json"
    path.write_text(json.dumps(TINY[sub] if cfg is None else cfg))
    out = tmp_path / f"out_{sub}_{len(list(tmp_path.iterdir()))}"
    code = cli.main([sub, "--config", str(path), "--out", str(out), *extra])
    return code, out


def _rows(out):
    with open(out / "results.csv") as fh:
        return list(csv.DictReader(fh))


class TestSubcommands:
    @pytest.mark.parametrize("sub", sorted(TINY))
    def test_runs_and_writes(self, sub, tmp_path):
        code, out = _run(tmp_path, sub)
        assert code == 0
        for name in ("config.normalized.json", "results.csv", "report.json"):
            assert (out / name).exists()
        assert _rows(out)
        saved = json.loads((out / "config.normalized.json").read_text())
        assert saved["subcommand"] == sub and "seed" in saved

    @pytest.mark.parametrize("sub", ["variance", "fourier", "moments"])
    def test_byte_identical_rerun(self, sub, tmp_path):
        _, a = _run(tmp_path, sub)
        _, b = _run(tmp_path, sub)
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
        # rerunning from the saved normalized config reproduces the rows
        saved = json.loads((a / "config.normalized.json").read_text())
        _, c = _run(tmp_path, sub, saved)
        assert (a / "results.csv").read_bytes() == (c / "results.csv").read_bytes()

    def test_threads_do_not_change_results(self, tmp_path):
        _, a = _run(tmp_path, "variance")
        _, b = _run(tmp_path, "variance", None, "--threads", "3")
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_seed_changes_results(self, tmp_path):
        _, a = _run(tmp_path, "variance")
        _, b = _run(tmp_path, "variance", None, "--seed", "5")
        assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()

    def test_variance_rows_carry_provenance(self, tmp_path):
        _, out = _run(tmp_path, "variance")
        for r in _rows(out):
            assert r["circuit_hash"] and r["seed"] == "0"

    def test_moments_closure_rows(self, tmp_path):
        _, out = _run(tmp_path, "moments")
        groups = {r["group"] for r in _rows(out)}
        assert groups == {"moment", "fidelity-global", "aldqfk-global", "aldqfk-ala"}

    def test_geodiff_flags_synthetic_inputs(self, tmp_path):
        _, out = _run(tmp_path, "geodiff")
        report = json.loads((out / "report.json").read_text())
        assert "synthetic" in report["comparators"]["inputs"]
        assert all(r["synthetic_inputs"] == "True" for r in _rows(out))


class TestExitCodes:
    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert cli.main(["variance", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert cli.main(["variance", "--config", str(tmp_path / "none.json")]) == 2

    def test_unknown_key(self, tmp_path):
        code, _ = _run(tmp_path, "variance", {"pointz": 3})
        assert code == 2

    def test_unknown_kernel(self, tmp_path):
        code, _ = _run(tmp_path, "fourier", {"kernels": ["Linear"]})
        assert code == 2

    def test_multidimensional_fourier(self, tmp_path):
        code, _ = _run(tmp_path, "fourier", {"input_dim": 2})
        assert code == 2

    def test_unknown_subcommand(self):
        assert cli.main(["nope"]) == 2

    def test_resource_refusal(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QFK_MAX_QUBITS", "5")
        cfg = dict(TINY["variance"], n_values=[2, 6])
        code, out = _run(tmp_path, "variance", cfg)
        assert code == 3
        assert not out.exists()

    def test_convergence_failure(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise ConvergenceError("stuck", residual=1e-3)

        monkeypatch.setitem(cli.RUNNERS, "classify", boom)
        code, _ = _run(tmp_path, "classify")
        assert code == 4


class TestConfig:
    def test_defaults_materialized(self):
        cfg = normalize_config({}, "variance")
        assert cfg["points"] == 100 and cfg["data_sets"] == 5 and cfg["seed"] == 0

    def test_quick_profile(self):
        cfg = normalize_config({}, "variance", quick=True)
        assert (cfg["points"], cfg["data_sets"], cfg["param_sets"]) == (20, 2, 2)
        assert normalize_config({}, "fourier", quick=True)["theta_seeds"] == 3

    def test_flags_override(self):
        cfg = normalize_config({"seed": 3, "threads": 2}, "moments", seed=9, threads=4)
        assert cfg["seed"] == 9 and cfg["threads"] == 4

    def test_wrong_subcommand(self):
        with pytest.raises(ConfigError):
            normalize_config({"subcommand": "fourier"}, "variance")

    def test_moment_dimension_limit(self):
        with pytest.raises(ConfigError):
            normalize_config({"dims": [32]}, "moments")

    def test_resource_check(self, monkeypatch):
        monkeypatch.setenv("QFK_MAX_QUBITS", "10")
        check_resources(6, 4)
        with pytest.raises(ResourceError):
            check_resources(11, 1)
        with pytest.raises(ResourceError):
            check_resources(9, 100)
