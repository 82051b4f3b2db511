"""Configuration, experiment runners, CSV/manifest output, and the CLI."""

import csv
import json
import subprocess
import sys

import pytest

from recical.config import ConfigError, config_from_dict, default_config, load_config
from recical.experiments import run_experiment


def tiny_mse_config(out_dir, **overrides):
    payload = {
        "experiment": "mse-sweep",
        "seed": 11,
        "trials": 4,
        "out_dir": str(out_dir),
        "mse_sweep": {"n0_grid_db": [-80.0], "antennas": [1, 39]},
    }
    payload.update(overrides)
    return config_from_dict(payload)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_are_valid_for_every_experiment(self):
        for experiment in ("mse-sweep", "convergence", "capacity", "wideband", "crlb-map", "reduced-set"):
            default_config(experiment).validate()

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            config_from_dict({"experiment": "capacity", "typo": 1})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys in section"):
            config_from_dict({"array": {"rows": 4, "colunms": 25}})

    def test_reference_bounds_checked(self):
        with pytest.raises(ConfigError, match="reference antenna"):
            config_from_dict({"array": {"rows": 2, "cols": 2, "ref": 5}})

    def test_tracked_antenna_bounds_checked(self):
        with pytest.raises(ConfigError, match="tracked antenna"):
            config_from_dict(
                {"experiment": "mse-sweep", "array": {"rows": 2, "cols": 2, "ref": 1},
                 "mse_sweep": {"antennas": [9]}}
            )

    def test_small_array_fine_for_other_experiments(self):
        cfg = config_from_dict({"experiment": "wideband", "array": {"rows": 2, "cols": 2, "ref": 1}})
        assert cfg.array.rows == 2

    def test_bad_json_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigError, match="seed"):
            config_from_dict({"seed": -1})

    def test_variant_names_checked(self):
        with pytest.raises(ConfigError, match="unknown capacity variants"):
            config_from_dict({"experiment": "capacity", "capacity": {"variants": ["dirty-paper"]}})


class TestRunners:
    def test_mse_sweep_outputs_and_manifest(self, tmp_path):
        cfg = tiny_mse_config(tmp_path / "run")
        manifest = run_experiment(cfg)
        rows = read_csv(tmp_path / "run" / "mse_sweep.csv")
        assert len(rows) == 4  # one N0, two antennas, two methods
        assert set(rows[0]) == {"n0_db", "antenna", "method", "mse_db", "crlb_db", "crlb_reduced_db", "trials"}
        assert {r["method"] for r in rows} == {"gmm", "em"}
        payload = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert payload["experiment"] == "mse-sweep"
        assert payload["outputs"] == ["mse_sweep.csv"]
        assert payload["config"]["seed"] == 11
        assert payload["seed_ledger"]["experiment_id"] == 1
        assert manifest.wall_time_s > 0

    def test_byte_identical_reruns(self, tmp_path):
        cfg1 = tiny_mse_config(tmp_path / "a")
        cfg2 = tiny_mse_config(tmp_path / "b")
        run_experiment(cfg1)
        run_experiment(cfg2)
        assert (tmp_path / "a" / "mse_sweep.csv").read_bytes() == (tmp_path / "b" / "mse_sweep.csv").read_bytes()

    def test_worker_pool_matches_serial_bytes(self, tmp_path):
        serial = tiny_mse_config(tmp_path / "serial", trials=6)
        pooled = tiny_mse_config(tmp_path / "pooled", trials=6, workers=2)
        run_experiment(serial)
        run_experiment(pooled)
        assert (tmp_path / "serial" / "mse_sweep.csv").read_bytes() == (
            tmp_path / "pooled" / "mse_sweep.csv"
        ).read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        run_experiment(tiny_mse_config(tmp_path / "s1", seed=1))
        run_experiment(tiny_mse_config(tmp_path / "s2", seed=2))
        assert (tmp_path / "s1" / "mse_sweep.csv").read_bytes() != (
            tmp_path / "s2" / "mse_sweep.csv"
        ).read_bytes()

    def test_convergence_run(self, tmp_path):
        cfg = config_from_dict(
            {
                "experiment": "convergence",
                "seed": 5,
                "trials": 3,
                "out_dir": str(tmp_path),
                "estimator": {"epsilon_grid": [0.0, 0.1]},
                "convergence": {"track_iterations": 12},
            }
        )
        run_experiment(cfg)
        rows = read_csv(tmp_path / "convergence.csv")
        assert len(rows) == 2 * 12
        assert set(rows[0]) == {"epsilon", "iteration", "mse_db", "delta"}
        # step sizes shrink along each trace
        for eps in ("0.0", "0.1"):
            deltas = [float(r["delta"]) for r in rows if r["epsilon"] == eps]
            assert deltas[-1] < deltas[0]

    def test_capacity_run(self, tmp_path):
        cfg = config_from_dict(
            {"experiment": "capacity", "seed": 5, "trials": 3, "out_dir": str(tmp_path)}
        )
        run_experiment(cfg)
        rows = read_csv(tmp_path / "capacity.csv")
        assert len(rows) == 5 * 2 * 3  # variants x precoders x trials
        variants = {r["variant"] for r in rows}
        assert variants == {"uncalibrated", "gmm", "em", "perfect", "true-downlink-csi"}

    def test_wideband_run(self, tmp_path):
        cfg = config_from_dict(
            {
                "experiment": "wideband",
                "seed": 5,
                "trials": 1,
                "out_dir": str(tmp_path),
                "array": {"rows": 2, "cols": 4, "ref": 4},
                "wideband": {"n_subcarriers": 64, "n_fft": 128, "realizations": 3},
            }
        )
        manifest = run_experiment(cfg)
        assert sorted(manifest.outputs) == ["wideband_fits.csv", "wideband_ks.csv", "wideband_spectra.csv"]
        ks_rows = read_csv(tmp_path / "wideband_ks.csv")
        # the reference antenna is skipped: its residual is identically zero
        assert {r["antenna"] for r in ks_rows} == {str(a) for a in range(1, 9) if a != 4}
        spectra = read_csv(tmp_path / "wideband_spectra.csv")
        assert max(int(r["component"]) for r in spectra) <= 10

    def test_crlb_map_and_reduced_set(self, tmp_path):
        cfg = config_from_dict(
            {"experiment": "crlb-map", "seed": 5, "out_dir": str(tmp_path / "map"),
             "array": {"rows": 2, "cols": 5, "ref": 3}, "crlb_map": {"n0_grid_db": [-80.0, -60.0]}}
        )
        run_experiment(cfg)
        rows = read_csv(tmp_path / "map" / "crlb_map.csv")
        assert len(rows) == 2 * 9  # two noise levels, nine non-reference antennas
        cfg2 = config_from_dict(
            {"experiment": "reduced-set", "seed": 5, "out_dir": str(tmp_path / "red"),
             "array": {"rows": 2, "cols": 5, "ref": 3}}
        )
        run_experiment(cfg2)
        rows = read_csv(tmp_path / "red" / "reduced_set.csv")
        assert len(rows) == 9
        for r in rows:
            assert float(r["delta_db"]) == pytest.approx(
                float(r["crlb_reduced_db"]) - float(r["crlb_full_db"]), abs=1e-9
            )
            assert float(r["delta_db"]) >= -1e-9


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "recical.cli", *args],
            capture_output=True,
            text=True,
        )

    def test_experiment_runs_and_reports(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "seed": 3, "trials": 2,
            "mse_sweep": {"n0_grid_db": [-80.0], "antennas": [1, 39]},
        }))
        out = tmp_path / "out"
        result = self.run_cli("mse-sweep", "--config", str(cfg), "--out", str(out))
        assert result.returncode == 0, result.stderr
        assert (out / "mse_sweep.csv").exists()
        assert (out / "manifest.json").exists()
        assert "mse_sweep.csv" in result.stdout

    def test_overrides_applied(self, tmp_path):
        out = tmp_path / "o"
        result = self.run_cli("reduced-set", "--seed", "9", "--out", str(out))
        assert result.returncode == 0, result.stderr
        payload = json.loads((out / "manifest.json").read_text())
        assert payload["master_seed"] == 9

    def test_invalid_config_gives_error_json(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"trials": 0}))
        result = self.run_cli("capacity", "--config", str(cfg))
        assert result.returncode == 1
        payload = json.loads(result.stderr)
        assert payload["type"] == "ConfigError"
        assert "trials" in payload["error"]

    def test_unknown_experiment_rejected(self):
        result = self.run_cli("urban-macro")
        assert result.returncode == 2
        assert "invalid choice" in result.stderr

    def test_cli_reruns_byte_identical(self, tmp_path):
        args = ["reduced-set", "--seed", "4"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert self.run_cli(*args, "--out", str(a)).returncode == 0
        assert self.run_cli(*args, "--out", str(b)).returncode == 0
        assert (a / "reduced_set.csv").read_bytes() == (b / "reduced_set.csv").read_bytes()
