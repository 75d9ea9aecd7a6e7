import json

import pandas as pd
import pytest

from src.main import main
from src.models.estimation import LoglikReport
from src.services.storage import StorageError, read_dataset_csv, write_json

HO_OU = {"family": "ho_ou", "tau": 1.0, "theta": 0.5, "sigma": 0.2}
STILL = {
    "family": "custom",
    "name": "still",
    "tau": 1.0,
    "drift": {"kind": "const", "value": 0.0},
    "diffusion": {"kind": "const", "value": 0.0},
}


@pytest.fixture
def run(tmp_path):
    """Write a run document and call the entry point on it."""

    def _run(document, *flags, out="out"):
        config = tmp_path / f"{document['command']}.json"
        config.write_text(json.dumps(document), encoding="utf-8")
        out_dir = tmp_path / out
        code = main(["--config", str(config), "--out", str(out_dir), "--quiet", *flags])
        return code, out_dir

    return _run


def simulate_document(model=HO_OU, horizon=5.0, n_paths=1, seed=42, value=0.0):
    return {
        "command": "simulate",
        "model": model,
        "initial_history": {"value": value},
        "simulation": {"dt": 0.01, "horizon": horizon, "n_paths": n_paths},
        "seed": seed,
    }


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


class TestSimulate:
    def test_writes_paths_and_manifest(self, run):
        code, out = run(simulate_document(n_paths=3))
        assert code == 0
        manifest = read_json(out / "manifest.json")
        assert manifest["outputs"] == ["path_0.csv", "path_1.csv", "path_2.csv"]
        assert manifest["seed"] == 42
        assert manifest["config"]["model"]["family"] == "ho_ou"
        for name in manifest["outputs"]:
            frame = pd.read_csv(out / name)
            assert list(frame.columns) == ["time", "value"]
            assert len(frame) == 501

    def test_rerun_is_byte_identical(self, run):
        _, first = run(simulate_document(), out="a")
        _, second = run(simulate_document(), out="b")
        for name in ("path_0.csv", "manifest.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_seed_flag_overrides_document(self, run):
        _, default = run(simulate_document(), out="a")
        _, overridden = run(simulate_document(), "--seed", "7", out="b")
        assert read_json(overridden / "manifest.json")["seed"] == 7
        assert (default / "path_0.csv").read_bytes() != (overridden / "path_0.csv").read_bytes()

    def test_still_model_writes_a_constant_path(self, run):
        code, out = run(simulate_document(model=STILL, horizon=1.0, value=2.5))
        assert code == 0
        frame = pd.read_csv(out / "path_0.csv")
        assert (frame["value"] == 2.5).all()
        assert len(frame) == 101

    def test_output_loads_back_as_data(self, run):
        _, out = run(simulate_document(horizon=1.0))
        data = read_dataset_csv(out / "path_0.csv")
        assert len(data) == 101
        assert data.times[0] == 0.0


class TestExitCodes:
    def test_invalid_document(self, run):
        document = simulate_document()
        document["simulation"]["dt"] = -0.01
        code, _ = run(document)
        assert code == 2

    def test_missing_section(self, run):
        document = simulate_document()
        del document["simulation"]
        code, _ = run(document)
        assert code == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json"), "--quiet"]) == 2

    def test_seed_out_of_range(self, run):
        code, _ = run(simulate_document(), "--seed", str(2**64))
        assert code == 2

    def test_negative_diffusion_is_numerical(self, run):
        model = dict(STILL, diffusion={"kind": "const", "value": -0.5})
        code, _ = run(simulate_document(model=model, horizon=1.0))
        assert code == 3

    def test_malformed_csv_header(self, run, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text("t,y\n0.0,1.0\n0.1,1.0\n", encoding="utf-8")
        document = {
            "command": "loglik",
            "model": HO_OU,
            "fit": {"dt": 0.01},
            "data": str(data),
        }
        code, _ = run(document)
        assert code == 2
        assert "line 1" in capsys.readouterr().err

    def test_non_numeric_cell(self, run, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text("time,value\n0.0,1.0\n0.1,oops\n", encoding="utf-8")
        document = {"command": "loglik", "model": HO_OU, "fit": {"dt": 0.01}, "data": str(data)}
        code, _ = run(document)
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_out_is_an_existing_file(self, tmp_path, capsys):
        config = tmp_path / "simulate.json"
        config.write_text(json.dumps(simulate_document(horizon=1.0)), encoding="utf-8")
        blocker = tmp_path / "afile"
        blocker.write_text("taken", encoding="utf-8")
        code = main(["--config", str(config), "--out", str(blocker), "--quiet"])
        assert code == 2
        assert "output directory" in capsys.readouterr().err

    def test_unwritable_report_is_a_storage_error(self, tmp_path):
        blocker = tmp_path / "afile"
        blocker.write_text("taken", encoding="utf-8")
        report = LoglikReport(loglik=-1.0, params={}, n_steps=1, pair_logliks=[-1.0])
        with pytest.raises(StorageError):
            write_json(report, blocker / "loglik.json")


class TestFitAndLoglik:
    @pytest.fixture
    def data_file(self, run):
        _, out = run(simulate_document(horizon=5.0), out="data")
        return out / "path_0.csv"

    def test_fit_recovers_a_finite_optimum(self, run, data_file):
        document = {"command": "fit", "model": HO_OU, "fit": {"dt": 0.01}, "data": str(data_file)}
        code, out = run(document)
        assert code == 0
        result = read_json(out / "fit_result.json")
        assert set(result["theta_hat"]) == {"theta", "sigma"}
        assert result["converged"] is True
        assert "trace" not in result
        assert read_json(out / "manifest.json")["outputs"] == ["fit_result.json"]

    def test_fit_out_of_budget_exits_4(self, run, data_file):
        document = {
            "command": "fit",
            "model": HO_OU,
            "fit": {"dt": 0.01, "max_evals": 1},
            "data": str(data_file),
        }
        code, out = run(document)
        assert code == 4
        result = read_json(out / "fit_result.json")
        assert result["converged"] is False
        assert result["n_evals"] == 1

    def test_loglik_report(self, run, data_file):
        document = {"command": "loglik", "model": HO_OU, "fit": {"dt": 0.01}, "data": str(data_file)}
        code, out = run(document)
        assert code == 0
        report = read_json(out / "loglik.json")
        assert report["n_steps"] == 400
        assert report["params"] == {"theta": 0.5, "sigma": 0.2}
        assert len(report["pair_logliks"]) == 4
        assert report["loglik"] == pytest.approx(sum(report["pair_logliks"]))

    def test_grid_must_divide_order(self, run, data_file):
        document = {"command": "loglik", "model": HO_OU, "fit": {"dt": 0.03}, "data": str(data_file)}
        code, _ = run(document)
        assert code == 2


class TestCheck:
    def check_document(self, model):
        return {
            "command": "check",
            "model": model,
            "initial_history": {"value": 1.0},
            "check": {
                "dt": 0.05,
                "n_samples": 20_000,
                "t": 1.0,
                "T": 2.0,
                "ck_samples": 2000,
            },
            "seed": 3,
        }

    def test_report_layout(self, run):
        code, out = run(self.check_document(HO_OU))
        assert code in (0, 4)
        report = read_json(out / "diagnostics.json")
        for key in ("D1", "D2", "D1_expected", "D2_expected", "ks_statistic", "ck", "checks"):
            assert key in report
        assert report["D1_expected"] == pytest.approx(-0.5)
        assert set(report["checks"]) == {"D1", "D2", "ck"}
        assert report["passed"] == (code == 0)

    def test_deterministic_model_passes_exactly(self, run):
        model = dict(HO_OU, sigma=0.0)
        code, out = run(self.check_document(model))
        assert code == 0
        report = read_json(out / "diagnostics.json")
        assert report["ks_statistic"] == 0.0
        assert report["D1"]["std_error"] == pytest.approx(0.0, abs=1e-15)

    def test_negative_diffusion_is_numerical(self, run):
        model = dict(STILL, diffusion={"kind": "const", "value": -0.5})
        code, out = run(self.check_document(model))
        assert code == 3
        assert not (out / "diagnostics.json").exists()
