import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from ddkf.cli import main
from ddkf.io import read_trajectory_csv, write_trajectory_csv
from ddkf.trajectory import Trajectory, stack


@pytest.fixture
def record_csv(system, rng, tmp_path):
    u, y, _ = system.record(rng, 400)
    path = tmp_path / "record.csv"
    write_trajectory_csv(path, stack(u, y), with_time=True)
    return path


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestEstimateInnovations:

    def test_writes_innovations_and_report(self, record_csv, tmp_path):
        out = tmp_path / "innovations"
        assert main(["estimate-innovations", "--data", str(record_csv), "--L", "10", "--out", str(out)]) == 0
        innovations = read_trajectory_csv(out / "innovations.csv")
        assert innovations.channel_names == ("e:1",)
        assert innovations.length == 390
        report = json.loads((out / "innovations.json").read_text())
        assert report["L"] == 10 and report["N"] == 390
        assert "passed" in report["whiteness"]

    def test_aic_candidates(self, record_csv, tmp_path):
        out = tmp_path / "aic"
        assert main(["estimate-innovations", "--data", str(record_csv), "--L-candidates", "2,5,10",
                     "--out", str(out)]) == 0
        report = json.loads((out / "innovations.json").read_text())
        assert report["L"] in (2, 5, 10)
        assert [row["L"] for row in report["aic"]] == [2, 5, 10]
        assert (out / "aic.csv").exists()

    def test_missing_data_file(self, tmp_path, capsys):
        code = main(["estimate-innovations", "--data", str(tmp_path / "absent.csv"), "--L", "5",
                     "--out", str(tmp_path)])
        assert code == 8
        assert _error(capsys)["error"] == "data-format"


class TestBuildAndPredict:

    def test_build_then_predict(self, record_csv, system, rng, tmp_path):
        build_dir = tmp_path / "build"
        assert main(["build", "--data", str(record_csv), "--L", "10", "--T-p", "6", "--T-f", "4",
                     "--n-x-bar", "2", "--out", str(build_dir)]) == 0
        model = json.loads((build_dir / "model.json").read_text())
        assert model["horizon"] == {"T_p": 6, "T_f": 4, "n_x_bar": 2, "n_u": 1, "n_y": 1}
        report = json.loads((build_dir / "build_report.json").read_text())
        assert report["dare"]["spectral_radius"] < 1.0

        u, y, _ = system.record(rng, 60)
        write_trajectory_csv(tmp_path / "past.csv", stack(u.segment(0, 49), y.segment(0, 49)))
        write_trajectory_csv(tmp_path / "future.csv", u.segment(50, 53))
        predict_dir = tmp_path / "predict"
        assert main(["predict", "--model", str(build_dir / "model.json"), "--past", str(tmp_path / "past.csv"),
                     "--future", str(tmp_path / "future.csv"), "--out", str(predict_dir)]) == 0
        predictions = pd.read_csv(predict_dir / "predictions.csv")
        assert list(predictions.columns) == ["y:1"]
        assert len(predictions) == 4
        assert np.all(np.isfinite(predictions.to_numpy()))

    def test_profile_paths_are_relative_to_the_profile(self, record_csv, tmp_path):
        profile = tmp_path / "build.json"
        profile.write_text(json.dumps({"command": "build", "schema_version": 1, "data": record_csv.name,
                                       "L": 10, "T_p": 6, "T_f": 4, "n_x_bar": 2}))
        assert main(["build", "--config", str(profile), "--out", str(tmp_path / "from_profile")]) == 0
        assert (tmp_path / "from_profile" / "model.json").exists()

    def test_shipped_example_profile_builds(self, tmp_path):
        profile = Path(__file__).resolve().parents[1] / "profiles" / "build_example.json"
        assert main(["build", "--config", str(profile), "--out", str(tmp_path)]) == 0
        model = json.loads((tmp_path / "model.json").read_text())
        assert model["horizon"] == {"T_p": 12, "T_f": 8, "n_x_bar": 4, "n_u": 2, "n_y": 2}

    def test_future_of_wrong_length(self, record_csv, tmp_path, capsys):
        build_dir = tmp_path / "build"
        main(["build", "--data", str(record_csv), "--L", "10", "--T-p", "6", "--T-f", "4", "--n-x-bar", "2",
              "--out", str(build_dir)])
        write_trajectory_csv(tmp_path / "future.csv", Trajectory(np.zeros((1, 3)), ["u:1"]))
        code = main(["predict", "--model", str(build_dir / "model.json"), "--past", str(record_csv),
                     "--future", str(tmp_path / "future.csv"), "--out", str(tmp_path / "predict")])
        assert code == 4
        assert _error(capsys)["error"] == "dimension-mismatch"

    def test_record_too_short_for_the_model(self, system, rng, tmp_path, capsys):
        u, y, _ = system.record(rng, 30)
        path = tmp_path / "short.csv"
        write_trajectory_csv(path, stack(u, y))
        code = main(["build", "--data", str(path), "--L", "10", "--T-p", "6", "--T-f", "4", "--n-x-bar", "2",
                     "--out", str(tmp_path / "build")])
        assert code == 3
        assert _error(capsys)["error"] == "insufficient-data"

    def test_order_bound_too_large(self, record_csv, tmp_path, capsys):
        code = main(["build", "--data", str(record_csv), "--L", "10", "--T-p", "2", "--T-f", "2",
                     "--n-x-bar", "5", "--out", str(tmp_path)])
        assert code == 4


class TestBenchmark:

    def test_airspeed_is_required(self, tmp_path, capsys):
        profile = tmp_path / "benchmark.json"
        profile.write_text(json.dumps({"command": "benchmark", "schema_version": 1, "mc_runs": 1}))
        assert main(["benchmark", "--config", str(profile), "--out", str(tmp_path / "out")]) == 2
        assert _error(capsys)["error"] == "schema"

    @pytest.mark.slow
    def test_result_is_reproducible(self, tmp_path):
        profile = tmp_path / "smoke.json"
        profile.write_text(json.dumps({"command": "benchmark", "schema_version": 1, "V": 774.0, "N": 600, "L": 20,
                                       "T_p": 12, "T_f": 8, "mc_runs": 2, "sim_duration": 6.0, "step_time": 1.0,
                                       "methods": ["unfiltered-smm", "oracle-kf"]}))
        for name in ("first", "second"):
            assert main(["benchmark", "--config", str(profile), "--seed", "3", "--quiet",
                         "--out", str(tmp_path / name)]) == 0
        first = (tmp_path / "first" / "result.json").read_text()
        assert first == (tmp_path / "second" / "result.json").read_text()
        payload = json.loads(first)
        assert payload["provenance"]["master_seed"] == 3
        assert payload["methods"] == ["unfiltered-smm", "oracle-kf"]
        assert len(payload["runs"]) == 4
        assert (tmp_path / "first" / "run_info.json").exists()
