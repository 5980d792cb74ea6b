import json
from pathlib import Path

import pytest

from triboost.cli import main

SCN = [
    "--set", "num_products=3",
    "--set", "num_weeks_hist=8",
    "--set", "num_weeks_future=3",
    "--set", "launch_schedule=P2:8",
    "--set", "curve=flat",
    "--set", "curve_base=100",
]
TRN = ["--set", "num_rounds=30", "--set", "max_depth=3"]


def run(argv, capsys=None):
    code = main(argv)
    if capsys is not None:
        return code, capsys.readouterr()
    return code


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One generate -> train -> predict run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["generate", "--out", str(data), *SCN]) == 0
    models = root / "models"
    assert main([
        "train",
        "--data", str(data / "train.csv"), str(data / "test.csv"),
        "--out", str(models), "--threads", "1", *TRN,
    ]) == 0
    preds = root / "preds.csv"
    assert main([
        "predict",
        "--data", str(data / "train.csv"), str(data / "test.csv"),
        "--models", str(models), "--out", str(preds), "--threads", "1",
    ]) == 0
    return root


class TestGenerate:
    def test_writes_files_and_manifest(self, ws):
        data = ws / "data"
        for name in ("train.csv", "test.csv", "truth.csv", "manifest.json"):
            assert (data / name).exists()
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert manifest["rows"] == {"historical": 16, "future": 9}
        assert manifest["config"]["launch_schedule"] == "P2:8"
        assert manifest["config"]["seed"] == 7  # default echoed

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["generate", "--out", str(a), *SCN]) == 0
        assert main(["generate", "--out", str(b), *SCN]) == 0
        for name in ("train.csv", "test.csv", "truth.csv", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_flag_overrides(self, ws, tmp_path):
        out = tmp_path / "s"
        assert main(["generate", "--out", str(out), "--seed", "99", *SCN]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 99
        base = (ws / "data" / "train.csv").read_bytes()
        assert (out / "train.csv").read_bytes() != base


class TestTrain:
    def test_writes_models_and_manifest(self, ws):
        models = ws / "models"
        for name in ("model_stage1.json", "model_stage2.json",
                     "model_stage3.json", "manifest.json"):
            assert (models / name).exists()
        manifest = json.loads((models / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["stage1"]["num_rounds"] == 30
        # stages 2 and 3 inherit stage 1's config unless overridden
        assert manifest["config"]["stage2"] == manifest["config"]["stage1"]
        for curve in manifest["loss_curves"].values():
            assert len(curve) == 31
            assert all(b <= a for a, b in zip(curve, curve[1:]))
        assert "stage2_terms" in manifest["diagnostics"]

    def test_reruns_and_threads_are_byte_identical(self, ws, tmp_path):
        data = ws / "data"
        again = tmp_path / "again"
        assert main([
            "train",
            "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--out", str(again), "--threads", "4", *TRN,
        ]) == 0
        for name in ("model_stage1.json", "model_stage2.json",
                     "model_stage3.json", "manifest.json"):
            assert (again / name).read_bytes() == (ws / "models" / name).read_bytes()

    def test_config_file_with_flag_precedence(self, ws, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("num_rounds = 40\nseed = 3\nmax_depth = 3\n")
        out = tmp_path / "m"
        data = ws / "data"
        assert main([
            "train", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--config", str(cfg), "--set", "num_rounds=25", "--seed", "9",
            "--out", str(out), "--threads", "1",
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["stage1"]["num_rounds"] == 25  # --set beats file
        assert manifest["config"]["stage1"]["seed"] == 9  # --seed beats file
        assert manifest["seed"] == 9

    def test_stage_prefixed_override(self, ws, tmp_path):
        out = tmp_path / "m"
        data = ws / "data"
        assert main([
            "train", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--set", "num_rounds=20", "--set", "stage3.num_rounds=35",
            "--out", str(out), "--threads", "1",
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["stage1"]["num_rounds"] == 20
        assert manifest["config"]["stage3"]["num_rounds"] == 35
        assert len(manifest["loss_curves"]["stage3"]) == 36


class TestPredict:
    def test_output_shape(self, ws):
        lines = (ws / "preds.csv").read_text().splitlines()
        assert lines[0] == "product_id,week,stage1,stage2,stage3"
        assert len(lines) == 1 + 16 + 9
        pid, week, s1, s2, s3 = lines[1].split(",")
        float(s1), float(s2), float(s3)  # parse cleanly
        assert (ws / "preds.csv.manifest.json").exists()

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        data = ws / "data"
        out = tmp_path / "p.csv"
        assert main([
            "predict", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--models", str(ws / "models"), "--out", str(out), "--threads", "3",
        ]) == 0
        assert out.read_bytes() == (ws / "preds.csv").read_bytes()


class TestEvaluate:
    def test_end_to_end_report(self, ws, tmp_path):
        out = tmp_path / "eval.json"
        assert main([
            "evaluate", "--pred", str(ws / "preds.csv"),
            "--truth", str(ws / "data" / "truth.csv"), "--out", str(out),
        ]) == 0
        report = json.loads(out.read_text())
        assert report["rows"] == 9
        for stage in ("stage1", "stage2", "stage3"):
            for metric in ("mae", "rmse", "wmape"):
                assert report[stage][metric] >= 0.0
            assert 0.0 <= report[stage]["adherence"]["max"]
        assert report["manifest"]["command"] == "evaluate"

    def test_hand_computed_metrics(self, tmp_path):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text(
            "product_id,week,stage1,stage2,stage3\n"
            "A,5,1.0,1.0,2.0\n"
            "B,5,2.0,2.0,2.0\n"
            "A,6,3.0,3.0,4.0\n"
            "C,0,9.0,9.0,9.0\n"  # extra rows are fine; join is truth-driven
        )
        truth.write_text(
            "product_id,week,true_sales\nA,5,1.0\nB,5,2.0\nA,6,3.0\n"
        )
        out = tmp_path / "e.json"
        assert main(["evaluate", "--pred", str(pred), "--truth", str(truth),
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["stage1"]["mae"] == 0.0
        assert report["stage3"]["mae"] == pytest.approx(2 / 3)
        assert report["stage3"]["wmape"] == pytest.approx(2 / 6)
        # week 5: |4-3|/3, week 6: |4-3|/3
        assert report["stage3"]["adherence"]["mean"] == pytest.approx(1 / 3)

    def test_missing_prediction_rows(self, tmp_path, capsys):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("product_id,week,stage1,stage2,stage3\nA,5,1.0,1.0,1.0\n")
        truth.write_text("product_id,week,true_sales\nA,5,1.0\nB,5,2.0\n")
        code, captured = run(
            ["evaluate", "--pred", str(pred), "--truth", str(truth),
             "--out", str(tmp_path / "e.json")], capsys)
        assert code == 3
        assert captured.err.startswith("validation: prediction rows missing")

    def test_empty_truth(self, tmp_path):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("product_id,week,stage1,stage2,stage3\nA,5,1.0,1.0,1.0\n")
        truth.write_text("product_id,week,true_sales\n")
        assert main(["evaluate", "--pred", str(pred), "--truth", str(truth),
                     "--out", str(tmp_path / "e.json")]) == 3

    def test_missing_column(self, tmp_path):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("product_id,week,stage1\nA,5,1.0\n")
        truth.write_text("product_id,week,true_sales\nA,5,1.0\n")
        assert main(["evaluate", "--pred", str(pred), "--truth", str(truth),
                     "--out", str(tmp_path / "e.json")]) == 3


class TestDiagnose:
    def test_report_written(self, ws, tmp_path):
        data = ws / "data"
        out = tmp_path / "diag.json"
        assert main([
            "diagnose", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--models", str(ws / "models"), "--out", str(out),
            "--threads", "1", *TRN,
        ]) == 0
        report = json.loads(out.read_text())
        assert set(report) >= {
            "stage1_weekly_deviation", "bias", "stage2_terms", "trivial_probe",
        }
        assert report["manifest"]["command"] == "diagnose"
        assert report["bias"]["direction"] in ("over", "under", "mixed")


class TestExitCodes:
    def test_no_command_is_usage(self, capsys):
        code, captured = run([], capsys)
        assert code == 2
        assert captured.err.startswith("usage: ")
        assert captured.err.count("\n") == 1

    def test_unknown_command_is_usage(self):
        assert main(["frobnicate"]) == 2

    def test_unknown_flag_is_usage(self):
        assert main(["generate", "--out", "x", "--what"]) == 2

    def test_missing_required_flag_is_usage(self):
        assert main(["generate"]) == 2

    def test_bad_config_key_is_validation(self, tmp_path, capsys):
        code, captured = run(
            ["generate", "--out", str(tmp_path / "g"), "--set", "bogus=1"],
            capsys)
        assert code == 3
        assert captured.err.startswith("validation: ")
        assert captured.err.count("\n") == 1

    def test_unreadable_data_is_validation(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "m")]) == 3

    def test_missing_future_total_is_constraint_data(self, tmp_path, capsys):
        data = tmp_path / "bad.csv"
        data.write_text(
            "product_id,week,sales,category_total,f_0\n"
            "A,0,5.0,,1.0\n"
            "A,1,,,2.0\n"  # future row with no category total
        )
        code, captured = run(
            ["train", "--data", str(data), "--out", str(tmp_path / "m"), *TRN],
            capsys)
        assert code == 4
        assert captured.err.startswith("constraint-data: ")

    def test_missing_model_is_persistence(self, ws, tmp_path, capsys):
        data = ws / "data"
        code, captured = run([
            "predict", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--models", str(tmp_path), "--out", str(tmp_path / "p.csv"),
        ], capsys)
        assert code == 5
        assert captured.err.startswith("persistence: ")

    def test_corrupt_model_is_persistence(self, ws, tmp_path):
        models = tmp_path / "models"
        models.mkdir()
        for name in ("model_stage1.json", "model_stage2.json",
                     "model_stage3.json"):
            (models / name).write_text("{not json")
        data = ws / "data"
        assert main([
            "predict", "--data", str(data / "train.csv"), str(data / "test.csv"),
            "--models", str(models), "--out", str(tmp_path / "p.csv"),
        ]) == 5

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "generate" in capsys.readouterr().out
