from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from drivemon.cli import main
from drivemon.fixtures import build_fixture


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    return build_fixture(tmp_path_factory.mktemp("fx"))


def strip_timing(report_path: Path) -> list[str]:
    return [
        line
        for line in report_path.read_text().splitlines()
        if "wall_clock_sec" not in line
    ]


class TestRun:
    def test_run_writes_all_outputs(self, fixture_dir, tmp_path):
        out = tmp_path / "out"
        rc = main(["run", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["schema_version"] == "1.0"
        assert "mean_top1" in report["aggregate"]
        assert all("top1" in fold for fold in report["folds"])
        assert (out / "results.csv").exists()
        assert (out / "confusion_fold00.csv").exists()
        for rel in report["trace_files"]:
            assert (out / rel).exists()

    def test_zero_shot_smoke(self, fixture_dir, tmp_path):
        out = tmp_path / "outz"
        rc = main(["run", "--config", str(fixture_dir / "zero_shot.ini"), "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["folds"]) == 1
        assert report["folds"][0]["metric_level"] == "frame"

    def test_reports_byte_identical_modulo_timing(self, fixture_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out2)]) == 0
        assert strip_timing(out1 / "report.json") == strip_timing(out2 / "report.json")
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()

    def test_seed_override_changes_report_seed(self, fixture_dir, tmp_path):
        out = tmp_path / "seeded"
        rc = main(
            ["run", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out), "--seed", "123"]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 123

    def test_results_csv_shape(self, fixture_dir, tmp_path):
        out = tmp_path / "res"
        main(["run", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out)])
        with open(out / "results.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["model", "target_fps", "camera_view", "n_folds", "mean_top1", "var_top1", "mean_macro_f1"]
        assert rows[1][0] == "single_frame"
        assert rows[1][1] == "2"


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[run]\nmodel = mystery\nseed = 1\n\n[data]\nmanifest = m\nbank = b\n")
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_is_2(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 2

    def test_data_error_is_3(self, fixture_dir, tmp_path):
        cfg = tmp_path / "missing_bank.ini"
        cfg.write_text(
            "[run]\nmodel = single_frame\nseed = 1\n\n"
            f"[data]\nroot = {fixture_dir}\nmanifest = manifest.csv\nbank = nope.bank\n\n"
            "[split]\nmode = kfold\nk = 2\n"
        )
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


class TestSweep:
    def test_grid_runs_all_cells(self, fixture_dir, tmp_path):
        out = tmp_path / "sweep"
        rc = main(["sweep", "--config", str(fixture_dir / "sweep.ini"), "--out", str(out)])
        assert rc == 0
        with open(out / "sweep_results.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 4  # header + 2 fps x 2 views
        assert all(row[5] == "ok" for row in rows[1:])
        assert all((out / f"cell_{i:03d}" / "report.json").exists() for i in range(4))

    def test_best_cell_matches_argmax_oracle(self, fixture_dir, tmp_path):
        out = tmp_path / "sweepbest"
        main(["sweep", "--config", str(fixture_dir / "sweep.ini"), "--out", str(out)])
        with open(out / "sweep_results.csv") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        top1_idx = header.index("mean_top1")
        best_idx = header.index("best")
        scores = [float(r[top1_idx]) for r in rows[1:]]
        expected_best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        flagged = [i for i, r in enumerate(rows[1:]) if r[best_idx] == "1"]
        assert flagged == [expected_best]

    def test_failed_cell_recorded_not_fatal(self, fixture_dir, tmp_path):
        cfg = tmp_path / "sweep_bad.ini"
        cfg.write_text(
            "[run]\nmodel = single_frame\nseed = 11\n\n"
            f"[data]\nroot = {fixture_dir}\nmanifest = manifest.csv\nbank = frames.bank\n\n"
            "[split]\nmode = kfold\nk = 2\n\n"
            "[train]\nmax_iters = 100\n\n"
            "[sweep]\nfps = 2, 500\n"  # 500 fps exceeds the 30 fps source
        )
        out = tmp_path / "sweepbad"
        rc = main(["sweep", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        with open(out / "sweep_results.csv") as fh:
            rows = list(csv.reader(fh))
        statuses = [r[5] for r in rows[1:]]
        assert statuses == ["ok", "error"]

    def test_five_rate_fps_sweep_rows(self, fixture_dir, tmp_path):
        cfg = tmp_path / "fps_sweep.ini"
        cfg.write_text(
            "[run]\nmodel = single_frame\nseed = 11\n\n"
            f"[data]\nroot = {fixture_dir}\nmanifest = manifest.csv\nbank = frames.bank\n\n"
            "[split]\nmode = kfold\nk = 2\n\n"
            "[train]\nmax_iters = 100\n\n"
            "[sweep]\nfps = 0.5, 1, 2, 5, 20\n"
        )
        out = tmp_path / "fps"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        with open(out / "sweep_results.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 6  # header + one row per sampling rate
        assert [r[3] for r in rows[1:]] == ["0.5", "1", "2", "5", "20"]

    def test_jobs_flag_gives_same_results(self, fixture_dir, tmp_path):
        out1, out2 = tmp_path / "j1", tmp_path / "j2"
        main(["sweep", "--config", str(fixture_dir / "sweep.ini"), "--out", str(out1)])
        main(["sweep", "--config", str(fixture_dir / "sweep.ini"), "--out", str(out2), "--jobs", "4"])
        assert (out1 / "sweep_results.csv").read_text() == (out2 / "sweep_results.csv").read_text()


class TestValidate:
    def test_clean_fixture(self, fixture_dir, capsys):
        rc = main(
            [
                "validate",
                "--manifest",
                str(fixture_dir / "manifest.csv"),
                "--bank",
                str(fixture_dir / "frames.bank"),
            ]
        )
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["issues"] == 0
        assert doc["banks"][0]["n_unresolved"] == 0
        assert doc["event_length"]["mean_seconds"] == pytest.approx(2.0)

    def test_unresolved_ids_listed(self, fixture_dir, tmp_path, capsys):
        manifest = fixture_dir / "manifest.csv"
        extra = tmp_path / "manifest.csv"
        lines = manifest.read_text().splitlines()
        lines.append("ghost_rec,fixture,d01,ghost_v,ghost_e,0,30,dashboard,drinking")
        extra.write_text("\n".join(lines) + "\n")
        rc = main(["validate", "--manifest", str(extra), "--bank", str(fixture_dir / "frames.bank")])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["banks"][0]["n_unresolved"] == 1
        assert "ghost_rec" in doc["banks"][0]["unresolved_record_ids"]
        assert doc["issues"] == 1

    def test_ten_second_events_mean_duration(self, tmp_path, capsys):
        from drivemon.embedstore import write_manifest, write_embedding_bank
        import numpy as np
        from conftest import make_row

        rows = [make_row(f"r{i}", idx=i) for i in range(300)]
        write_manifest(rows, tmp_path / "m.csv")
        write_embedding_bank(
            [f"r{i}" for i in range(300)], np.ones((300, 2), dtype=np.float32), 2, tmp_path / "b.bank"
        )
        rc = main(["validate", "--manifest", str(tmp_path / "m.csv"), "--bank", str(tmp_path / "b.bank")])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["event_length"]["mean_seconds"] == pytest.approx(10.0)

    def test_validate_always_emits_diagnostics(self, tmp_path, capsys):
        bad_manifest = tmp_path / "broken.csv"
        bad_manifest.write_text("this,is,not,a,manifest\n")
        rc = main(["validate", "--manifest", str(bad_manifest)])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert "manifest_error" in doc
        assert doc["issues"] >= 1


class TestExportTraces:
    def test_traces_written(self, fixture_dir, tmp_path):
        out = tmp_path / "traces_out"
        rc = main(["export-traces", "--config", str(fixture_dir / "single_frame.ini"), "--out", str(out)])
        assert rc == 0
        index = (out / "traces_index.csv").read_text().splitlines()
        assert index[0] == "fold_index,event_id,file"
        assert len(index) > 1
        first_file = index[1].split(",")[2]
        assert (out / first_file).exists()
