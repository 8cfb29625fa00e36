import json
import shutil

import numpy as np
import pytest

from uavtune import persist
from uavtune.cli import build_parser, main, resolve_config
from uavtune.config import ExperimentConfig, ScheduleSelection, serialize_config
from uavtune.experiment import GenerationRecord


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    cfg = ExperimentConfig.trivial(schedules=ScheduleSelection(duration=10.0), generation_cap=60,
                                   workers=1)
    path = tmp_path_factory.mktemp("cfg") / "trivial.yaml"
    path.write_text(serialize_config(cfg), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def ose_dir(cfg_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("ose")
    assert main(["run-ose", "--config", str(cfg_file), "--seed", "1", "--out", str(out),
                 "--quiet"]) == 0
    return out


class TestReplay:
    def test_shipped_trial_is_bit_identical(self, data_dir, capsys):
        assert main(["replay", str(data_dir / "fixture_trial.json")]) == 0
        assert "identical" in capsys.readouterr().out

    def test_replay_from_csv_path(self, data_dir):
        out, rec = persist.replay(data_dir / "fixture_trial.csv")
        assert float(out.fitness).hex() == rec["fitness_hex"]
        assert out.reason == rec["reason"] == "completed"

    def test_tampered_record_mismatches(self, data_dir, tmp_path, capsys):
        rec = json.loads((data_dir / "fixture_trial.json").read_text())
        rec["seed"] = rec["seed"] + 1
        (tmp_path / "t.json").write_text(json.dumps(rec))
        assert main(["replay", str(tmp_path / "t.json")]) == 1
        assert "MISMATCH" in capsys.readouterr().out

    def test_log_columns(self, data_dir):
        header, rows = persist.read_csv(data_dir / "fixture_trial.csv")
        assert header[:10] == list(persist.TRIAL_COLUMNS)
        assert len(rows) == 1250
        assert float(rows[-1][9]) == pytest.approx(
            json.loads((data_dir / "fixture_trial.json").read_text())["fitness"])


class TestRunOutputs:
    def test_layout(self, ose_dir):
        names = {p.name for p in ose_dir.iterdir()}
        assert {"generations.csv", "best.json", "config.snapshot", "best_trial.csv",
                "best_trial.json", "population_g000.json"} <= names

    def test_generations_header_and_rows(self, ose_dir):
        header, rows = persist.read_csv(ose_dir / "generations.csv")
        assert header == list(GenerationRecord.FIELDS)
        pops = sorted(ose_dir.glob("population_g*.json"))
        assert len(rows) == len(pops)

    def test_best_loads(self, ose_dir):
        g = persist.load_best(ose_dir)
        assert g.shape == (18,)
        assert np.array_equal(g, persist.load_best(ose_dir / "best.json"))

    def test_best_trial_replays(self, ose_dir):
        assert main(["replay", str(ose_dir / "best_trial.json"), "--quiet"]) == 0

    def test_rerun_is_byte_identical(self, ose_dir, cfg_file, tmp_path):
        assert main(["run-ose", "--config", str(cfg_file), "--seed", "1", "--out", str(tmp_path),
                     "--quiet"]) == 0
        for name in ("generations.csv", "best.json", "best_trial.csv"):
            assert (tmp_path / name).read_bytes() == (ose_dir / name).read_bytes()

    def test_snapshot_round_trips(self, ose_dir, cfg_file):
        from uavtune.config import load_config
        snap = load_config(ose_dir / "config.snapshot", {})
        assert snap.seed == 1 and snap.generation_cap == 60


class TestCommands:
    def test_generalise(self, ose_dir, cfg_file, tmp_path, capsys):
        out = tmp_path / "gen"
        assert main(["generalise", str(ose_dir), "--config", str(cfg_file), "--repeats", "2",
                     "--out", str(out), "--quiet"]) == 0
        header, rows = persist.read_csv(out / "generalisation.csv")
        assert header == ["controller", "trial", "fitness", "reason"] and len(rows) == 2
        assert "mean" in persist.read_json(out / "stats.json")

    def test_sweep_and_plot_data(self, ose_dir, cfg_file, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--base", str(ose_dir / "best.json"), "--config", str(cfg_file),
                     "--repeats", "1", "--pairs", "PD", "--out", str(out), "--quiet"]) == 0
        header, rows = persist.read_csv(out / "sweep_PD.csv")
        assert header[:2] == ["P_gain", "D_gain"] and len(rows) == 100
        assert all(float(r[0]) < 0 and float(r[1]) < 0 for r in rows)
        assert main(["plot-data", str(out)]) == 0
        assert (out / "plot-data" / "heatmap_PD.csv").exists()

    def test_run_tse_with_repeats(self, cfg_file, tmp_path):
        assert main(["run-tse", "--config", str(cfg_file), "--repeats", "2", "--out",
                     str(tmp_path), "--quiet"]) == 0
        for i in range(2):
            rows = persist.read_generations(tmp_path / f"repeat_{i:02d}")
            assert {r["stage"] for r in rows} == {"1", "2"}

    def test_env_override(self, cfg_file, tmp_path, monkeypatch):
        monkeypatch.setenv("UAVTUNE_GENERATION_CAP", "2")
        assert main(["run-ose", "--config", str(cfg_file), "--out", str(tmp_path), "--quiet"]) == 0
        assert len(persist.read_generations(tmp_path)) == 3

    def test_flags_beat_environment(self, cfg_file, monkeypatch):
        monkeypatch.setenv("UAVTUNE_SEED", "5")
        monkeypatch.setenv("UAVTUNE_WORKERS", "3")
        args = build_parser().parse_args(["run-ose", "--config", str(cfg_file), "--seed", "8"])
        cfg = resolve_config(args)
        assert cfg.seed == 8 and cfg.workers == 3


class TestErrors:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("tether:\n  ose:\n    radius: -1\n")
        assert main(["run-ose", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "radius" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run-ose", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_unknown_pair(self, ose_dir, tmp_path):
        assert main(["sweep", "--base", str(ose_dir / "best.json"), "--pairs", "XY",
                     "--out", str(tmp_path)]) == 2

    def test_bad_env_value(self, monkeypatch, tmp_path):
        monkeypatch.setenv("UAVTUNE_POPULATION_SIZE", "lots")
        assert main(["run-ose", "--out", str(tmp_path)]) == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])

    def test_replay_missing_file(self, tmp_path):
        assert main(["replay", str(tmp_path / "gone.json")]) == 2

    def test_plot_data_nothing(self, tmp_path):
        assert main(["plot-data", str(tmp_path)]) == 2


def test_load_best_accepts_run_summary(tmp_path, good_gains):
    (tmp_path / "best.json").write_text(json.dumps({"best": {"gains": list(good_gains)}}))
    assert np.array_equal(persist.load_best(tmp_path), good_gains)


def test_csv_floats_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, 123456.789]
    persist.write_csv(tmp_path / "x.csv", ["v"], [[v] for v in vals])
    _, rows = persist.read_csv(tmp_path / "x.csv")
    assert [float(r[0]) for r in rows] == vals


def test_fixture_copy_replays(data_dir, tmp_path):
    for ext in ("json", "csv"):
        shutil.copy(data_dir / f"fixture_trial.{ext}", tmp_path / f"x.{ext}")
    out, rec = persist.replay(tmp_path / "x.json")
    assert out.fitness == rec["fitness"]
