import numpy as np
import pytest

from uavtune import experiment as ex
from uavtune import persist
from uavtune.config import ExperimentConfig, ScheduleSelection
from uavtune.plotdata import TRAJECTORY_COLUMNS, convert, sweep_matrix


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory, tse_best):
    cfg = ExperimentConfig.trivial(schedules=ScheduleSelection(duration=3.0), workers=1,
                                   generalisation_repeats=2)
    res = ex.gain_sweep(np.array(tse_best["gains"]), 0, cfg, repeats=1)
    out = tmp_path_factory.mktemp("sweep")
    persist.write_sweep(out, res)
    persist.write_stats(out, {"convergence": {"ose": [40.0, 201.0], "tse": [30.0, 25.0]}})
    return out, res


def test_three_heatmaps(sweep_dir, tmp_path):
    src, res = sweep_dir
    written = convert(src, tmp_path)
    maps = sorted(p.name for p in written if p.name.startswith("heatmap_"))
    assert maps == ["heatmap_ID.csv", "heatmap_PD.csv", "heatmap_PI.csv"]
    for pair in ex.SWEEP_PAIRS:
        header, rows = persist.read_csv(tmp_path / f"heatmap_{pair}.csv")
        assert len(header) == 11 and len(rows) == 10
        assert all(len(r) == 11 for r in rows)
        body = np.array([[float(v) for v in r[1:]] for r in rows])
        # rows and columns run from the smallest to the largest magnitude
        np.testing.assert_array_equal(body, res.grids[pair].mean)
        assert [float(r[0]) for r in rows] == list(res.grids[pair].rows)


def test_sweep_matrix_orientation(sweep_dir):
    src, res = sweep_dir
    rv, cv, mat = sweep_matrix(src / "sweep_PI.csv")
    np.testing.assert_allclose(rv, ex.SWEEP_AXES["P"])
    np.testing.assert_allclose(cv, ex.SWEEP_AXES["I"])
    np.testing.assert_array_equal(mat, res.grids["PI"].mean)


def test_convergence_series(sweep_dir, tmp_path):
    convert(sweep_dir[0], tmp_path)
    header, rows = persist.read_csv(tmp_path / "convergence.csv")
    assert header == ["method", "repeat", "generation"]
    assert rows[1] == ["ose", "1", "201.0"] and len(rows) == 4


def test_trajectory_from_trial(data_dir, tmp_path):
    written = convert(data_dir / "fixture_trial.json", tmp_path)
    assert len(written) == 1
    header, rows = persist.read_csv(written[0])
    assert tuple(header) == TRAJECTORY_COLUMNS and len(rows) == 1250


def test_progress_series(tmp_path, small_run):
    src = tmp_path / "run"
    persist.write_run(src, small_run, populations=False)
    written = convert(src, tmp_path / "plots")
    names = {p.name for p in written}
    assert {"fitness_run.csv", "rates_run.csv"} <= names
    _, rows = persist.read_csv(tmp_path / "plots" / "rates_run.csv")
    assert len(rows) == len(small_run.records)


@pytest.fixture(scope="module")
def small_run():
    cfg = ExperimentConfig.trivial(schedules=ScheduleSelection(duration=3.0), generation_cap=3,
                                   workers=1)
    return ex.run_ose(cfg, 2)
