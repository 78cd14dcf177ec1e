import dataclasses
import json

import numpy as np
import pytest

from rarecast.config import SweepConfig, parse_config
from rarecast.experiment import Experiment
from rarecast.sweep import SweepGrid, export_heatmap, import_heatmap, run_sweep
from rarecast.updating import UpdateSchedule


@pytest.fixture(scope="module")
def setup():
    from conftest import TINY

    cfg = parse_config(TINY)
    exp = Experiment(cfg)
    model, _ = exp.train()
    return cfg, exp, model


def test_cells_equal_standalone_predictions(setup):
    cfg, exp, model = setup
    grid = run_sweep(cfg, experiment=exp, model=model)
    assert grid.cells.shape == (3, 3)
    assert np.isnan(grid.value(5, 2))
    assert grid.masked.sum() == 1 and not grid.flags.any()
    for T0, T in [(1, 2), (2, 5), (5, 10), (1, 10)]:
        sch = UpdateSchedule.regular(T, T0, cfg.schedule.c, sites=cfg.schedule.sites)
        de = np.mean([s.delta_e for s in exp.evaluate(model, sch)])
        assert grid.value(T0, T) == de


def test_workers_do_not_change_results(setup):
    cfg, exp, model = setup
    a = run_sweep(cfg, experiment=exp, model=model, workers=1)
    b = run_sweep(cfg, experiment=exp, model=model, workers=3)
    assert a.equals(b)


def test_retraining_per_cell_matches_reuse(setup):
    cfg, exp, model = setup
    sw = SweepConfig(kind="regular", active=[1], period=[4, 8])
    a = run_sweep(cfg, sw, experiment=exp, model=model)
    b = run_sweep(cfg, sw, reuse_model=False, experiment=exp)
    assert np.array_equal(a.cells, b.cells)


def test_random_full_cell_matches_regular_continuous(setup):
    cfg, exp, model = setup
    cfg_all = dataclasses.replace(cfg, schedule=dataclasses.replace(cfg.schedule, sites=None))
    rnd = run_sweep(cfg_all, SweepConfig(kind="random", p_t=[1.0], p_s=[1.0], schedule_seeds=2),
                    experiment=exp, model=model)
    reg = run_sweep(cfg_all, SweepConfig(kind="regular", active=[3], period=[3]),
                    experiment=exp, model=model)
    assert rnd.cells[0, 0] == pytest.approx(reg.cells[0, 0], rel=1e-12)
    assert rnd.metadata["schedule_seeds"] == [0, 1]


def test_divergent_cells_are_clamped_and_flagged(setup):
    cfg, exp, model = setup
    sw = SweepConfig(kind="regular", active=[1], period=[1, 10], ceiling=1e-9)
    grid = run_sweep(cfg, sw, experiment=exp, model=model)
    assert grid.flags.all() and np.all(grid.cells == 1e-9)


def grid_2x2():
    return SweepGrid("T0", [1, 2], "T", [1, 10], np.array([[0.5, np.nan], [0.125, 1e-3]]),
                     np.array([[False, False], [True, False]]), {"config_sha256": "ab", "c": 1.0})


def test_export_layout(tmp_path):
    paths = export_heatmap(grid_2x2(), tmp_path)
    rows = paths["csv"].read_text().splitlines()
    assert rows == ["T\\T0,1,2", "1,0.5,", "10,0.125,0.001"]
    ppm = paths["ppm"].read_bytes()
    assert ppm.startswith(b"P6\n2 2\n255\n") and len(ppm) == len(b"P6\n2 2\n255\n") + 12
    assert ppm[len(b"P6\n2 2\n255\n") + 3 :][:3] == bytes((128, 128, 128))


def test_export_import_round_trip(tmp_path):
    g = grid_2x2()
    paths = export_heatmap(g, tmp_path, "g")
    back = import_heatmap(paths["csv"])
    assert back.equals(g)
    doc = json.loads(paths["json"].read_text())
    assert doc["cells"][0][1] is None and doc["flags"] == [[1, 0]]


def test_float_axes_round_trip(tmp_path):
    g = SweepGrid("p_t", [0.1, 0.5], "p_s", [0.2], np.array([[1.0, 2.0]]),
                  np.zeros((1, 2), bool))
    back = import_heatmap(export_heatmap(g, tmp_path, ppm=False)["csv"])
    assert back.equals(g)


def test_grid_shape_checked():
    with pytest.raises(ValueError):
        SweepGrid("a", [1, 2], "b", [1], np.zeros((2, 1)), np.zeros((2, 1), bool))
