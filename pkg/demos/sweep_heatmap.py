"""Error map over update schedules for Lorenz, exported as CSV/JSON/PPM.

A reduced grid keeps the run to a couple of minutes; the bundled sweep
configs cover the full grids through ``rarecast sweep``.

    python demos/sweep_heatmap.py
"""
import dataclasses
from importlib import resources
from pathlib import Path

from rarecast.config import SweepConfig, load_config
from rarecast.sweep import export_heatmap, run_sweep


def main():
    cfg = load_config(resources.files("rarecast").joinpath("configs", "lorenz_rare_updates.yaml"))
    cfg = dataclasses.replace(cfg, prediction=dataclasses.replace(cfg.prediction, n_steps=3000))
    grid = run_sweep(cfg, SweepConfig(kind="regular", active=[1, 2, 4, 8], period=[10, 20, 40, 80]))
    paths = export_heatmap(grid, Path("out_sweep"), "lorenz")
    print("delta_e, rows T, columns T0 =", grid.x_values)
    for T, row in zip(grid.y_values, grid.cells):
        print(f"T={T:3d} " + " ".join(f"{v:8.4f}" for v in row))
    print("wrote", *paths.values())


if __name__ == "__main__":
    main()
