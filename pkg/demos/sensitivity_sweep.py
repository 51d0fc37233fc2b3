"""
Bias x noise sensitivity on a small grid
========================================

Each cell synthesizes rangings at one (bias, random SD) level on shared
trajectories and compares both estimators. One 60 s trial per cell keeps
this demo to seconds; the command-line sweep runs the full grid.
"""

import tempfile
from pathlib import Path

from swarmloc import SweepGrid, run_sweep
from swarmloc.evaluation import render_report, write_plot_csv

grid = SweepGrid(
    bias_levels=(0.0, 0.02),
    random_sd_levels=(0.0, 0.01, 0.05, 0.12),
    trials_per_cell=1,
    frames_per_trial=240,  # 60 s at 4 Hz
)
result = run_sweep(grid, progress=lambda c: print(f"  cell ({c.bias * 100:g}, {c.random_sd * 100:g}) cm done"))
print(render_report(result))

# plot-ready rows, one per cell and method
with tempfile.TemporaryDirectory() as tmp:
    print(write_plot_csv(result, Path(tmp) / "sweep_plot.csv").read_text())
