"""Small versions of the three experiment tables, written as CSV.

Each table uses a handful of runs so the script finishes in a couple of
minutes; raise ``RUNS`` for smoother curves.
"""
import sys

from cfbeam.harness import SimConfig, load_database, sweep_experiment, write_csv

RUNS = 20
template = SimConfig(num_runs=RUNS)
db = load_database(template)

tables = [
    ("sigma_v", [2.0, 4.0, 6.0, 8.0], ("rbe", "ekf"), template.replace(budget=5)),
    ("budget", [2, 4, 6, 8, 10], ("rbe", "ekf"), template.replace(sigma_v=6.0)),
    ("velocity", [5.0, 15.0, 25.0], ("rbe", "exhaustive", "sweep_around"),
     template.replace(budget=4, sigma_v=6.0)),
]
for axis, values, schemes, config in tables:
    rows = sweep_experiment(config, axis, values, schemes, db)
    print(f"# {axis}")
    write_csv(rows, sys.stdout)
