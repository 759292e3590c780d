"""Follow one simulated user with each scheme and compare frame by frame."""
import numpy as np

from cfbeam.harness import SCHEMES, SimConfig, coverage_ratio, gain_gap, load_database, run_episode

config = SimConfig(num_frames=100, budget=4, sigma_v=6.0)
db = load_database(config)

records = {s: run_episode(config, db, s, np.random.default_rng(7)) for s in SCHEMES}

# every scheme sees the same trajectory and channel draws for a given seed
print("frame  true cell   " + "  ".join(f"{s:>12}" for s in SCHEMES))
for k in range(0, config.num_frames, 10):
    cell = tuple(int(c) for c in records["rbe"].true_cells[k])
    gaps = [gain_gap(records[s])[0][k] for s in SCHEMES]
    print(f"{k:5d}  {str(cell):10}  " + "  ".join(f"{g:12.2f}" for g in gaps))

for s in SCHEMES:
    _, mean = gain_gap(records[s])
    print(f"{s:>12}: mean gap {mean:6.2f} dB, coverage {coverage_ratio(records[s]):.2f}")

est = records["rbe"].estimates - records["rbe"].true_cells
print("RBE location error (cells): mean %.2f, max %.2f"
      % (np.hypot(*est.T).mean(), np.hypot(*est.T).max()))
