"""A walk through the synthetic street fingerprint.

Builds the default 100 m x 4 m database, then prints the strongest beam
along the centre line of the street and the spatial gradient of that beam.
Run with ``python3 demos/fingerprint_tour.py``.
"""
import numpy as np

from cfbeam import default_street_database, gain_at, gradient_at
from cfbeam.codebook import beam_steering_angles

db = default_street_database()
print("grid", db.grid.shape, "beams", db.num_beams)
print("gain range %.1f .. %.1f dB" % (db.gain_field.min(), db.gain_field.max()))

angles = np.rad2deg(beam_steering_angles(db.codebook))

# strongest beam every 5 m along the middle of the street
for x1 in range(0, db.grid.length_cells, 50):
    cell = (x1, 20)
    best = int(np.argmax(db.gains_at(cell)))
    print("x = %5.1f m  best beam %2d (%+6.1f deg)  %.1f dB  gradient %s" % (
        x1 * db.grid.resolution, best, angles[best], gain_at(db, best, cell),
        np.round(gradient_at(db, best, cell), 3)))
