# Learning directional primitives at a three-way junction.
#
# Run: python demos/01_learn_a_junction.py

import numpy as np

from dirprim import GridSpec, derive_all, fit_map, locate, synth_scenario
from dirprim.learn import FitConfig

rng = np.random.default_rng(0)

#############################
# Synthetic ground truth    #
#############################

# Vehicles drive north and split at y = 50 m: half go straight, a quarter
# turn left, a quarter turn right.
tracks = synth_scenario("three_way", {"n_tracks": 500}, rng)
obs = derive_all(tracks)
print(f"{len(tracks)} tracks -> {len(obs)} heading/speed observations")

#############################
# Fit a 5 m grid            #
#############################

spec = GridSpec.covering(obs.x, obs.y, cell_size=5.0)
m, report = fit_map(obs, spec, FitConfig(), return_report=True)
print(f"grid {spec.nx}x{spec.ny}: {report.cells_fitted} fitted cells, "
      f"{report.cells_uninformative} uninformative, {report.wall_time_s:.2f} s")

# Cells on the approach hold one mode pointing north ...
approach = m.cell(*locate(spec, 2.5, 20.0))
print("approach cell modes (deg):", np.round(np.degrees(approach.mixture.mus), 1))

# ... while the cell right past the junction line holds three.
junction = m.cell(*locate(spec, 2.5, 52.5))
for mu, k, w, g in zip(junction.mixture.mus, junction.mixture.kappas, junction.mixture.weights, junction.speed_modes):
    speed = "n/a" if g is None else f"{g.mean:.2f} m/s"
    print(f"  mode {np.degrees(mu):6.1f} deg  kappa {k:7.1f}  weight {w:.2f}  speed {speed}")

#############################
# Polar table for plotting  #
#############################

# The same numbers `dirprim export-polar` writes: density per degree.
centers = np.radians(np.arange(0.5, 360, 1.0))
dens = junction.pdf(centers)
print(f"junction density peaks at {np.degrees(centers[np.argmax(dens)]):.1f} deg; "
      f"integral {dens.sum() * np.radians(1.0):.4f}")
