# Multimodal trajectory rollouts on a roundabout, then the held-out
# evaluation against a uniform baseline.
#
# Run: python demos/03_rollouts_and_evaluation.py

import numpy as np

from dirprim import GridSpec, PrimitiveMap, derive_all, fit_map, generate_trajectories, synth_scenario
from dirprim.evaluate import evaluate, split_test

rng = np.random.default_rng(2)

#############################
# Roundabout map            #
#############################

obs = derive_all(synth_scenario("roundabout", {"n_tracks": 300, "radius_noise": 1.0}, rng))
train, test = split_test(obs, 0.10, rng)
spec = GridSpec.covering(obs.x, obs.y, cell_size=5.0, margin=1)
m = fit_map(train, spec)
print(f"{len(train)} training and {len(test)} test observations; {len(m.fitted_cells())} fitted cells")

#############################
# Rollouts                  #
#############################

trajs = generate_trajectories(m, (20.0, 0.5), K=20, T=60, rng=rng, dt=0.2)
reasons = {}
for t in trajs:
    reasons[t.terminated_reason] = reasons.get(t.terminated_reason, 0) + 1
ends = np.array([t.points[-1] for t in trajs])
print("termination:", reasons)
print(f"end radius {np.hypot(ends[:, 0], ends[:, 1]).mean():.1f} m (ring radius 20 m), "
      f"end angle spread {np.degrees(np.ptp(np.arctan2(ends[:, 1], ends[:, 0]))):.0f} deg")

#############################
# Evaluation                #
#############################

fitted = evaluate(m, test, improvement=True)
uniform = evaluate(PrimitiveMap.uninformative(spec), test)
print(f"{'model':10s} {'direction':>18s} {'speed':>18s}")
for name, r in [("uniform", uniform), ("primitive", fitted)]:
    print(f"{name:10s} {r.direction.mean:9.3f} +- {r.direction.std:5.3f} "
          f"{r.speed.mean:9.3f} +- {r.speed.std:5.3f}")
imp = fitted.improvement
print(f"likelihood improvement: mean {imp.mean_improvement:.1f}% over {len(imp.cells)} cells, "
      f"{100 * imp.fraction_positive:.0f}% positive")
