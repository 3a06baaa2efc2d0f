# Fusing a map prior with a live belief, and hallucinating next positions.
#
# Run: python demos/02_fusing_prior_and_belief.py

import numpy as np

from dirprim import VonMisesMixture, fuse, rmse_angles
from dirprim.circular import product_of_von_mises

rng = np.random.default_rng(1)
deg = np.radians

#############################
# A trimodal prior          #
#############################

# A cell where traffic mostly goes straight (0 deg) but also turns to
# -90 and +90 deg.  Our tracker currently believes the car heads to -90 deg,
# though not confidently (kappa 2.5).
prior = VonMisesMixture(deg([-90.0, 0.0, 90.0]), [20.0, 20.0, 20.0], [0.25, 0.5, 0.25])
belief = VonMisesMixture.single(deg(-90.0), 2.5)

#############################
# Rejection-sampled fusion  #
#############################

res = fuse(prior, belief, 20000, rng)
print(f"acceptance rate {res.acceptance_rate:.3f} from {res.n_proposals} proposals")

truth = deg(-90.0)
for name, samples in [
    ("prior", prior.sample(rng, 20000)[0]),
    ("belief", belief.sample(rng, 20000)[0]),
    ("fused", res.samples),
]:
    print(f"  rmse {name:6s} {rmse_angles(samples, truth):6.1f} deg")

# The fused law keeps the prior's -90 lobe sharp and drops the others.
near = np.mean(np.abs(np.angle(np.exp(1j * (res.samples - truth)))) < deg(30))
print(f"fraction of fused samples within 30 deg of truth: {near:.2f}")

#############################
# Sanity check: unimodal    #
#############################

# Two von Mises factors multiply to a von Mises with the resultant of the
# concentration-weighted unit vectors.
mu, kappa = product_of_von_mises(0.0, 2.0, deg(90.0), 2.0)
res = fuse(VonMisesMixture.single(0.0, 2.0), VonMisesMixture.single(deg(90.0), 2.0), 20000, rng)
m = np.degrees(np.angle(np.exp(1j * res.samples).mean()))
print(f"analytic mean {np.degrees(mu):.1f} deg (kappa {kappa:.3f}); sampled mean {m:.1f} deg")
