"""Directional primitives: location-dependent multimodal direction and speed
priors learned from trajectories, with tools to hallucinate next positions,
fuse priors with live beliefs and generate multimodal trajectories."""

__version__ = "0.1.0"

from .circular import (  # noqa: E402
    KAPPA_MAX,
    VonMisesComponent,
    VonMisesMixture,
    bessel_i,
    circular_stats,
    circular_variance,
    kappa_from_rbar,
    mixture_pdf,
    mixture_sample,
    vm_pdf,
    vm_sample,
    wrap_angle,
)
from .evaluate import avg_density_direction, avg_density_speed, likelihood_improvement, rmse_angles, split_test  # noqa: E402
from .grid import DirectionalPrimitive, GridSpec, PrimitiveMap, load_map, locate, save_map  # noqa: E402
from .infer import fuse, generate_trajectories, hallucinate  # noqa: E402
from .ingest import Observations, RawTrajectory, derive_all, derive_motion, parse_trajectories, synth_scenario  # noqa: E402
from .learn import FitConfig, discover_modes, em_fit, fit_map  # noqa: E402
from .speed import GammaParams, gamma_mle, gamma_pdf, gamma_sample  # noqa: E402
