"""Sequential change detection for sub-diffraction scenes.

Library layout:

* scene    - object models and spatial moments
* optics   - PSFs, autocorrelations, mode-sorting probabilities
* channels - Poisson measurement channels and information quantities
* detect   - the CUSUM detector
* sim      - Monte Carlo trials, ensembles, theory predictors
* config / experiments / report / cli - experiment plumbing
"""

from .channels import (ChannelModel, PixelGrid, Scenario, direct_channels,
                       poisson_re_per_step, qre_leading_order, qre_numerical,
                       trispade_channels)
from .config import ExperimentConfig, parse_config, serialize_config
from .detect import CusumState, cusum_update, llr_step, threshold_for_pfa
from .errors import ConfigError, NumericsError
from .optics import Psf, autocorrelation, gamma_curvatures, mode_probabilities, psf_amplitude
from .scene import Moments, ObjectModel, build_object, moments
from .sim import (EnsembleStats, TrialRecord, fit_log_slope, latency_prediction,
                  quantum_limit_latency, run_ensemble, run_trial, sample_counts)

__version__ = "0.1.0"

__all__ = [
    "ChannelModel", "ConfigError", "CusumState", "EnsembleStats",
    "ExperimentConfig", "Moments", "NumericsError", "ObjectModel", "PixelGrid",
    "Psf", "Scenario", "TrialRecord", "autocorrelation", "build_object",
    "cusum_update", "direct_channels", "fit_log_slope", "gamma_curvatures",
    "latency_prediction", "llr_step", "mode_probabilities", "moments",
    "parse_config", "poisson_re_per_step", "psf_amplitude", "qre_leading_order",
    "qre_numerical", "quantum_limit_latency", "run_ensemble", "run_trial",
    "sample_counts", "serialize_config", "threshold_for_pfa", "trispade_channels",
    "__version__",
]
