"""Data-driven signal-region discovery via smoothed density-ratio filtering.

The pipeline: learn a representation of collision events, estimate the
4b-to-3b density ratio and its kernel-smoothed counterpart with binary
classifiers, score events by the ratio of the two, and calibrate a
signal region as the top-q quantile of held-out 4b scores. Exact
Gaussian-mixture oracles back every estimated quantity.
"""

from .events import (Dataset, Event, MixtureSpec, PhysicsParams, SplitSpec,
                     Tag, Truth, generate_physics_like, generate_toy1d,
                     generate_toy1d_null, read_events, sample_mixture, split,
                     toy1d_spec_3b, toy1d_spec_4b, write_events)
from .experiment import (ConfigError, RunConfig, derive_seed, load_config,
                         ratio_error_metrics, run_experiment, run_repeat)
from .nnet import MLPParams, MLPSpec, TrainConfig, forward, init_params, train
from .oracle import (OracleSetting, argmax_on_grid, convolve_spec,
                     exact_curve_1d, exact_gamma, exact_gamma_tilde,
                     exact_score, mixture_cdf_1d, mixture_logpdf, mixture_pdf,
                     read_setting, toy1d_setting, write_setting)
from .ratio import (NoiseSpec, RatioModel, compute_ranges, eval_ratio,
                    fit_ratio, fit_smoothed_ratio, read_ratio_model, smear,
                    write_ratio_model)
from .region import (AggregatedCurve, EnrichmentCurve, SignalRegion,
                     aggregate_curves, calibrate_threshold, curve_auc,
                     default_q_grid, enrichment_curve, in_sr, peak_score,
                     read_curve, write_curve)
from .representation import (ReprModel, canonicalize, canonicalize_features,
                             embed, fit_passthrough, fit_representation,
                             read_repr_model, write_repr_model)

__version__ = "0.1.0"
