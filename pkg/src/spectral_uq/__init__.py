"""Spectral uncertainty quantification for parametric symmetric eigenvalue
problems: tiered eigendecomposition, regularized perturbation propagation,
variational posteriors over latent matrix corrections, calibration metrics,
and a benchmark harness."""

from .matrices import (ParametricModel, assemble, assemble_batch, load_model,
                       matrix_from_json, matrix_to_json, model_from_json,
                       model_to_json, save_model, symmetric)
from .spectral import (ApproxSpectrum, SpectralClusters, SpectralDecomposition,
                       SpectralError, StabilityLog, cluster, cond_estimate,
                       eig_adaptive, eig_randomized, stability_guard)
from .perturbation import (PropagatedUncertainty, Regime, SensitivityTable,
                           budgeted_variance, effective_gap, propagate_adaptive,
                           propagate_gaussian, sensitivities, subspace_bound)
from .variational import (Dataset, PredictiveDistribution, PriorSpec,
                          VariationalPosterior, cv_fit, elbo, grad_elbo,
                          initial_posterior, kl_gaussian, predict, predict_batch,
                          sample_posterior)
from .training import (Adam, ConvergenceStatus, TrainingAborted, TrainingConfig,
                       TrainingTrace, cosine_lr, monitor_step, train)
from .calibration import (CalibrationReport, calibration_report, coverage,
                          crps_gaussian, ece, interval_score, nll_gaussian,
                          normality_battery, overconfidence_rate, sharpness,
                          standardized_residuals)
from .bench import (FeasibilityVerdict, RegimeSpec, ScalingSpec,
                    deployment_score, feasibility_check, gen_regime,
                    gen_scaling, noise_sigma, structured_perturbation)
from .experiment import ExperimentResult, run_configuration, run_experiment

__version__ = "0.1.0"
