"""Bayesian identification of ZIP and induction-motor load models."""

from .model_core import (ImCoefficients, ImPhysicalParams, ImRegressionData, ModelDomainError,
                         ZipParams, ZipSeries, build_im_regression, build_zip_series,
                         im_coefficients_from_physical, im_derivatives, zip_power)
from .feeder import (FeederTopology, MultiplierLaw, ScenarioConfig, load_feeder_table,
                     replay_compare, run_zip_scenario, solve_power_flow)
from .samplers import (Chain, GammaPrior, NormalPrior, conjugate_normal_update, gamma_precision_update,
                       gibbs_im, gibbs_zip2, gibbs_zip3, metropolis_hastings, mh_single_param)
from .inference import (ExperimentSpec, FitReport, convergence_check, effective_sample_size,
                        run_experiment, summarize)

__version__ = "0.1.0"

__all__ = [
    "ImCoefficients", "ImPhysicalParams", "ImRegressionData", "ModelDomainError", "ZipParams", "ZipSeries",
    "build_im_regression", "build_zip_series", "im_coefficients_from_physical", "im_derivatives", "zip_power",
    "FeederTopology", "MultiplierLaw", "ScenarioConfig", "load_feeder_table", "replay_compare",
    "run_zip_scenario", "solve_power_flow",
    "Chain", "GammaPrior", "NormalPrior", "conjugate_normal_update", "gamma_precision_update",
    "gibbs_im", "gibbs_zip2", "gibbs_zip3", "metropolis_hastings", "mh_single_param",
    "ExperimentSpec", "FitReport", "convergence_check", "effective_sample_size", "run_experiment", "summarize",
]
