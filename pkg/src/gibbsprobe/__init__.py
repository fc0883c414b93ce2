"""Probe black-box binary samplers as noisy Gibbs distributions.

The package learns multi-body Gibbs models from samples with the
Interaction Screening estimator, estimates finite-sample reconstruction
error, fits single-spin response models, fits quadratic input-output
response functions, and checks the noise mechanism against closed forms.
"""
from .error_est import ErrorReport, estimate_error, significance_mask
from .iso import LearnConfig, NeighborhoodParams, iso_value_grad, learn_model, learn_neighborhood
from .model import ExactDistribution, GibbsModel, energy, exact_distribution, read_model, write_model
from .noise_oracle import (ToySpec2, ToySpec3, effective_coupling, effective_field, four_spin_effective,
                           small_param_coupling, small_param_field)
from .response import ResponseFunction, Roster, fit_quadratic, predict, simulate_response_pipeline
from .sampler import (NoiseSpec, SampleSet, apply_gauge, apply_gauge_samples, blackbox_collect,
                      effective_noisy_model, noisy_mixture_distribution, read_samples, sample_exact,
                      sample_noisy, srt_effective_distribution, write_samples)
from .single_qubit import (FieldScan, SingleQubitFit, estimate_hout, fit_scan, h_out_classical,
                           h_out_qnoise, h_out_quantum)

__version__ = "0.1.0"
