"""Identification of Markovian qubit (and qudit) dynamics from Bloch-vector signals."""
from .errors import *  # noqa: F401,F403
from .lindblad import (
    BasisSet, BlochModel, LindbladSpec, SteadyState, build_bloch, gell_mann_basis, is_physical,
    steady_state,
)
from .propagation import EigenStructure, Trajectory, eigenstructure, propagate, signal_form
from .measurement import MeasurementRecord, lds_times, sample_record
from .estimation import SignalModel, SignalTemplate, fit_signal, laplace_of
from .recon_full import ReconstructionResult, reconstruct, reconstruct_full, reconstruct_jordan
from .recon_partial import (
    CoefficientSystem, build_coefficient_system, laplace_point_identify, reconstruct_two_trace,
    solve_model,
)
from .bench import ErrorDistribution, ExperimentConfig, compare_settings, run_experiment

__version__ = "0.1.0"
