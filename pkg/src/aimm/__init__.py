"""Adaptive Incremental Mixture MCMC: samplers, benchmark targets and diagnostics."""

__version__ = "0.1.0"

from ._core import BACKEND
from .errors import *  # noqa: F401,F403
from .gaussian import GaussianComponent, make_gaussian, empirical_covariance, mahalanobis
from .mixture import DefensiveKernel, GaussianMixture, IncrementalProposal
from .sampler import AimmConfig, ChainState, aimm_step, run_aimm
from .baselines import AgmConfig, AmhConfig, run_agm, run_amh, run_im, run_rwmh
from .diagnostics import (DiagnosticsReport, diagnose, ess, jumping_distance, kde_log_density,
                          kl_between_proposals, kl_pi_vs_proposal, kl_target_vs_chain, mode_fraction,
                          tail_statistics)
from .targets import TargetDensity, build_target
from .trace import Trace
