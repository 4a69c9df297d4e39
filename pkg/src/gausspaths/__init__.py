"""Sampling conditioned linear SDE paths via path-space Langevin equations.

The library covers the full loop: analytic covariance kernels of the
conditioned path measures, their discrete operators (whose negative
inverse reproduces the kernel as a Green's function), exact and
Langevin-type samplers of the discretised measures, the Kalman-Bucy
filter/smoother, and finite-dimensional Schur-complement oracles that
cross-check all of the above.
"""

from .dynamics import (ChainState, CovFactor, KLBasis, SamplerConfig,
                       cov_factor, default_burn_in, drift_from_observation,
                       init_chain, kl_basis, kl_sampler,
                       make_gram_log_density, make_operator_log_density,
                       make_precond_proposal, make_theta_proposal, mh_adjust,
                       precond_step, theta_step)
from .kalman import (RiccatiSolution, filter_forward, riccati_forward,
                     smooth_backward, smoother_boundary_residuals)
from .kernels import (EmpiricalStats, GaussKernel, empirical_stats,
                      kernel_bridge, kernel_fixed_left, kernel_gaussian_left)
from .model import (Bridge, Conditioning, FixedLeft, GaussianLeft, Grid,
                    LinearSdeModel, NumericalError, Observation,
                    ObservationModel, Path, gram_integral, make_rng,
                    matrix_exp, simulate_ensemble, simulate_joint_sde,
                    simulate_sde)
from .operators import (BoundaryRow, DiscreteOperator, assemble_kalman_operator,
                        assemble_operator, greens_residual, solve_mean_bvp)
from .oracle import JointGaussian, kalman_posterior_oracle, schur_condition

__version__ = "0.1.0"

__all__ = [
    "Bridge", "BoundaryRow", "ChainState", "Conditioning", "CovFactor",
    "DiscreteOperator", "EmpiricalStats", "FixedLeft", "GaussKernel",
    "GaussianLeft", "Grid", "JointGaussian", "KLBasis", "LinearSdeModel",
    "NumericalError", "Observation", "ObservationModel", "Path",
    "RiccatiSolution", "SamplerConfig", "assemble_kalman_operator",
    "assemble_operator", "cov_factor", "default_burn_in",
    "drift_from_observation", "empirical_stats", "filter_forward",
    "gram_integral", "greens_residual", "init_chain", "kalman_posterior_oracle",
    "kernel_bridge", "kernel_fixed_left", "kernel_gaussian_left", "kl_basis",
    "kl_sampler", "make_gram_log_density", "make_operator_log_density",
    "make_precond_proposal", "make_rng", "make_theta_proposal", "matrix_exp",
    "mh_adjust", "precond_step", "riccati_forward", "schur_condition",
    "simulate_ensemble", "simulate_joint_sde", "simulate_sde",
    "smooth_backward", "smoother_boundary_residuals", "solve_mean_bvp",
    "theta_step",
]
