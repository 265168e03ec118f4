"""Sparse polynomial chaos surrogates and surrogate-based Bayesian inversion.

Surrogates are trained with a spike-and-slab Gibbs sampler that selects
tensor Jacobi bases automatically; the fitted surrogates then replace the
forward model inside a Metropolis-within-Gibbs sampler for the inputs.
"""
from .basis import (JacobiFamily, MultiIndexSet, TensorBasis, affine_to_canonical, build_basis,
                    jacobi_eval_all, jacobi_from_beta, total_degree_multiindices)
from .distributions import InverseGamma, ShiftedBeta, beta_moment_match, rng_stream
from .gibbs import GibbsChain, GibbsHyperparams, GibbsState, TrainingDataset, run_gibbs
from .inversion import (InversionChain, InversionProblem, log_unnormalized_posterior, posterior_predictive,
                        posterior_summary, run_inversion)
from .surrogate import (SurrogateModel, bma_estimate, evaluate, inclusion_probabilities, mpm_estimate,
                        mpm_select, parameter_importance)
from .testbed import SyntheticForward, evaluate_synthetic, projection_oracle, qmc_design

__version__ = "0.1.0"
