"""Quantum de Finetti toolkit: minimal IC-POVMs, Bayesian state and process
tomography, and exchangeability checks for states, distributions and channels."""

from .bayes import (
    ParticleEnsemble,
    bayes_update,
    convergence_experiment,
    hs_prior,
    laplace_predictive,
    predictive_state,
    tilted_prior,
)
from .channels import (
    ChoiMatrix,
    KrausChannel,
    channel_from_choi,
    choi_from_channel,
    depolarizing_channel,
    mixture_superop,
    stinespring_dilate,
    tp_filter_demo,
)
from .exchangeability import (
    JointDistribution,
    is_extendible_distribution,
    is_symmetric_distribution,
    negativity_witness,
    quantum_symmetric_check,
    witness_growth,
)
from .povm import Povm, build_min_ic_povm, max_prob_bound, outcome_probabilities, reconstruct_operator
from .process_tomography import process_tomography_run, sample_channel_prior
from .states import bloch_to_rho, ghz_state, sample_density

__version__ = "0.1.0"
