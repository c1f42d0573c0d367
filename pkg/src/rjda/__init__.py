"""Population-size inference for capture-recapture model M_h.

Reversible-jump and data-augmentation Gibbs samplers, a fixed-dimension
Metropolis sampler on the integrated likelihood, and exact posterior oracles.
"""
from .model import (
    DaState,
    DomainError,
    EncounterData,
    Hyperprior,
    PriorOnN,
    RandomEffects,
    RjState,
    log_cdl,
    log_combinatorial,
    log_prior_n,
    log_random_effect_density,
)

__version__ = "0.1.0"
