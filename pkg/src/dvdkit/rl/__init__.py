"""Cascade RL numeric kit on linear-softmax toy policies."""
from .gspo import (
    DEFAULT_CLIP_EPS,
    DEFAULT_EPS_STD,
    RolloutGroup,
    clipped_term,
    filter_rollouts,
    gspo_advantages,
    gspo_objective,
    gspo_ratio,
    query_accuracy,
    select_best_of_n,
)
from .losses import (
    DEFAULT_BETA,
    MpoWeights,
    PreferencePair,
    bco_delta,
    bco_loss,
    dpo_loss,
    dpo_loss_grad,
    mpo_combine,
    mpo_components,
    mpo_loss,
    mpo_loss_grad,
    ntp_loss,
    ntp_loss_grad,
    square_average_reweight,
    square_average_weights,
)
from .policy import ToyPolicy

__all__ = [
    "ToyPolicy",
    "RolloutGroup",
    "PreferencePair",
    "MpoWeights",
    "ntp_loss",
    "ntp_loss_grad",
    "square_average_weights",
    "square_average_reweight",
    "dpo_loss",
    "dpo_loss_grad",
    "bco_loss",
    "bco_delta",
    "mpo_components",
    "mpo_combine",
    "mpo_loss",
    "mpo_loss_grad",
    "gspo_advantages",
    "gspo_ratio",
    "gspo_objective",
    "clipped_term",
    "filter_rollouts",
    "query_accuracy",
    "select_best_of_n",
    "DEFAULT_BETA",
    "DEFAULT_CLIP_EPS",
    "DEFAULT_EPS_STD",
]
