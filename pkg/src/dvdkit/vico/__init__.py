"""Visual consistency learning and router training."""
from .labels import (
    DEFAULT_CAPACITY,
    DEFAULT_PERCENTILE,
    EPS_DEN,
    LossRatioWindow,
    assign_label,
    label_patches,
    loss_ratio,
    nearest_rank,
    percentile_threshold,
)
from .lm import ToyLM, token_spread
from .objective import consistency_train, vico_expected_loss, vico_loss, vico_loss_grad
from .router import load_router, logistic_grad, logistic_loss, router_accuracy, save_router, train_router

__all__ = [
    "ToyLM",
    "token_spread",
    "vico_loss",
    "vico_loss_grad",
    "vico_expected_loss",
    "consistency_train",
    "loss_ratio",
    "LossRatioWindow",
    "percentile_threshold",
    "nearest_rank",
    "assign_label",
    "label_patches",
    "EPS_DEN",
    "DEFAULT_CAPACITY",
    "DEFAULT_PERCENTILE",
    "train_router",
    "router_accuracy",
    "logistic_loss",
    "logistic_grad",
    "save_router",
    "load_router",
]
