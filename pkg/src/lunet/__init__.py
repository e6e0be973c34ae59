"""Invertible networks built from learned LU-factorized fully connected layers."""
from .activation import Identity, LeakySoftplus
from .model import (
    InitScheme,
    LULayer,
    LUNet,
    backward,
    forward,
    init_net,
    interpolate,
    inverse,
    log_abs_det_jacobian,
    log_density,
    nll_loss,
    sample,
)
from .train import TrainConfig, evaluate_nll, fit

__version__ = "0.1.0"
