"""Constant-envelope precoding for massive multiuser MIMO.

Riemannian conjugate-gradient solver on the product-of-circles manifold,
its unfolded trainable variant, channel/dataset generation, and the
evaluation harness.
"""

from .channel import Dataset, MultipathConfig
from .learning import TrainConfig, loss_db, train
from .manifold import MuiObjective
from .metrics import Precoder
from .numerics import SeededRng
from .solvers import ArmijoConfig, CepnetParams, cepnet_forward, rmo_cg, rmo_gd

__all__ = [
    "ArmijoConfig",
    "CepnetParams",
    "Dataset",
    "MuiObjective",
    "MultipathConfig",
    "Precoder",
    "SeededRng",
    "TrainConfig",
    "cepnet_forward",
    "loss_db",
    "rmo_cg",
    "rmo_gd",
    "train",
]
