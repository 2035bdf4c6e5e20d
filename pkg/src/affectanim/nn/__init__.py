"""Small numpy CNN engine: layers, losses, Adam and gradient checking."""

from affectanim.nn.layers import LayerConfig
from affectanim.nn.losses import cross_entropy, mse, one_hot
from affectanim.nn.network import Network, build_dern, build_dsrn, dern_layers, dsrn_layers
from affectanim.nn.optim import Adam
from affectanim.nn.train import TrainConfig, evaluate_loss, fit

__all__ = [
    "Adam",
    "LayerConfig",
    "Network",
    "TrainConfig",
    "build_dern",
    "build_dsrn",
    "cross_entropy",
    "dern_layers",
    "dsrn_layers",
    "evaluate_loss",
    "fit",
    "mse",
    "one_hot",
]
