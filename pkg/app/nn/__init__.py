from .network import (
    Network,
    FrozenLayer,
    LayerGradient,
    init_network,
    forward,
    backward_mse,
    train_epoch,
    train,
    mse_loss,
    network_to_document,
    network_from_document,
    network_to_json,
    network_from_json,
    freeze_layers,
    run_frozen,
)

__all__ = [
    "Network",
    "FrozenLayer",
    "LayerGradient",
    "init_network",
    "forward",
    "backward_mse",
    "train_epoch",
    "train",
    "mse_loss",
    "network_to_document",
    "network_from_document",
    "network_to_json",
    "network_from_json",
    "freeze_layers",
    "run_frozen",
]
