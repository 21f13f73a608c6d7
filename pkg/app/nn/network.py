import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy import special
import torch
import torch.nn.functional as F
from torch import nn

from app.core.exceptions import DimensionError, EmptyDataset, InvalidArchitecture, InvalidArgument
from app.core.seeding import derive_seed, torch_generator
from app.models.schemas import Activation, LayerDocument, NetworkDocument, TrainConfig

logger = logging.getLogger(__name__)

DTYPE = torch.float64

_ACTIVATION_FUNCTIONS = {
    Activation.TANH: torch.tanh,
    Activation.SIGMOID: torch.sigmoid,
    Activation.IDENTITY: lambda t: t,
}


@dataclass(frozen=True, eq=False)
class LayerGradient:
    weights: np.ndarray
    biases: np.ndarray


class Network(nn.Module):
    """Dense feed-forward network; every layer is Linear followed by its activation."""

    def __init__(self, layer_sizes: Sequence[int], activations: Sequence[Activation]):
        super().__init__()
        _check_architecture(layer_sizes, activations)
        self.layer_sizes = [int(size) for size in layer_sizes]
        self.activation_tags = [Activation(tag) for tag in activations]
        self.layers = nn.ModuleList(
            nn.Linear(fan_in, fan_out, dtype=DTYPE)
            for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer, tag in zip(self.layers, self.activation_tags):
            x = _ACTIVATION_FUNCTIONS[tag](layer(x))
        return x

    def forward_all(self, x: torch.Tensor) -> List[torch.Tensor]:
        outputs = []
        for layer, tag in zip(self.layers, self.activation_tags):
            x = _ACTIVATION_FUNCTIONS[tag](layer(x))
            outputs.append(x)
        return outputs

    def reconstruct(self, data: np.ndarray) -> np.ndarray:
        """Run a read-only forward pass on a vector or a row-major batch."""
        tensor = torch.from_numpy(np.ascontiguousarray(data, dtype=np.float64))
        with torch.inference_mode():
            return self(tensor).numpy()

    def parameter_vector(self) -> np.ndarray:
        with torch.no_grad():
            return nn.utils.parameters_to_vector(self.parameters()).numpy().copy()

    def load_parameter_vector(self, vector: np.ndarray) -> None:
        with torch.no_grad():
            nn.utils.vector_to_parameters(torch.from_numpy(np.asarray(vector, dtype=np.float64)), self.parameters())


_NUMPY_ACTIVATIONS = {
    Activation.TANH: np.tanh,
    Activation.SIGMOID: special.expit,
    Activation.IDENTITY: lambda a: a,
}

FrozenLayer = Tuple[np.ndarray, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def freeze_layers(net: Network) -> List[FrozenLayer]:
    """Copy the weights out as (W^T, b, activation) for torch-free inference on single records."""
    with torch.no_grad():
        return [
            (
                np.ascontiguousarray(layer.weight.numpy().T),
                layer.bias.numpy().copy(),
                _NUMPY_ACTIVATIONS[tag]
            )
            for layer, tag in zip(net.layers, net.activation_tags)
        ]


def run_frozen(layers: Sequence[FrozenLayer], x: np.ndarray) -> np.ndarray:
    for weights, biases, activation in layers:
        x = activation(x @ weights + biases)
    return x


def _check_architecture(layer_sizes: Sequence[int], activations: Sequence[Activation]) -> None:
    if len(layer_sizes) < 2:
        raise InvalidArchitecture("a network needs at least an input and an output size")
    if len(activations) != len(layer_sizes) - 1:
        raise InvalidArchitecture(
            f"{len(layer_sizes)} layer sizes need {len(layer_sizes) - 1} activations, got {len(activations)}"
        )
    if any(int(size) < 1 for size in layer_sizes):
        raise InvalidArchitecture(f"layer sizes must be >= 1, got {list(layer_sizes)}")


def init_network(layer_sizes: Sequence[int], activations: Sequence[Activation], seed: int) -> Network:
    """
    Build a network with Glorot-uniform weights and zero biases.

    Args:
        layer_sizes: Sizes from input to output
        activations: One activation per weight layer
        seed: Seed for the weight draw

    Returns:
        A freshly initialized Network
    """
    net = Network(layer_sizes, activations)
    generator = torch_generator(seed)
    with torch.no_grad():
        for layer in net.layers:
            fan_out, fan_in = layer.weight.shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            layer.weight.uniform_(-bound, bound, generator=generator)
            layer.bias.zero_()
    return net


def _as_vector(x, expected: int, what: str) -> torch.Tensor:
    array = np.asarray(x, dtype=np.float64)
    if array.ndim != 1 or array.shape[0] != expected:
        raise DimensionError(f"{what} must have length {expected}, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidArgument(f"{what} contains non-finite values")
    return torch.from_numpy(np.ascontiguousarray(array))


def forward(net: Network, x) -> List[np.ndarray]:
    """Return the activation vector of every layer, output layer last."""
    tensor = _as_vector(x, net.input_dim, "input")
    with torch.inference_mode():
        return [activation.numpy() for activation in net.forward_all(tensor)]


def backward_mse(net: Network, x, target) -> List[LayerGradient]:
    """
    Gradients of L = mean_d (out_d - target_d)^2 with respect to every weight and bias.

    Args:
        net: Network to differentiate
        x: Input vector
        target: Target vector, same length as the output

    Returns:
        One LayerGradient per weight layer
    """
    x_tensor = _as_vector(x, net.input_dim, "input")
    target_tensor = _as_vector(target, net.output_dim, "target")
    params = [param for layer in net.layers for param in (layer.weight, layer.bias)]
    with torch.enable_grad():
        loss = F.mse_loss(net(x_tensor), target_tensor)
        grads = torch.autograd.grad(loss, params)
    return [
        LayerGradient(weights=grads[i].numpy().copy(), biases=grads[i + 1].numpy().copy())
        for i in range(0, len(grads), 2)
    ]


def mse_loss(net: Network, data: np.ndarray) -> float:
    """Mean reconstruction loss of the network over a batch (autoencoding target)."""
    tensor = torch.from_numpy(np.ascontiguousarray(data, dtype=np.float64))
    with torch.inference_mode():
        return F.mse_loss(net(tensor), tensor).item()


def _check_training_data(net: Network, data) -> torch.Tensor:
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 2 or array.shape[0] == 0:
        raise EmptyDataset("training data must be a non-empty matrix")
    if array.shape[1] != net.input_dim:
        raise DimensionError(f"training data has {array.shape[1]} columns, network expects {net.input_dim}")
    return torch.from_numpy(np.ascontiguousarray(array))


def train_epoch(net: Network, data, cfg: TrainConfig, epoch: int = 0) -> Tuple[Network, float]:
    """
    One pass of mini-batch SGD reconstructing the input.

    Args:
        net: Network updated in place
        data: Training matrix, one record per row
        cfg: Training configuration
        epoch: Epoch index, mixed into the shuffle seed

    Returns:
        Tuple of (network, mean per-record loss seen during the epoch)
    """
    tensor = _check_training_data(net, data)
    n_rows = tensor.shape[0]
    order = torch.randperm(n_rows, generator=torch_generator(derive_seed(cfg.seed, f"epoch.{epoch}")))
    optimizer = torch.optim.SGD(net.parameters(), lr=cfg.learning_rate)

    net.train()
    total = 0.0
    for start in range(0, n_rows, cfg.batch_size):
        batch = tensor[order[start:start + cfg.batch_size]]
        optimizer.zero_grad()
        loss = F.mse_loss(net(batch), batch)
        loss.backward()
        optimizer.step()
        total += loss.item() * batch.shape[0]
    net.eval()
    return net, total / n_rows


def train(net: Network, data, cfg: TrainConfig) -> List[float]:
    """Run cfg.epochs epochs and return the per-epoch loss history."""
    history = []
    for epoch in range(cfg.epochs):
        _, loss = train_epoch(net, data, cfg, epoch=epoch)
        history.append(loss)
        logger.info(f"Epoch {epoch + 1}/{cfg.epochs} - loss {loss:.6g}")
    return history


# ============== Serialization ==============

def network_to_document(net: Network) -> NetworkDocument:
    layers = []
    with torch.no_grad():
        for layer, tag in zip(net.layers, net.activation_tags):
            rows, cols = layer.weight.shape
            layers.append(LayerDocument(
                rows=rows,
                cols=cols,
                weights=layer.weight.reshape(-1).tolist(),
                biases=layer.bias.tolist(),
                activation=tag
            ))
    return NetworkDocument(input_dim=net.input_dim, layers=layers)


def network_from_document(doc: NetworkDocument) -> Network:
    if not doc.layers:
        raise InvalidArchitecture("network document has no layers")
    sizes = [doc.input_dim]
    for index, layer in enumerate(doc.layers):
        if layer.cols != sizes[-1]:
            raise InvalidArchitecture(f"layer {index} expects {layer.cols} inputs, previous layer gives {sizes[-1]}")
        if len(layer.weights) != layer.rows * layer.cols or len(layer.biases) != layer.rows:
            raise InvalidArchitecture(f"layer {index} has inconsistent weight/bias lengths")
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise InvalidArchitecture(f"layer {index} contains non-finite parameters")
        sizes.append(layer.rows)

    net = Network(sizes, [layer.activation for layer in doc.layers])
    with torch.no_grad():
        for module, layer in zip(net.layers, doc.layers):
            module.weight.copy_(torch.tensor(layer.weights, dtype=DTYPE).reshape(layer.rows, layer.cols))
            module.bias.copy_(torch.tensor(layer.biases, dtype=DTYPE))
    net.eval()
    return net


def network_to_json(net: Network) -> str:
    return network_to_document(net).model_dump_json()


def network_from_json(text: str) -> Network:
    return network_from_document(NetworkDocument.model_validate_json(text))
