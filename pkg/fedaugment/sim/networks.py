"""Fully-connected networks and their conversion to and from WeightSets."""
from __future__ import annotations

import math
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor, nn

from .errors import ContractError
from .states import CONTINUOUS, ColumnBlock, WeightSet

DTYPE = torch.float64
LEAKY_SLOPE = 0.2

BlockSpec = Union[int, Sequence[ColumnBlock]]


def build_mlp(in_dim: int, hidden: Sequence[int], out_dim: int, activation: Callable[[], nn.Module]) -> nn.Sequential:
    layers: List[nn.Module] = []
    prev = in_dim
    for width in hidden:
        layers.append(nn.Linear(prev, width, dtype=DTYPE))
        layers.append(activation())
        prev = width
    layers.append(nn.Linear(prev, out_dim, dtype=DTYPE))
    return nn.Sequential(*layers)


def _leaky() -> nn.Module:
    return nn.LeakyReLU(LEAKY_SLOPE)


def as_blocks(spec: BlockSpec) -> Tuple[ColumnBlock, ...]:
    if isinstance(spec, int):
        return tuple(ColumnBlock(f"x{i}", CONTINUOUS, i, 1) for i in range(spec))
    return tuple(spec)


class Generator(nn.Module):
    """Noise -> encoded row; tanh on continuous slots, softmax per categorical or label block."""

    def __init__(self, noise_dim: int, hidden: Sequence[int], blocks: BlockSpec) -> None:
        super().__init__()
        self.blocks = as_blocks(blocks)
        self.noise_dim = noise_dim
        width = sum(block.width for block in self.blocks)
        self.body = build_mlp(noise_dim, hidden, width, _leaky)

    def forward(self, z: Tensor) -> Tensor:
        raw = self.body(z)
        parts = []
        for block in self.blocks:
            if block.width == 0:
                continue
            chunk = raw[:, block.start:block.stop]
            if block.kind == CONTINUOUS:
                parts.append(torch.tanh(chunk))
            else:
                parts.append(torch.softmax(chunk, dim=1))
        return torch.cat(parts, dim=1)


class Critic(nn.Module):
    def __init__(self, in_dim: int, hidden: Sequence[int]) -> None:
        super().__init__()
        self.body = build_mlp(in_dim, hidden, 1, _leaky)

    def forward(self, x: Tensor) -> Tensor:
        return self.body(x).squeeze(-1)


class Classifier(nn.Module):
    def __init__(self, in_dim: int, hidden: Sequence[int], n_classes: int) -> None:
        super().__init__()
        self.body = build_mlp(in_dim, hidden, n_classes, nn.ReLU)

    def forward(self, x: Tensor) -> Tensor:
        return self.body(x)


def init_scaled_uniform(module: nn.Module, gen: torch.Generator) -> nn.Module:
    """Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); zero biases."""
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, nn.Linear):
                bound = math.sqrt(6.0 / (layer.in_features + layer.out_features))
                layer.weight.uniform_(-bound, bound, generator=gen)
                layer.bias.zero_()
    return module


def seeded_generator(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(int(seed))


def weights_from_module(module: nn.Module) -> WeightSet:
    return WeightSet(tuple((name, tensor.detach().cpu().numpy()) for name, tensor in module.state_dict().items()))


def load_weights_into(module: nn.Module, weights: WeightSet) -> nn.Module:
    expected = WeightSet(tuple((name, np.zeros(tuple(t.shape))) for name, t in module.state_dict().items()))
    expected.require_layout(weights)
    module.load_state_dict({name: torch.tensor(array, dtype=DTYPE) for name, array in weights})
    return module


def layer_shapes(weights: WeightSet) -> List[Tuple[int, int]]:
    """(in, out) of every linear layer, in order."""
    shapes = [tensor.shape for name, tensor in weights if name.endswith("weight")]
    if not shapes or any(len(shape) != 2 for shape in shapes):
        raise ContractError("weight set does not describe a fully-connected network")
    return [(int(shape[1]), int(shape[0])) for shape in shapes]


def generator_from_weights(weights: WeightSet, blocks: BlockSpec) -> Generator:
    shapes = layer_shapes(weights)
    net = Generator(shapes[0][0], [out for _, out in shapes[:-1]], blocks)
    if sum(block.width for block in net.blocks) != shapes[-1][1]:
        raise ContractError(f"generator emits {shapes[-1][1]} columns, layout expects {sum(b.width for b in net.blocks)}")
    return load_weights_into(net, weights)


def critic_from_weights(weights: WeightSet) -> Critic:
    shapes = layer_shapes(weights)
    return load_weights_into(Critic(shapes[0][0], [out for _, out in shapes[:-1]]), weights)


def classifier_from_weights(weights: WeightSet) -> Classifier:
    shapes = layer_shapes(weights)
    net = Classifier(shapes[0][0], [out for _, out in shapes[:-1]], shapes[-1][1])
    return load_weights_into(net, weights)


__all__ = [
    "DTYPE",
    "build_mlp",
    "as_blocks",
    "Generator",
    "Critic",
    "Classifier",
    "init_scaled_uniform",
    "seeded_generator",
    "weights_from_module",
    "load_weights_into",
    "layer_shapes",
    "generator_from_weights",
    "critic_from_weights",
    "classifier_from_weights",
]
