"""WGAN-GP core: initialisation, gradient penalty, local training and sampling."""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import torch
from torch import Tensor

from .errors import ContractError
from .metadata import GlobalMetadata, decode
from .networks import (
    DTYPE,
    BlockSpec,
    Critic,
    Generator,
    critic_from_weights,
    generator_from_weights,
    init_scaled_uniform,
    seeded_generator,
    weights_from_module,
)
from .states import Dataset, EncodedMatrix, GanPair, TrainStats, WeightSet
from .utils import GanConfig

logger = logging.getLogger(__name__)

CriticLike = Union[WeightSet, Critic]


def init_gan(cfg: GanConfig, feature_width: int, seed: int) -> GanPair:
    if feature_width <= 0:
        raise ContractError("feature_width must be positive")
    gen = seeded_generator(seed)
    generator = init_scaled_uniform(Generator(cfg.noise_dim, cfg.gen_hidden, feature_width), gen)
    critic = init_scaled_uniform(Critic(feature_width, cfg.disc_hidden), gen)
    return GanPair(weights_from_module(generator), weights_from_module(critic))


def _as_critic(disc: CriticLike) -> Critic:
    return critic_from_weights(disc) if isinstance(disc, WeightSet) else disc


def _penalty(critic: Critic, real: Tensor, fake: Tensor, mix: Tensor) -> Tensor:
    # create_graph keeps the penalty differentiable w.r.t. the critic weights
    points = (mix[:, None] * real + (1.0 - mix[:, None]) * fake).detach().requires_grad_(True)
    scores = critic(points)
    (grads,) = torch.autograd.grad(scores, points, grad_outputs=torch.ones_like(scores), create_graph=True)
    return ((torch.linalg.vector_norm(grads, ord=2, dim=1) - 1.0) ** 2).mean()


def gradient_penalty(disc: CriticLike, real_batch: np.ndarray, fake_batch: np.ndarray, mix_draws: np.ndarray) -> float:
    """Mean of (||grad D(x_hat)||_2 - 1)^2 over x_hat = e*real + (1-e)*fake; lambda not applied."""
    real = np.asarray(real_batch, dtype=np.float64)
    fake = np.asarray(fake_batch, dtype=np.float64)
    mix = np.asarray(mix_draws, dtype=np.float64)
    if real.ndim != 2 or real.shape != fake.shape:
        raise ContractError(f"real and fake batches must share a 2-D shape, got {real.shape} and {fake.shape}")
    if mix.shape != (real.shape[0],):
        raise ContractError(f"expected one mix coefficient per row, got shape {mix.shape}")
    critic = _as_critic(disc)
    with torch.enable_grad():
        value = _penalty(critic, torch.tensor(real, dtype=DTYPE), torch.tensor(fake, dtype=DTYPE), torch.tensor(mix, dtype=DTYPE))
    return float(value.detach())


def input_gradients(disc: CriticLike, points: np.ndarray) -> np.ndarray:
    """Gradient of the critic score with respect to each input row."""
    critic = _as_critic(disc)
    x = torch.tensor(np.asarray(points, dtype=np.float64), dtype=DTYPE, requires_grad=True)
    with torch.enable_grad():
        scores = critic(x)
        (grads,) = torch.autograd.grad(scores, x, grad_outputs=torch.ones_like(scores))
    return grads.detach().numpy()


def critic_scores(disc: CriticLike, points: np.ndarray) -> np.ndarray:
    critic = _as_critic(disc)
    with torch.no_grad():
        return critic(torch.tensor(np.asarray(points, dtype=np.float64), dtype=DTYPE)).numpy()


def train_local(
    pair: GanPair,
    local_rows: EncodedMatrix,
    epochs: int,
    cfg: GanConfig,
    seed: int,
) -> Tuple[GanPair, TrainStats]:
    """Run ``epochs`` passes of WGAN-GP on one node's rows of one label.

    An epoch is ceil(n / batch) generator steps, each preceded by ``n_critic`` critic steps on
    freshly drawn real batches.
    """
    if epochs < 0:
        raise ContractError("epochs must be non-negative")
    if epochs == 0:
        return pair, TrainStats()
    if len(local_rows) == 0:
        raise ContractError("train_local needs at least one local row")

    generator = generator_from_weights(pair.generator, local_rows.layout)
    critic = critic_from_weights(pair.discriminator)
    if critic.body[0].in_features != local_rows.width:
        raise ContractError(f"critic expects width {critic.body[0].in_features}, rows have {local_rows.width}")

    gen = seeded_generator(seed)
    data = torch.tensor(local_rows.rows, dtype=DTYPE)
    n = data.shape[0]
    batch = min(cfg.batch_size, n)
    steps_per_epoch = math.ceil(n / batch)
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = torch.optim.Adam(generator.parameters(), lr=cfg.learning_rate, betas=betas)
    opt_d = torch.optim.Adam(critic.parameters(), lr=cfg.learning_rate, betas=betas)

    stats = TrainStats()
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            for _ in range(cfg.n_critic):
                real = data[torch.randperm(n, generator=gen)[:batch]]
                z = torch.randn(batch, cfg.noise_dim, generator=gen, dtype=DTYPE)
                with torch.no_grad():
                    fake = generator(z)
                mix = torch.rand(batch, generator=gen, dtype=DTYPE)
                loss_d = critic(fake).mean() - critic(real).mean() + cfg.lambda_gp * _penalty(critic, real, fake, mix)
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                stats.critic_steps += 1

            z = torch.randn(batch, cfg.noise_dim, generator=gen, dtype=DTYPE)
            loss_g = -critic(generator(z)).mean()
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()
            stats.generator_steps += 1

    stats.critic_loss = float(loss_d.detach())
    stats.generator_loss = float(loss_g.detach())
    return GanPair(weights_from_module(generator), weights_from_module(critic)), stats


def generate_rows(gen_weights: WeightSet, n: int, blocks: BlockSpec, seed: int) -> np.ndarray:
    generator = generator_from_weights(gen_weights, blocks)
    noise_source = seeded_generator(seed)
    with torch.no_grad():
        z = torch.randn(n, generator.noise_dim, generator=noise_source, dtype=DTYPE)
        return generator(z).numpy()


def sample(gen: WeightSet, n: int, label: str, gm: GlobalMetadata, seed: int) -> Dataset:
    """Draw ``n`` rows from a classwise generator and tag them with ``label``."""
    if n < 0:
        raise ContractError("n must be non-negative")
    if n == 0:
        return Dataset.empty(gm.table)
    layout = gm.layout()
    rows = generate_rows(gen, n, layout, seed)
    labels = np.full(n, gm.label_index(label), dtype=int)
    return decode(EncodedMatrix(rows, layout, labels), gm)


def save_weights(weights: WeightSet, path: Path) -> Path:
    """Named-tensor container: one float64 array per name, in order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        np.savez(f, **weights.as_dict())
    return path


def load_weights(path: Path) -> WeightSet:
    with np.load(path, allow_pickle=False) as archive:
        return WeightSet(tuple((name, archive[name]) for name in archive.files))


__all__ = [
    "init_gan",
    "gradient_penalty",
    "input_gradients",
    "critic_scores",
    "train_local",
    "generate_rows",
    "sample",
    "save_weights",
    "load_weights",
]
