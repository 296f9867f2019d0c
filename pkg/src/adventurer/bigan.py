"""BiGAN novelty estimator.

The encoder E maps states to latents, the generator G maps latents to states
and the discriminator D judges (state, latent) pairs. A state's novelty mixes
its reconstruction error through G(E(s)) with the distance between the
discriminator features of the real and reconstructed pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import MLP, AdamState, ParamSet, Tensor, adam_step, no_grad

__all__ = ["StateBuffer", "LatentSpec", "NoveltyConfig", "BiGANNets", "BiGANEstimator",
           "bigan_train_step", "novelty_score", "fit_epoch", "reconstruction_terms"]


class StateBuffer:
    """Bounded FIFO of visited observations."""

    def __init__(self, obs_dim: int, capacity: int = 50_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.obs_dim = obs_dim
        self.capacity = capacity
        self._data = np.zeros((min(capacity, 1024), obs_dim))
        self._size = 0
        self._head = 0  # next write slot once full

    def __len__(self) -> int:
        return self._size

    def add(self, states) -> None:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if states.shape[1] != self.obs_dim:
            raise ValueError(f"expected states of dim {self.obs_dim}, got {states.shape[1]}")
        for row in states[-self.capacity:]:
            if self._size < self.capacity:
                if self._size == self._data.shape[0]:
                    grown = np.zeros((min(self.capacity, 2 * self._size), self.obs_dim))
                    grown[:self._size] = self._data[:self._size]
                    self._data = grown
                self._data[self._size] = row
                self._size += 1
            else:
                self._data[self._head] = row
                self._head = (self._head + 1) % self.capacity

    def contents(self) -> np.ndarray:
        if self._size < self.capacity:
            return self._data[:self._size].copy()
        return np.roll(self._data, -self._head, axis=0)

    def sample(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw; with replacement only when ``batch`` exceeds the size."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if batch <= self._size:
            idx = rng.choice(self._size, size=batch, replace=False)
        else:
            idx = rng.integers(0, self._size, size=batch)
        return self._data[idx]


@dataclass(frozen=True)
class LatentSpec:
    dim: int = 8

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dim must be >= 1")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class NoveltyConfig:
    alpha: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


class BiGANNets:
    def __init__(self, obs_dim: int, latent: LatentSpec, rng: np.random.Generator,
                 hidden: int = 128, feature_width: int = 64, output: str = "sigmoid",
                 lr: float = 2e-4, beta1: float = 0.5):
        self.obs_dim = obs_dim
        self.latent = latent
        self.encoder = MLP([obs_dim, hidden, latent.dim], rng)
        self.generator = MLP([latent.dim, hidden, obs_dim], rng, out_activation=output)
        self.discriminator = MLP([obs_dim + latent.dim, hidden, feature_width, 1], rng,
                                 activation="lrelu")
        self.ge_params = ParamSet()
        self.ge_params.update(self.encoder.params, "E.")
        self.ge_params.update(self.generator.params, "G.")
        self.d_params = ParamSet()
        self.d_params.update(self.discriminator.params, "D.")
        self.params = ParamSet()
        self.params.update(self.ge_params)
        self.params.update(self.d_params)
        self.opt_ge = AdamState(self.ge_params, lr=lr, beta1=beta1)
        self.opt_d = AdamState(self.d_params, lr=lr, beta1=beta1)

    def discriminate(self, states, latents, return_features: bool = False):
        pair = Tensor.concat([states, latents], axis=1)
        return self.discriminator(pair, return_features=return_features)


def _d_loss(nets: BiGANNets, real: np.ndarray, z: np.ndarray) -> Tensor:
    with no_grad():
        enc = nets.encoder(real).data
        fake = nets.generator(z).data
    real_logit = nets.discriminate(Tensor(real), Tensor(enc))
    fake_logit = nets.discriminate(Tensor(fake), Tensor(z))
    # -log D(s, E(s)) - log(1 - D(G(z), z))
    return (-real_logit).softplus().mean() + fake_logit.softplus().mean()


def _ge_loss(nets: BiGANNets, real: np.ndarray, z: np.ndarray) -> Tensor:
    real_logit = nets.discriminate(Tensor(real), nets.encoder(real))
    fake_logit = nets.discriminate(nets.generator(z), Tensor(z))
    # non-saturating: -log(1 - D(s, E(s))) - log D(G(z), z)
    return real_logit.softplus().mean() + (-fake_logit).softplus().mean()


def bigan_train_step(buffer: StateBuffer, nets: BiGANNets, batch: int,
                     rng: np.random.Generator) -> tuple[float, float]:
    """One discriminator ascent followed by one encoder/generator descent."""
    if len(buffer) == 0:
        raise ValueError("cannot train on an empty buffer")
    real = buffer.sample(batch, rng)
    z = nets.latent.sample(real.shape[0], rng)

    nets.d_params.zero_grads()
    d_loss = _d_loss(nets, real, z)
    if not math.isfinite(d_loss.item()):
        raise FloatingPointError("non-finite discriminator loss")
    d_loss.backward()
    adam_step(nets.d_params, nets.opt_d)

    nets.ge_params.zero_grads()
    ge_loss = _ge_loss(nets, real, z)
    if not math.isfinite(ge_loss.item()):
        raise FloatingPointError("non-finite generator/encoder loss")
    ge_loss.backward()
    adam_step(nets.ge_params, nets.opt_ge)
    nets.d_params.zero_grads()
    return d_loss.item(), ge_loss.item()


def fit_epoch(buffer: StateBuffer, nets: BiGANNets, steps: int, rng: np.random.Generator,
              batch: int = 64) -> list[tuple[float, float]]:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return [bigan_train_step(buffer, nets, batch, rng) for _ in range(steps)]


def reconstruction_terms(nets: BiGANNets, states) -> tuple[np.ndarray, np.ndarray]:
    """Per-state (L_G, L_D): mean absolute pixel and feature reconstruction errors."""
    s = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if s.shape[1] != nets.obs_dim:
        raise ValueError(f"expected states of dim {nets.obs_dim}, got {s.shape[1]}")
    with no_grad():
        z = nets.encoder(s).data
        recon = nets.generator(z).data
        _, feat_real = nets.discriminate(Tensor(s), Tensor(z), return_features=True)
        _, feat_fake = nets.discriminate(Tensor(recon), Tensor(z), return_features=True)
    l_g = np.abs(s - recon).mean(axis=1)
    l_d = np.abs(feat_real.data - feat_fake.data).mean(axis=1)
    if not (np.isfinite(l_g).all() and np.isfinite(l_d).all()):
        raise FloatingPointError("non-finite novelty terms")
    return l_g, l_d


def novelty_score(s, nets: BiGANNets, cfg: NoveltyConfig = NoveltyConfig()):
    """B(s) = alpha*L_G(s) + (1 - alpha)*L_D(s); scalar for one state, array for a batch."""
    l_g, l_d = reconstruction_terms(nets, s)
    b = cfg.alpha * l_g + (1.0 - cfg.alpha) * l_d
    return float(b[0]) if np.ndim(s) == 1 else b


class BiGANEstimator:
    """BiGAN behind the common ``fit(buffer, steps)`` / ``score(states)`` contract."""

    name = "bigan"

    def __init__(self, obs_dim: int, rng_init: np.random.Generator, rng_train: np.random.Generator,
                 alpha: float = 0.9, latent_dim: int = 8, batch: int = 64, output: str = "sigmoid",
                 hidden: int = 128, lr: float = 2e-4):
        self.cfg = NoveltyConfig(alpha)
        self.nets = BiGANNets(obs_dim, LatentSpec(latent_dim), rng_init, hidden=hidden,
                              output=output, lr=lr)
        self.rng = rng_train
        self.batch = batch

    @property
    def params(self) -> ParamSet:
        return self.nets.params

    def fit(self, buffer: StateBuffer, steps: int) -> list[float]:
        hist = fit_epoch(buffer, self.nets, steps, self.rng, self.batch)
        return [d + g for d, g in hist]

    def terms(self, states):
        return reconstruction_terms(self.nets, states)

    def score(self, states, alpha: float | None = None) -> np.ndarray:
        a = self.cfg.alpha if alpha is None else alpha
        l_g, l_d = reconstruction_terms(self.nets, states)
        return a * l_g + (1.0 - a) * l_d
