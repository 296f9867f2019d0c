"""RND and VAE novelty baselines, plus the estimator factory."""
from __future__ import annotations

import math

import numpy as np

from .bigan import BiGANEstimator, StateBuffer
from .tensor import MLP, AdamState, ParamSet, Tensor, adam_step, no_grad

METHODS = ("bigan", "rnd", "vae", "lg_only", "ld_only", "none")


class RNDEstimator:
    """Prediction error of a trained network against a frozen random target."""

    name = "rnd"

    def __init__(self, obs_dim: int, rng_init: np.random.Generator, rng_train: np.random.Generator,
                 feature_width: int = 64, hidden: int = 128, batch: int = 64, lr: float = 2e-4):
        self.target = MLP([obs_dim, hidden, feature_width], rng_init, activation="relu")
        self.predictor = MLP([obs_dim, hidden, feature_width], rng_init, activation="relu")
        self.params = ParamSet()
        self.params.update(self.predictor.params, "predictor.")
        self.target_params = ParamSet()
        self.target_params.update(self.target.params, "target.")
        # the target only needs forward passes
        for t in self.target_params:
            t.requires_grad = False
            t.grad = None
        self.opt = AdamState(self.params, lr=lr)
        self.rng = rng_train
        self.batch = batch

    def score(self, states) -> np.ndarray:
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        with no_grad():
            diff = self.predictor(s).data - self.target(s).data
        out = (diff * diff).mean(axis=1)
        if not np.isfinite(out).all():
            raise FloatingPointError("non-finite RND score")
        return out

    def fit(self, buffer: StateBuffer, steps: int) -> list[float]:
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if len(buffer) == 0:
            raise ValueError("cannot train on an empty buffer")
        losses = []
        for _ in range(steps):
            s = buffer.sample(self.batch, self.rng)
            with no_grad():
                target = self.target(s).data
            self.params.zero_grads()
            loss = (self.predictor(s) - Tensor(target)).square().mean()
            loss.backward()
            adam_step(self.params, self.opt)
            losses.append(loss.item())
        return losses


class VAEEstimator:
    """Gaussian VAE; novelty is the L1 reconstruction error through the posterior mean."""

    name = "vae"

    def __init__(self, obs_dim: int, rng_init: np.random.Generator, rng_train: np.random.Generator,
                 latent_dim: int = 8, hidden: int = 128, kl_weight: float = 1.0, batch: int = 64,
                 output: str = "sigmoid", lr: float = 2e-4):
        self.obs_dim = obs_dim
        self.latent_dim = latent_dim
        self.encoder = MLP([obs_dim, hidden, 2 * latent_dim], rng_init)
        self.decoder = MLP([latent_dim, hidden, obs_dim], rng_init, out_activation=output)
        self.params = ParamSet()
        self.params.update(self.encoder.params, "enc.")
        self.params.update(self.decoder.params, "dec.")
        self.kl_weight = kl_weight
        self.opt = AdamState(self.params, lr=lr)
        self.rng = rng_train
        self.batch = batch

    def _posterior(self, s):
        h = self.encoder(s)
        d = self.latent_dim
        # split via fixed selector matrices keeps everything inside the op set
        pick_mu = np.eye(2 * d)[:, :d]
        pick_lv = np.eye(2 * d)[:, d:]
        return h @ Tensor(pick_mu), h @ Tensor(pick_lv)

    def elbo_loss(self, s: np.ndarray, noise: np.ndarray) -> Tensor:
        """Negative ELBO per sample: summed squared error + KL to N(0, I)."""
        mu, logvar = self._posterior(s)
        z = mu + (logvar * 0.5).exp() * Tensor(noise)
        recon = self.decoder(z)
        rec = (recon - Tensor(s)).square().sum(axis=1).mean()
        return rec + self.kl_weight * gaussian_kl(mu, logvar).mean()

    def fit(self, buffer: StateBuffer, steps: int) -> list[float]:
        if steps < 1:
            raise ValueError("steps must be >= 1")
        if len(buffer) == 0:
            raise ValueError("cannot train on an empty buffer")
        losses = []
        for _ in range(steps):
            s = buffer.sample(self.batch, self.rng)
            noise = self.rng.standard_normal((s.shape[0], self.latent_dim))
            self.params.zero_grads()
            loss = self.elbo_loss(s, noise)
            if not math.isfinite(loss.item()):
                raise FloatingPointError("non-finite ELBO")
            loss.backward()
            adam_step(self.params, self.opt)
            losses.append(loss.item())
        return losses

    def reconstruct(self, states) -> np.ndarray:
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        with no_grad():
            mu, _ = self._posterior(s)
            return self.decoder(mu).data

    def score(self, states) -> np.ndarray:
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        out = np.abs(s - self.reconstruct(s)).mean(axis=1)
        if not np.isfinite(out).all():
            raise FloatingPointError("non-finite VAE score")
        return out


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims."""
    return ((mu.square() + logvar.exp() - logvar - 1.0) * 0.5).sum(axis=1)


class NullEstimator:
    """``none``: no novelty signal at all."""

    name = "none"
    params = ParamSet()

    def __init__(self, *args, **kwargs):
        pass

    def fit(self, buffer, steps):
        return []

    def score(self, states) -> np.ndarray:
        return np.zeros(np.atleast_2d(states).shape[0])


def make_estimator(method: str, obs_dim: int, rng_init, rng_train, *, alpha: float = 0.9,
                   latent_dim: int = 8, batch: int = 64, output: str = "sigmoid",
                   hidden: int = 128, lr: float = 2e-4):
    if method in ("bigan", "lg_only", "ld_only"):
        a = {"bigan": alpha, "lg_only": 1.0, "ld_only": 0.0}[method]
        est = BiGANEstimator(obs_dim, rng_init, rng_train, alpha=a, latent_dim=latent_dim,
                             batch=batch, output=output, hidden=hidden, lr=lr)
        est.name = method
        return est
    if method == "rnd":
        return RNDEstimator(obs_dim, rng_init, rng_train, hidden=hidden, batch=batch, lr=lr)
    if method == "vae":
        return VAEEstimator(obs_dim, rng_init, rng_train, latent_dim=latent_dim, hidden=hidden,
                            batch=batch, output=output, lr=lr)
    if method == "none":
        return NullEstimator()
    raise ValueError(f"unknown novelty method {method!r}; expected one of {METHODS}")
