"""Variational autoencoder used as the perturbation generator.

The encoder maps a standardized observation to ``2L`` numbers, read as the
latent mean followed by the latent log-variance. The decoder maps a latent
point back to standardized feature space; :func:`decode` undoes the
standardization so callers always work in original units.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from vaelime import nnet
from vaelime.errors import DimensionMismatch, NonFiniteLoss

logger = logging.getLogger(__name__)

LOGVAR_CLAMP = 10.0


def default_latent_dim(input_dim):
    return max(2, math.ceil(input_dim / 4))


@dataclass
class VaeTrainConfig:
    hidden_width: int = 16
    latent_dim: Optional[int] = None  # None -> max(2, ceil(d / 4))
    epochs: int = 150
    batch_size: int = 64
    kl_weight: float = 0.1
    learning_rate: float = 3e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_width", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class VaeModel:
    encoder: nnet.DenseNet
    decoder: nnet.DenseNet
    means: np.ndarray
    stds: np.ndarray
    # Per-dimension std of the training-set latent means; scales the default sigma.
    latent_scale: Optional[np.ndarray] = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.asarray(self.stds, dtype=float)
        if self.encoder.output_dim % 2:
            raise DimensionMismatch("encoder output must hold mean and log-variance halves")
        if self.decoder.input_dim != self.latent_dim:
            raise DimensionMismatch(
                f"decoder expects {self.decoder.input_dim} latent dims, encoder gives {self.latent_dim}"
            )
        if self.decoder.output_dim != self.input_dim or self.means.shape != (self.input_dim,):
            raise DimensionMismatch("decoder output and standardization must match the input width")
        if np.any(self.stds <= 0):
            raise ValueError("standardization stds must be positive")
        if self.latent_scale is not None:
            self.latent_scale = np.asarray(self.latent_scale, dtype=float)

    @property
    def input_dim(self):
        return self.encoder.input_dim

    @property
    def latent_dim(self):
        return self.encoder.output_dim // 2


class VaeLoss(NamedTuple):
    total: float
    recon: float
    kl: float


def _split_latent(h, latent_dim):
    mu = h[..., :latent_dim]
    logvar = np.clip(h[..., latent_dim:], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mu, logvar


def encode(model, x):
    """Latent mean and clamped log-variance of ``x`` (original units)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise DimensionMismatch(f"expected {model.input_dim} features, got {x.shape[-1]}")
    h, _ = nnet.forward(model.encoder, (x - model.means) / model.stds)
    return _split_latent(h, model.latent_dim)


def reparameterize(mu, logvar, epsilon):
    mu, logvar, epsilon = (np.asarray(a, dtype=float) for a in (mu, logvar, epsilon))
    if not (mu.shape == logvar.shape == epsilon.shape):
        raise DimensionMismatch(f"shapes {mu.shape}, {logvar.shape}, {epsilon.shape}")
    return mu + np.exp(0.5 * logvar) * epsilon


def decode(model, z):
    """Decoder output mapped back to original feature units."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.latent_dim:
        raise DimensionMismatch(f"expected {model.latent_dim} latent dims, got {z.shape[-1]}")
    h, _ = nnet.forward(model.decoder, z)
    return h * model.stds + model.means


def kl_divergence(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dimensions."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    # expm1(l) - l is the numerically safe form of exp(l) - l - 1
    return 0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar, axis=-1)


def vae_loss(x, x_hat, mu, logvar, kl_weight):
    """Reconstruction MSE plus weighted KL for one observation.

    For a batch (2-D inputs) each term is averaged over rows.
    """
    x, x_hat = np.asarray(x, dtype=float), np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape or np.shape(mu) != np.shape(logvar):
        raise DimensionMismatch("loss inputs have inconsistent shapes")
    recon = float(np.mean(np.mean((x - x_hat) ** 2, axis=-1)))
    kl = float(np.mean(kl_divergence(mu, logvar)))
    return VaeLoss(recon + kl_weight * kl, recon, kl)


def loss_and_grads(encoder, decoder, xs, eps, kl_weight):
    """Batch-mean VAE loss on standardized rows ``xs`` and its parameter gradients.

    ``eps`` holds the standard-normal draws for the reparameterized sample,
    so the result is a deterministic function of the parameters.

    Returns ``(loss, encoder_grads, decoder_grads)``.
    """
    n, d = xs.shape
    latent_dim = decoder.input_dim
    h, enc_cache = nnet.forward(encoder, xs)
    mu = h[:, :latent_dim]
    raw_logvar = h[:, latent_dim:]
    logvar = np.clip(raw_logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    x_hat, dec_cache = nnet.forward(decoder, z)
    loss = vae_loss(xs, x_hat, mu, logvar, kl_weight)

    d_xhat = 2.0 * (x_hat - xs) / (n * d)
    dec_grads, d_z = nnet.backward(decoder, dec_cache, d_xhat)
    d_mu = d_z + kl_weight * mu / n
    d_logvar = d_z * eps * 0.5 * std + kl_weight * 0.5 * np.expm1(logvar) / n
    d_logvar = np.where(np.abs(raw_logvar) > LOGVAR_CLAMP, 0.0, d_logvar)
    enc_grads, _ = nnet.backward(encoder, enc_cache, np.hstack([d_mu, d_logvar]))
    return loss, enc_grads, dec_grads


def _as_matrix(data):
    rows = getattr(data, "rows", data)
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise DimensionMismatch("training data must be a 2-D matrix")
    if not np.all(np.isfinite(rows)):
        raise ValueError("training data contains non-finite values")
    return rows


def train_vae(data, config=None):
    """Train a VAE on a Dataset (or a plain row matrix) with mini-batch Adam.

    Features are standardized with statistics frozen into the returned model.
    ``model.history`` holds one ``VaeLoss`` of epoch means per epoch.
    """
    config = config or VaeTrainConfig()
    rows = _as_matrix(data)
    n, d = rows.shape
    if n < 2 * config.batch_size:
        raise ValueError(f"need at least {2 * config.batch_size} rows, got {n}")
    latent_dim = config.latent_dim or default_latent_dim(d)

    means = rows.mean(axis=0)
    stds = rows.std(axis=0, ddof=1)
    stds = np.where(stds > 1e-12, stds, 1.0)
    xs = (rows - means) / stds

    rng = np.random.default_rng(config.seed)
    width = config.hidden_width
    encoder = nnet.init_dense_net([d, width, 2 * latent_dim], ["tanh", "identity"], rng)
    decoder = nnet.init_dense_net([latent_dim, width, d], ["tanh", "identity"], rng)
    n_enc = len(encoder.parameters())
    params = encoder.parameters() + decoder.parameters()
    state = nnet.AdamState.for_params(params, learning_rate=config.learning_rate)

    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        eps_all = rng.standard_normal((n, latent_dim))
        totals, recons, kls, sizes = [], [], [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            enc = encoder.with_parameters(params[:n_enc])
            dec = decoder.with_parameters(params[n_enc:])
            loss, g_enc, g_dec = loss_and_grads(enc, dec, xs[idx], eps_all[idx], config.kl_weight)
            if not np.isfinite(loss.total):
                raise NonFiniteLoss(
                    f"loss became {loss.total} at epoch {epoch}; "
                    "lower the learning rate or the KL weight"
                )
            params, state = nnet.optimizer_step(params, g_enc + g_dec, state)
            totals.append(loss.total)
            recons.append(loss.recon)
            kls.append(loss.kl)
            sizes.append(len(idx))
        history.append(
            VaeLoss(
                float(np.average(totals, weights=sizes)),
                float(np.average(recons, weights=sizes)),
                float(np.average(kls, weights=sizes)),
            )
        )
        logger.debug("epoch %d: %s", epoch, history[-1])

    model = VaeModel(
        encoder=encoder.with_parameters(params[:n_enc]),
        decoder=decoder.with_parameters(params[n_enc:]),
        means=means,
        stds=stds,
        history=history,
    )
    mu, _ = encode(model, rows)
    model.latent_scale = mu.std(axis=0, ddof=1)
    return model
