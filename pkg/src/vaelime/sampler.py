"""Perturbation generation and weighting for VAE-LIME and the tabular LIME baseline."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from vaelime import vae
from vaelime.errors import BlackBoxError, DimensionMismatch

RANGE_TOL = 1e-12


@dataclass
class ExplainConfig:
    """Parameters shared by both explanation methods.

    ``sigma`` fixes the latent spread per dimension. When it is None the
    spread is ``sigma_scale`` times the model's training latent-mean std.
    ``kernel_width`` defaults to 0.75 * sqrt(d) for LIME.
    """

    n_samples: int = 1000
    sigma: Optional[np.ndarray] = None
    sigma_scale: float = 0.5
    kernel_width: Optional[float] = None
    ridge_lambda: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if np.any(self.sigma <= 0):
                raise ValueError("every sigma_j must be positive")
        if self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be positive")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")

    def resolve_sigma(self, model):
        if self.sigma is not None:
            if self.sigma.shape != (model.latent_dim,):
                raise DimensionMismatch(f"sigma needs {model.latent_dim} entries")
            return self.sigma
        scale = model.latent_scale
        if scale is None:
            scale = np.ones(model.latent_dim)
        return self.sigma_scale * np.maximum(scale, 1e-12)

    def resolve_kernel_width(self, input_dim):
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(input_dim)


@dataclass
class WeightedSampleSet:
    samples: np.ndarray  # (N, d), input space
    weights: np.ndarray  # (N,), each in [0, 1]
    outputs: np.ndarray  # (N,), black-box predictions
    x_test: np.ndarray
    latent_points: Optional[np.ndarray] = None
    z_star: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.weights)


def sample_latent(z_star, sigma, n, seed):
    """``n`` draws of ``z_star + sigma * eps`` with eps ~ N(0, I)."""
    z_star = np.asarray(z_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if z_star.shape != sigma.shape or z_star.ndim != 1:
        raise DimensionMismatch(f"z_star {z_star.shape} and sigma {sigma.shape} must match")
    rng = np.random.default_rng(seed)
    return z_star + sigma * rng.standard_normal((n, len(z_star)))


def gower_weights(latent_points, z_star):
    """One minus the Gower distance from each point to ``z_star``.

    Ranges are taken over the batch together with ``z_star``; dimensions
    with zero range contribute nothing.
    """
    pts = np.atleast_2d(np.asarray(latent_points, dtype=float))
    z_star = np.asarray(z_star, dtype=float)
    if pts.shape[1] != z_star.shape[0]:
        raise DimensionMismatch("latent points and z_star differ in dimension")
    hi = np.maximum(pts.max(axis=0), z_star)
    lo = np.minimum(pts.min(axis=0), z_star)
    ranges = hi - lo
    live = ranges >= RANGE_TOL
    scaled = np.zeros_like(pts)
    scaled[:, live] = np.abs(pts[:, live] - z_star[live]) / ranges[live]
    dist = scaled.sum(axis=1) / pts.shape[1]
    return np.clip(1.0 - dist, 0.0, 1.0)


def lime_sample(x_test, feature_stds, n, seed):
    """Independent Gaussian perturbations of each feature around ``x_test``."""
    x_test = np.asarray(x_test, dtype=float)
    stds = np.asarray(feature_stds, dtype=float)
    if x_test.shape != stds.shape:
        raise DimensionMismatch("x_test and feature_stds differ in length")
    if np.any(stds <= 0):
        raise ValueError("feature stds must be positive")
    rng = np.random.default_rng(seed)
    return x_test + stds * rng.standard_normal((n, len(x_test)))


def kernel_weights(samples, x_test, feature_stds, kappa):
    """Exponential kernel exp(-D^2 / kappa^2) on std-scaled Euclidean distance."""
    if kappa <= 0:
        raise ValueError("kernel width must be positive")
    diff = (np.atleast_2d(samples) - np.asarray(x_test)) / np.asarray(feature_stds)
    d2 = np.sum(diff * diff, axis=1)
    return np.exp(-d2 / (kappa * kappa))


def _predict_chunk(blackbox, chunk, offset):
    try:
        y = np.asarray(blackbox.predict(chunk), dtype=float).reshape(-1)
    except Exception as exc:
        # rerun row by row to pin down which sample broke the model
        for i, row in enumerate(chunk):
            try:
                blackbox.predict(row)
            except Exception as row_exc:
                raise BlackBoxError(offset + i, row_exc) from row_exc
        raise BlackBoxError(offset, exc) from exc
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise BlackBoxError(offset + int(bad[0]), "non-finite output")
    return y


def query_blackbox(blackbox, samples, workers=1):
    """Predict every sample; chunks may run on a thread pool, output stays in index order."""
    samples = np.asarray(samples, dtype=float)
    if workers <= 1 or len(samples) < 2 * workers:
        return _predict_chunk(blackbox, samples, 0)
    bounds = np.linspace(0, len(samples), workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(
            lambda b: _predict_chunk(blackbox, samples[b[0]:b[1]], b[0]),
            zip(bounds[:-1], bounds[1:]),
        )
        return np.concatenate(list(parts))


def build_vae_lime_set(model, blackbox, x_test, config=None):
    """Encode, sample the latent neighbourhood, weight, decode, and query the black box."""
    config = config or ExplainConfig()
    x_test = np.asarray(x_test, dtype=float)
    if x_test.shape != (model.input_dim,) or blackbox.input_dim != model.input_dim:
        raise DimensionMismatch("x_test, VAE and black box must share the input width")
    z_star, _ = vae.encode(model, x_test)
    latent = sample_latent(z_star, config.resolve_sigma(model), config.n_samples, config.seed)
    weights = gower_weights(latent, z_star)
    samples = vae.decode(model, latent)
    outputs = query_blackbox(blackbox, samples, config.workers)
    return WeightedSampleSet(samples, weights, outputs, x_test, latent, z_star)


def build_lime_set(blackbox, x_test, feature_stds, config=None):
    config = config or ExplainConfig()
    x_test = np.asarray(x_test, dtype=float)
    if x_test.shape != (blackbox.input_dim,):
        raise DimensionMismatch("x_test and black box differ in input width")
    samples = lime_sample(x_test, feature_stds, config.n_samples, config.seed)
    weights = kernel_weights(samples, x_test, feature_stds, config.resolve_kernel_width(len(x_test)))
    outputs = query_blackbox(blackbox, samples, config.workers)
    return WeightedSampleSet(samples, weights, outputs, x_test)
