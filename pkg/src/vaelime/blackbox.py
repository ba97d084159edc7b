"""Black-box regressors to be explained.

Both kinds share one contract: ``predict(x)`` maps a length-d vector to a
float, or a ``(n, d)`` batch to a length-n array.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from vaelime import nnet
from vaelime.errors import DimensionMismatch, NonFiniteInput, NonFiniteLoss, WrongKind

logger = logging.getLogger(__name__)


def _check_input(x, input_dim):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != input_dim:
        raise DimensionMismatch(f"expected {input_dim} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("black-box input contains non-finite values")
    return x


@dataclass(frozen=True)
class AnalyticSpec:
    """f(x) = c1 sin(x1) + c2 x2 x3 + c3 x4^2 + sum_{j>=5} b_j x_j.

    ``linear`` holds the b_j for features 5..d, so ``input_dim = 4 + len(linear)``.
    """

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.5
    linear: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(float(b) for b in self.linear))
        if self.input_dim < 5:
            raise ValueError("analytic spec needs at least one linear term (input_dim >= 5)")

    @property
    def input_dim(self):
        return 4 + len(self.linear)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.c1 * np.sin(x[..., 0])
            + self.c2 * x[..., 1] * x[..., 2]
            + self.c3 * x[..., 3] ** 2
            + x[..., 4:] @ np.asarray(self.linear)
        )

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        g[..., 0] = self.c1 * np.cos(x[..., 0])
        g[..., 1] = self.c2 * x[..., 2]
        g[..., 2] = self.c2 * x[..., 1]
        g[..., 3] = 2.0 * self.c3 * x[..., 3]
        g[..., 4:] = np.asarray(self.linear)
        return g

    def full_linear(self):
        """Coefficient vector of the pure-linear part over all d features."""
        return np.concatenate([np.zeros(4), np.asarray(self.linear)])


def default_analytic_spec(input_dim, c=(1.0, 1.0, 0.5)):
    k = np.arange(input_dim - 4)
    linear = np.where(k % 2 == 0, 1.0, -0.5) * (1.0 + 0.25 * (k % 3))
    return AnalyticSpec(*c, linear=tuple(linear))


class AnalyticBlackBox:
    kind = "analytic"

    def __init__(self, spec):
        self.spec = spec

    @property
    def input_dim(self):
        return self.spec.input_dim

    def predict(self, x):
        x = _check_input(x, self.input_dim)
        y = self.spec.evaluate(x)
        return float(y) if x.ndim == 1 else y


class MlpBlackBox:
    """Dense regressor on standardized inputs with a standardized scalar output."""

    kind = "mlp"

    def __init__(self, net, means, stds, target_mean=0.0, target_std=1.0, metrics=None):
        self.net = net
        self.means = np.asarray(means, dtype=float)
        self.stds = np.asarray(stds, dtype=float)
        self.target_mean = float(target_mean)
        self.target_std = float(target_std)
        self.metrics = dict(metrics or {})
        if net.output_dim != 1:
            raise DimensionMismatch("regressor network must have a single output")
        if self.means.shape != (net.input_dim,) or self.stds.shape != (net.input_dim,):
            raise DimensionMismatch("standardization does not match the network input width")

    @property
    def input_dim(self):
        return self.net.input_dim

    def predict(self, x):
        x = _check_input(x, self.input_dim)
        out, _ = nnet.forward(self.net, (x - self.means) / self.stds)
        y = out[..., 0] * self.target_std + self.target_mean
        return float(y) if x.ndim == 1 else y


def analytic_gradient(blackbox, x):
    if getattr(blackbox, "kind", None) != "analytic":
        raise WrongKind("exact gradients exist only for analytic black boxes")
    x = _check_input(x, blackbox.input_dim)
    return blackbox.spec.gradient(x)


@dataclass
class MlpConfig:
    hidden: tuple = (32, 16)
    epochs: int = 120
    batch_size: int = 64
    learning_rate: float = 3e-3
    # learning rate decays linearly to this fraction of its start by the last epoch
    final_lr_fraction: float = 0.01
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")


def train_mlp_regressor(dataset, target=None, config=None, seed=0):
    """Fit a d -> 32 tanh -> 16 tanh -> 1 regressor with Adam on squared error.

    Features and target are standardized; the learning rate decays linearly
    over the epochs so the final iterates settle instead of jittering.

    ``target`` is a column name from ``dataset.feature_names`` or None for
    ``dataset.target``. A chronological tail of ``holdout_fraction`` rows is
    kept aside; its MSE and R^2 land in ``blackbox.metrics``.
    """
    config = config or MlpConfig()
    rows = dataset.rows
    names = list(dataset.feature_names)
    if target is None:
        if dataset.target is None:
            raise KeyError("dataset has no target column")
        y = dataset.target
    else:
        if target not in names:
            raise KeyError(f"target column {target!r} not found")
        j = names.index(target)
        y = rows[:, j]
        rows = np.delete(rows, j, axis=1)
    n = rows.shape[0]
    if n < 100:
        raise ValueError(f"need at least 100 rows to train, got {n}")

    n_fit = math.ceil((1.0 - config.holdout_fraction) * n)
    x_fit, y_fit = rows[:n_fit], y[:n_fit]
    x_hold, y_hold = rows[n_fit:], y[n_fit:]

    means = x_fit.mean(axis=0)
    stds = x_fit.std(axis=0, ddof=1)
    stds = np.where(stds > 1e-12, stds, 1.0)
    t_mean = float(y_fit.mean())
    t_std = float(y_fit.std(ddof=1))
    if not t_std > 1e-12:
        t_std = 1.0
    xs = (x_fit - means) / stds
    ys = (y_fit - t_mean) / t_std

    rng = np.random.default_rng(seed)
    sizes = [rows.shape[1], *config.hidden, 1]
    acts = ["tanh"] * len(config.hidden) + ["identity"]
    net = nnet.init_dense_net(sizes, acts, rng)
    # start from the constant (mean) predictor; hidden layers keep their random init
    net.layers[-1].weights[:] = 0.0
    params = net.parameters()
    state = nnet.AdamState.for_params(params, learning_rate=config.learning_rate)
    for epoch in range(config.epochs):
        progress = epoch / max(1, config.epochs - 1)
        lr = config.learning_rate * (1.0 - (1.0 - config.final_lr_fraction) * progress)
        state = replace(state, learning_rate=lr)
        order = rng.permutation(n_fit)
        for start in range(0, n_fit, config.batch_size):
            idx = order[start:start + config.batch_size]
            cur = net.with_parameters(params)
            out, cache = nnet.forward(cur, xs[idx])
            resid = out[:, 0] - ys[idx]
            loss = float(np.mean(resid**2))
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"regressor loss became {loss} at epoch {epoch}")
            grads, _ = nnet.backward(cur, cache, (2.0 * resid / len(idx))[:, None])
            params, state = nnet.optimizer_step(params, grads, state)

    box = MlpBlackBox(net.with_parameters(params), means, stds, t_mean, t_std)
    pred = box.predict(x_hold)
    mse = float(np.mean((pred - y_hold) ** 2))
    var = float(np.var(y_hold))
    box.metrics = {
        "holdout_mse": mse,
        "holdout_target_variance": var,
        "holdout_r2": 1.0 - mse / var if var > 1e-12 else (1.0 if mse < 1e-12 else 0.0),
        "n_fit": int(n_fit),
        "n_holdout": int(n - n_fit),
    }
    logger.info("black box holdout: %s", box.metrics)
    return box
