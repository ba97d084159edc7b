"""Synthetic correlated process data, CSV round-tripping, and train/test splits."""

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from vaelime.blackbox import AnalyticSpec, default_analytic_spec
from vaelime.errors import DuplicateHeader, EmptyDataset, NonFiniteValue, ParseError

TARGET_COLUMN = "target"
_NAME_RE = re.compile(r"^[A-Za-z0-9_]+$")


@dataclass(frozen=True)
class Dataset:
    feature_names: tuple
    rows: np.ndarray
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.feature_names):
            raise ValueError(f"rows shape {rows.shape} does not match {len(self.feature_names)} names")
        if rows.shape[0] == 0:
            raise EmptyDataset("dataset has no rows")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DuplicateHeader("feature names must be unique")
        if not np.all(np.isfinite(rows)):
            raise NonFiniteValue("dataset contains non-finite values")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "rows", rows)
        if self.target is not None:
            target = np.asarray(self.target, dtype=float)
            if target.shape != (rows.shape[0],):
                raise ValueError("target length must equal the row count")
            if not np.all(np.isfinite(target)):
                raise NonFiniteValue("target contains non-finite values")
            object.__setattr__(self, "target", target)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self):
        return self.rows.shape[1]

    @property
    def means(self):
        return self.rows.mean(axis=0)

    @property
    def stds(self):
        if len(self) < 2:
            return np.zeros(self.n_features)
        return self.rows.std(axis=0, ddof=1)

    @property
    def mins(self):
        return self.rows.min(axis=0)

    @property
    def maxs(self):
        return self.rows.max(axis=0)

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        target = None if self.target is None else self.target[index]
        return Dataset(self.feature_names, self.rows[index], target)


@dataclass
class SynthConfig:
    """Latent AR(1) factors mixed linearly into correlated features.

    ``mixing`` overrides the seeded random mixing matrix (shape d x k).
    ``target_spec`` defaults to :func:`default_analytic_spec` for ``n_features``.
    """

    n_rows: int = 5000
    n_features: int = 12
    latent_rank: int = 3
    ar_coefficient: float = 0.9
    noise_std: float = 0.1
    mixing_seed: int = 7
    target_noise_std: float = 0.05
    target_spec: Optional[AnalyticSpec] = None
    mixing: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_rows < 10:
            raise ValueError("n_rows must be at least 10")
        if not 1 <= self.latent_rank <= self.n_features:
            raise ValueError("latent_rank must be between 1 and n_features")
        if not 0.0 <= self.ar_coefficient < 1.0:
            raise ValueError("ar_coefficient must lie in [0, 1)")
        if self.noise_std < 0 or self.target_noise_std < 0:
            raise ValueError("noise levels must be nonnegative")
        if self.n_features < 5 and self.target_spec is None:
            raise ValueError("the default target needs at least 5 features")
        if self.mixing is not None:
            self.mixing = np.asarray(self.mixing, dtype=float)
            if self.mixing.shape != (self.n_features, self.latent_rank):
                raise ValueError("mixing matrix must have shape (n_features, latent_rank)")


def mixing_matrix(config):
    """Seeded Gaussian loadings with unit-norm rows, so every feature carries unit signal variance."""
    if config.mixing is not None:
        return config.mixing
    rng = np.random.default_rng(config.mixing_seed)
    a = rng.standard_normal((config.n_features, config.latent_rank))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def latent_factors(n_rows, rank, rho, rng):
    """Stationary unit-variance AR(1) factors, shape (n_rows, rank)."""
    shocks = rng.standard_normal((n_rows, rank))
    u = np.empty_like(shocks)
    u[0] = shocks[0]
    scale = math.sqrt(1.0 - rho * rho)
    for t in range(1, n_rows):
        u[t] = rho * u[t - 1] + scale * shocks[t]
    return u


def generate(config=None, seed=0):
    config = config or SynthConfig()
    spec = config.target_spec or default_analytic_spec(config.n_features)
    if spec.input_dim != config.n_features:
        raise ValueError("target spec input_dim must equal n_features")
    rng = np.random.default_rng(seed)
    u = latent_factors(config.n_rows, config.latent_rank, config.ar_coefficient, rng)
    x = u @ mixing_matrix(config).T
    x = x + config.noise_std * rng.standard_normal(x.shape)
    y = spec.evaluate(x) + config.target_noise_std * rng.standard_normal(config.n_rows)
    names = tuple(f"x{j + 1}" for j in range(config.n_features))
    return Dataset(names, x, y)


def _format(value):
    # repr() of a Python float is the shortest string that round-trips
    return repr(float(value))


def write_csv(dataset, path):
    path = Path(path)
    header = list(dataset.feature_names)
    if dataset.target is not None:
        header.append(TARGET_COLUMN)
    for name in header:
        if not _NAME_RE.match(name):
            raise ParseError(f"column name {name!r} must match [A-Za-z0-9_]+")
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, row in enumerate(dataset.rows):
            cells = [_format(v) for v in row]
            if dataset.target is not None:
                cells.append(_format(dataset.target[i]))
            writer.writerow(cells)
    return path


def load_csv(path):
    """Read a numeric CSV with a header row; a ``target`` column becomes the target."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        header = [h.strip() for h in header]
        seen = set()
        for name in header:
            if name in seen:
                raise DuplicateHeader(f"duplicate column {name!r} in {path}")
            seen.add(name)
        values = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(record)}", row=lineno)
            parsed = []
            for name, cell in zip(header, record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise NonFiniteValue(f"non-finite value {cell!r}", row=lineno, column=name)
                parsed.append(v)
            values.append(parsed)
    if not values:
        raise EmptyDataset(f"{path} has a header but no data rows")
    table = np.array(values, dtype=float)
    if TARGET_COLUMN in header:
        t = header.index(TARGET_COLUMN)
        names = header[:t] + header[t + 1:]
        return Dataset(tuple(names), np.delete(table, t, axis=1), table[:, t])
    return Dataset(tuple(header), table)


def split(dataset, train_fraction=0.8, seed=0, mode="chronological"):
    """Split into (train, test) with ceil(f * T) training rows.

    Chronological mode keeps time order; shuffled mode applies a seeded
    permutation first.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_train = math.ceil(train_fraction * n)
    if mode == "chronological":
        order = np.arange(n)
    elif mode == "shuffled":
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    if n_train >= n:
        raise ValueError("split leaves no test rows")
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])
