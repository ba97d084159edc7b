"""Weighted linear surrogate, variable importance, and local fidelity metrics."""

from dataclasses import dataclass, field

import numpy as np

from vaelime import linalg, sampler
from vaelime.errors import DegenerateSystem, DimensionMismatch

METHODS = ("vae-lime", "lime")
VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class LinearSurrogate:
    intercept: float
    coefficients: np.ndarray
    fit_lambda: float
    condition_hint: float = float("nan")

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.coefficients + self.intercept


@dataclass(frozen=True)
class FidelityReport:
    local_mse: float
    r2: float
    abs_error_at_x: float

    def as_dict(self):
        return {"local_mse": self.local_mse, "r2": self.r2, "abs_error_at_x": self.abs_error_at_x}


def fit_surrogate(samples, outputs, weights, lam=1.0):
    """Weighted ridge fit in original feature units.

    The coefficients are the variable importances.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    if n < d + 2:
        raise DegenerateSystem(f"need at least {d + 2} samples for {d} features, got {n}")
    design = np.hstack([np.ones((n, 1)), samples])
    try:
        sol = linalg.solve_wls(design, outputs, weights, lam)
    except DegenerateSystem as exc:
        raise DegenerateSystem(f"surrogate fit on {n} samples x {d} features failed: {exc}") from exc
    return LinearSurrogate(
        intercept=float(sol.beta[0]),
        coefficients=sol.beta[1:].copy(),
        fit_lambda=sol.ridge,
        condition_hint=sol.condition_hint,
    )


def r2_score(y, y_hat):
    """Unweighted R^2 with the degenerate rule for (near-)constant targets."""
    y = np.asarray(y, dtype=float)
    resid = y - np.asarray(y_hat, dtype=float)
    ss_res = float(np.sum(resid**2))
    if np.var(y) < VARIANCE_TOL:
        return 1.0 if ss_res / len(y) < VARIANCE_TOL else 0.0
    return 1.0 - ss_res / float(np.sum((y - y.mean()) ** 2))


def fidelity(surrogate, blackbox, samples, x_test, outputs=None):
    """Local MSE and R^2 over the samples, plus the absolute error at ``x_test``.

    ``outputs`` may pass precomputed black-box predictions for ``samples``.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    y = blackbox.predict(samples) if outputs is None else np.asarray(outputs, dtype=float)
    g = surrogate.predict(samples)
    local_mse = float(np.mean((g - y) ** 2))
    at_x = abs(float(surrogate.predict(x_test)) - float(blackbox.predict(x_test)))
    return FidelityReport(local_mse, r2_score(y, g), at_x)


def rank_importance(surrogate, feature_names, k=10):
    """Top ``min(k, d)`` (name, coefficient) pairs by absolute value, ties by index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    coef = np.asarray(surrogate.coefficients)
    if len(feature_names) != len(coef):
        raise DimensionMismatch("one feature name per coefficient required")
    order = sorted(range(len(coef)), key=lambda j: (-abs(coef[j]), j))
    return [(feature_names[j], float(coef[j])) for j in order[:k]]


@dataclass
class Explanation:
    method: str
    instance_id: int
    surrogate: LinearSurrogate
    top_k: list
    weights_summary: dict
    fidelity: FidelityReport
    feature_names: tuple
    standardized_coefficients: np.ndarray
    sample_set: sampler.WeightedSampleSet = field(repr=False)

    def to_dict(self):
        s = self.sample_set
        return {
            "method": self.method,
            "instance_id": self.instance_id,
            "x_test": s.x_test.tolist(),
            "intercept": self.surrogate.intercept,
            "coefficients": dict(zip(self.feature_names, self.surrogate.coefficients.tolist())),
            "standardized_coefficients": dict(
                zip(self.feature_names, self.standardized_coefficients.tolist())
            ),
            "top_k": [{"feature": name, "coefficient": c} for name, c in self.top_k],
            "fit_lambda": self.surrogate.fit_lambda,
            "fidelity": self.fidelity.as_dict(),
            "weights_summary": self.weights_summary,
            "scatter": {"weights": s.weights.tolist(), "predictions": s.outputs.tolist()},
        }


def explain_instance(method, blackbox, x_test, feature_names, feature_stds, model=None,
                     config=None, instance_id=0, top_k=10):
    """Run one method end to end for one test instance.

    ``feature_stds`` are the training stds: LIME perturbs with them and the
    standardized coefficient view multiplies by them.
    """
    config = config or sampler.ExplainConfig()
    feature_stds = np.asarray(feature_stds, dtype=float)
    if method == "vae-lime":
        if model is None:
            raise ValueError("vae-lime needs a trained VAE model")
        sset = sampler.build_vae_lime_set(model, blackbox, x_test, config)
    elif method == "lime":
        sset = sampler.build_lime_set(blackbox, x_test, feature_stds, config)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    sur = fit_surrogate(sset.samples, sset.outputs, sset.weights, config.ridge_lambda)
    w = sset.weights
    return Explanation(
        method=method,
        instance_id=int(instance_id),
        surrogate=sur,
        top_k=rank_importance(sur, list(feature_names), top_k),
        weights_summary={"min": float(w.min()), "mean": float(w.mean()), "max": float(w.max())},
        fidelity=fidelity(sur, blackbox, sset.samples, sset.x_test, outputs=sset.outputs),
        feature_names=tuple(feature_names),
        standardized_coefficients=sur.coefficients * feature_stds,
        sample_set=sset,
    )
