"""Heteroscedastic Gaussian regression.

Two linear heads on standardized features: a mean head mu(x) and a
log-variance head log sigma^2(x) = x' w_s + b_s, trained jointly by
full-batch gradient descent on the Gaussian negative log-likelihood

    NLL_i = (y_i - mu_i)^2 / (2 v_i) + (1/2) log v_i

(the additive (1/2) log 2pi constant is excluded; the evaluation metrics use
the same convention). The model captures input-dependent aleatoric noise
only: there is no epistemic term, so predictions are insensitive to
replicating the training set.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import PredictiveDistribution
from .errors import DimensionMismatch, Diverged, NonPositiveVariance, VarianceCollapseWarning
from .regress import fit_ridge

VAR_FLOOR = 1e-12


@dataclass
class HeteroModel:
    w_mu: np.ndarray
    b_mu: float
    w_s: np.ndarray
    b_s: float
    column_means: np.ndarray
    column_sds: np.ndarray
    train_nll: float = float("nan")
    loss_history: list | None = None  # per-epoch NLL, not serialized

    def to_json(self) -> str:
        return json.dumps({
            "w_mu": self.w_mu.tolist(), "b_mu": self.b_mu,
            "w_s": self.w_s.tolist(), "b_s": self.b_s,
            "column_means": self.column_means.tolist(),
            "column_sds": self.column_sds.tolist(),
            "train_nll": self.train_nll,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HeteroModel":
        o = json.loads(text)
        return cls(w_mu=np.asarray(o["w_mu"]), b_mu=float(o["b_mu"]),
                   w_s=np.asarray(o["w_s"]), b_s=float(o["b_s"]),
                   column_means=np.asarray(o["column_means"]),
                   column_sds=np.asarray(o["column_sds"]),
                   train_nll=float(o["train_nll"]))


def nll(y, mu, var) -> float:
    """Mean Gaussian NLL summand (constant-free convention)."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise NonPositiveVariance("nll requires var > 0")
    terms = (y - mu) ** 2 / (2.0 * var) + 0.5 * np.log(var)
    return float(np.mean(terms))


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=0)
    sds = np.where(sds < 1e-12, 1.0, sds)
    return (x - means) / sds, means, sds


def _heads_nll_grads(xs, y, w_mu, b_mu, w_s, b_s, variance_features):
    n = xs.shape[0]
    mu = xs @ w_mu + b_mu
    logv = xs @ w_s + b_s if variance_features else np.full(n, b_s)
    logv = np.clip(logv, np.log(VAR_FLOOR), 700.0)
    v = np.exp(logv)
    resid = mu - y
    loss = float(np.mean(resid**2 / (2.0 * v) + 0.5 * logv))
    dmu = resid / v                       # d NLL_i / d mu_i
    dlogv = 0.5 * (1.0 - resid**2 / v)    # d NLL_i / d log v_i
    g_wmu = xs.T @ dmu / n
    g_bmu = float(dmu.mean())
    if variance_features:
        g_ws = xs.T @ dlogv / n
    else:
        g_ws = np.zeros_like(w_s)
    g_bs = float(dlogv.mean())
    return loss, g_wmu, g_bmu, g_ws, g_bs, v


def fit_hetero(features, y, lr: float = 1e-2, epochs: int = 2000, seed: int = 0,
               variance_features: bool = True, warm_start: bool = True,
               patience: int = 50) -> HeteroModel:
    """Gradient descent on the heteroscedastic NLL; returns the best epoch.

    Warm start: mean head from an alpha=1 ridge fit, log-variance bias at the
    log of the residual variance. With ``warm_start=False`` heads start at
    zero plus a small seeded perturbation. When ``variance_features=False``
    the log-variance bias is profiled to its closed-form optimum
    (log mean squared residual) after every step.
    """
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} rows vs {y.shape[0]} targets")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    n, d = x.shape
    if n < d:
        warnings.warn(f"n={n} < d={d}: heteroscedastic fit is underdetermined", UserWarning)
    xs, means, sds = _standardize(x)

    if warm_start:
        ridge = fit_ridge(xs, y, alpha=1.0)
        w_mu = ridge.w.copy()
        b_mu = ridge.b
        resid = y - (xs @ w_mu + b_mu)
        # starting at the hard floor puts the first step on the NLL cliff when
        # the warm start interpolates (n < d); keep a scale-aware minimum
        floor = max(1e-3 * float(np.var(y)), 1e-8)
        base_var = max(float(np.mean(resid**2)), floor)
        w_s = np.zeros(d)
        b_s = float(np.log(base_var))
    else:
        rng = np.random.default_rng(seed)
        w_mu = rng.standard_normal(d) * 1e-3
        b_mu = float(y.mean())
        w_s = np.zeros(d)
        b_s = float(np.log(max(np.var(y), VAR_FLOOR)))

    best = (np.inf, w_mu.copy(), b_mu, w_s.copy(), b_s)
    stagnant = 0
    floored = False
    history: list[float] = []
    for _ in range(epochs):
        loss, g_wmu, g_bmu, g_ws, g_bs, v = _heads_nll_grads(
            xs, y, w_mu, b_mu, w_s, b_s, variance_features)
        if not np.isfinite(loss):
            raise Diverged(f"heteroscedastic NLL became non-finite ({loss})")
        history.append(loss)
        if v.min() <= VAR_FLOOR:
            floored = True
        if loss < best[0] - 1e-12:
            best = (loss, w_mu.copy(), b_mu, w_s.copy(), b_s)
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= patience:
                break
        # the NLL surface has a cliff as var -> 0; a norm cap keeps single
        # steps bounded there without touching well-scaled fits
        gnorm = float(np.sqrt(np.sum(g_wmu**2) + g_bmu**2
                              + np.sum(g_ws**2) + g_bs**2))
        if gnorm > 100.0:
            scale_g = 100.0 / gnorm
            g_wmu, g_bmu, g_ws, g_bs = (g_wmu * scale_g, g_bmu * scale_g,
                                        g_ws * scale_g, g_bs * scale_g)
        w_mu = w_mu - lr * g_wmu
        b_mu = b_mu - lr * g_bmu
        if variance_features:
            w_s = w_s - lr * g_ws
            b_s = b_s - lr * g_bs
        else:
            resid = y - (xs @ w_mu + b_mu)
            b_s = float(np.log(max(float(np.mean(resid**2)), VAR_FLOOR)))
    # score the final iterate too
    loss, *_rest, v = _heads_nll_grads(xs, y, w_mu, b_mu, w_s, b_s, variance_features)
    if np.isfinite(loss):
        history.append(loss)
        if loss < best[0] - 1e-12:
            best = (loss, w_mu.copy(), b_mu, w_s.copy(), b_s)
    if floored:
        warnings.warn("predicted variance hit the 1e-12 floor during fitting",
                      VarianceCollapseWarning)
    nll_best, w_mu, b_mu, w_s, b_s = best
    return HeteroModel(w_mu=w_mu, b_mu=b_mu, w_s=w_s, b_s=b_s,
                       column_means=means, column_sds=sds, train_nll=float(nll_best),
                       loss_history=history)


def predict_hetero(model: HeteroModel, features) -> list[PredictiveDistribution]:
    """One Gaussian N(mu(x), sigma^2(x)) per row."""
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w_mu.shape[0]:
        raise DimensionMismatch(
            f"feature dim {x.shape[1] if x.ndim == 2 else x.shape} vs model dim {model.w_mu.shape[0]}")
    xs = (x - model.column_means) / model.column_sds
    mu = xs @ model.w_mu + model.b_mu
    var = np.exp(np.clip(xs @ model.w_s + model.b_s, np.log(VAR_FLOOR), 700.0))
    var = np.maximum(var, VAR_FLOOR)
    return [PredictiveDistribution.gaussian(m, v) for m, v in zip(mu, var)]
