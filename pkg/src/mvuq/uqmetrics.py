"""Scoring of predictive distributions and the cross-validated harness.

Conventions, recorded in every emitted report:
* NLL is the constant-free Gaussian form (y-mu)^2/(2 var) + log(var)/2, so it
  can be negative; sample-based predictives are Gaussian moment-matched first.
* Intervals are central (equal-tailed) and closed at both ends; the sample
  path uses type-7 (linear interpolation) empirical quantiles.
* CRPS uses the Gaussian closed form
      sigma * [ z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ],  z = (y-mu)/sigma,
  and for samples the energy form mean|X - y| - mean|X - X'|/2 computed
  exactly from sorted draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .distributions import PredictiveDistribution
from .errors import LengthMismatch, TooFewSamples

MIN_INTERVAL_SAMPLES = 20
NLL_CONVENTION = "gaussian, no 0.5*log(2*pi) constant; samples moment-matched"


@dataclass(frozen=True)
class IntervalReport:
    alpha: float
    mean_length: float
    coverage: float
    n: int


def interval(dist: PredictiveDistribution, alpha: float = 0.95) -> tuple[float, float]:
    """Central interval at nominal level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if dist.kind == "gaussian":
        z = float(ndtri((1.0 + alpha) / 2.0))
        sd = float(np.sqrt(dist.var))
        return (dist.mu - z * sd, dist.mu + z * sd)
    samples = dist.samples
    if samples is None or samples.size < MIN_INTERVAL_SAMPLES:
        raise TooFewSamples(
            f"need >= {MIN_INTERVAL_SAMPLES} draws for empirical intervals")
    lo, hi = np.quantile(samples, [(1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0],
                         method="linear")
    return (float(lo), float(hi))


def coverage_and_length(dists: list[PredictiveDistribution], y_true,
                        alpha: float = 0.95) -> IntervalReport:
    """Empirical coverage (closed intervals) and mean interval length."""
    y = np.asarray(y_true, dtype=np.float64).ravel()
    if len(dists) != y.size:
        raise LengthMismatch(f"{len(dists)} distributions vs {y.size} observations")
    covered = 0
    total_len = 0.0
    for dist, obs in zip(dists, y):
        lo, hi = interval(dist, alpha)
        total_len += hi - lo
        if lo <= obs <= hi:
            covered += 1
    n = y.size
    return IntervalReport(alpha=float(alpha), mean_length=total_len / n,
                          coverage=covered / n, n=int(n))


def _moments(dist: PredictiveDistribution) -> tuple[float, float]:
    if dist.kind == "gaussian":
        return dist.mu, dist.var
    samples = dist.samples
    if samples.size < 2:
        raise TooFewSamples("need >= 2 draws to moment-match")
    return float(samples.mean()), float(samples.var(ddof=1))


def eval_nll(dists: list[PredictiveDistribution], y_true) -> float:
    """Mean constant-free Gaussian NLL; sample predictives moment-matched."""
    y = np.asarray(y_true, dtype=np.float64).ravel()
    if len(dists) != y.size:
        raise LengthMismatch(f"{len(dists)} distributions vs {y.size} observations")
    total = 0.0
    for dist, obs in zip(dists, y):
        mu, var = _moments(dist)
        var = max(var, 1e-300)
        total += (obs - mu) ** 2 / (2.0 * var) + 0.5 * np.log(var)
    return float(total / y.size)


_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def crps_gaussian(mu: float, sigma: float, y: float) -> float:
    """Closed-form CRPS of N(mu, sigma^2) against observation y."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return abs(y - mu)
    z = (y - mu) / sigma
    phi = np.exp(-0.5 * z * z) * _INV_SQRT_2PI
    return float(sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - _INV_SQRT_PI))


def crps_samples(samples: np.ndarray, y: float) -> float:
    """Energy-form CRPS mean|X-y| - mean|X-X'|/2, exact in O(m log m)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    m = x.size
    if m < 2:
        raise TooFewSamples("need >= 2 draws for sample-based CRPS")
    term1 = float(np.mean(np.abs(x - y)))
    k = np.arange(m, dtype=np.float64)
    pair_sum = float(np.sum(x * (2.0 * k - m + 1.0)))  # sum_{i<j} (x_(j) - x_(i))
    return term1 - pair_sum / (m * m)


def crps(dist: PredictiveDistribution, y: float) -> float:
    if dist.kind == "gaussian":
        return crps_gaussian(dist.mu, float(np.sqrt(dist.var)), y)
    return crps_samples(dist.samples, y)


def mean_crps(dists: list[PredictiveDistribution], y_true) -> float:
    y = np.asarray(y_true, dtype=np.float64).ravel()
    if len(dists) != y.size:
        raise LengthMismatch(f"{len(dists)} distributions vs {y.size} observations")
    return float(np.mean([crps(d, obs) for d, obs in zip(dists, y)]))


# --- evaluation harness ------------------------------------------------------

_POINT_ONLY = {"mean", "ridge_cv"}
KNOWN_MODELS = ("mean", "ridge_cv", "hetero", "blr_conjugate", "blr_mcmc")


@dataclass
class HarnessConfig:
    """K-fold evaluation over feature sets and model kinds.

    ``feature_sets`` maps a name (view name or "fused") to a FeatureMatrix;
    all sets must share the row manifest with ``targets``.
    """

    feature_sets: dict
    targets: np.ndarray
    models: tuple[str, ...] = ("mean", "ridge_cv")
    folds: int = 5
    seed: int = 0
    alpha: float = 0.95
    clamp_01: bool = False
    blr_c: float = 1.0
    blr_prior: str = "half_t_shrinkage"
    blr_chains: int = 4
    blr_draws: int = 1500
    blr_warmup: int = 500
    hetero_lr: float = 1e-2
    hetero_epochs: int = 2000


def _fit_and_predict(kind: str, x_train, y_train, x_test, cfg: HarnessConfig,
                     fold_seed: int):
    """Returns (point_predictions, predictive_distributions_or_None)."""
    from . import bayes, hetero, regress

    if kind == "mean":
        model = regress.mean_baseline(y_train)
        return model.predict(x_test), None
    if kind == "ridge_cv":
        k_inner = min(cfg.folds, max(2, x_train.shape[0] // 2))
        model, _ = regress.fit_ridge_cv(x_train, y_train, k=k_inner, seed=fold_seed)
        return regress.predict(model, x_test), None
    if kind == "hetero":
        model = hetero.fit_hetero(x_train, y_train, lr=cfg.hetero_lr,
                                  epochs=cfg.hetero_epochs, seed=fold_seed)
        dists = hetero.predict_hetero(model, x_test)
        return np.array([d.mu for d in dists]), dists
    if kind == "blr_conjugate":
        # standardize so the c-scale prior is unit-meaningful (the MCMC path
        # standardizes internally)
        means = x_train.mean(axis=0)
        sds = np.where(x_train.std(axis=0) < 1e-12, 1.0, x_train.std(axis=0))
        xs_train = (x_train - means) / sds
        xs_test = (x_test - means) / sds
        sigma2 = bayes.estimate_sigma2(xs_train, y_train)
        post = bayes.fit_blr_conjugate(xs_train, y_train, c=cfg.blr_c, sigma2=sigma2)
        dists = bayes.predict_blr(post, xs_test)
        return np.array([d.mu for d in dists]), dists
    if kind == "blr_mcmc":
        prior = bayes.BlrPriorConfig(kind=cfg.blr_prior, c=cfg.blr_c)
        draws = bayes.fit_blr_mcmc(x_train, y_train, prior=prior, chains=cfg.blr_chains,
                                   draws=cfg.blr_draws, warmup=cfg.blr_warmup,
                                   seed=fold_seed, check_rhat=False)
        dists = bayes.predict_blr(draws, x_test, seed=fold_seed)
        return np.array([d.mu for d in dists]), dists
    raise ValueError(f"unknown model {kind!r}; known: {KNOWN_MODELS}")


def evaluate_pipeline(cfg: HarnessConfig) -> dict:
    """Shared-fold K-fold CV for every (feature set, model); Table-style rows.

    Point rows report per-fold MAE and MAE +/- SE; probabilistic models add
    interval length, coverage, NLL, and CRPS pooled over held-out points.
    """
    from .regress import kfold_indices

    y = np.asarray(cfg.targets, dtype=np.float64).ravel()
    n = y.size
    for name, fm in cfg.feature_sets.items():
        if fm.n != n:
            raise LengthMismatch(f"feature set {name!r} has {fm.n} rows for {n} targets")
    for kind in cfg.models:
        if kind not in KNOWN_MODELS:
            raise ValueError(f"unknown model {kind!r}; known: {KNOWN_MODELS}")
    folds = kfold_indices(n, cfg.folds, cfg.seed)

    rows = {}
    for set_name, fm in sorted(cfg.feature_sets.items()):
        x = fm.values
        for kind in cfg.models:
            fold_mae = []
            pooled: list[PredictiveDistribution] | None = (
                [] if kind not in _POINT_ONLY else None)
            pooled_y = []
            for fold_i, test_idx in enumerate(folds):
                mask = np.ones(n, dtype=bool)
                mask[test_idx] = False
                pred, dists = _fit_and_predict(kind, x[mask], y[mask], x[test_idx],
                                               cfg, fold_seed=cfg.seed + fold_i)
                if cfg.clamp_01:
                    pred = np.clip(pred, 0.0, 1.0)
                fold_mae.append(float(np.mean(np.abs(pred - y[test_idx]))))
                if pooled is not None and dists is not None:
                    pooled.extend(dists)
                    pooled_y.extend(y[test_idx].tolist())
            row = {
                "fold_mae": fold_mae,
                "mae_mean": float(np.mean(fold_mae)),
                "mae_se": float(np.std(fold_mae, ddof=1) / np.sqrt(cfg.folds)),
            }
            if pooled:
                rep = coverage_and_length(pooled, pooled_y, cfg.alpha)
                row.update({
                    "interval_length": rep.mean_length,
                    "coverage": rep.coverage,
                    "nll": eval_nll(pooled, pooled_y),
                    "crps": mean_crps(pooled, pooled_y),
                })
            rows[f"{set_name}/{kind}"] = row

    return {
        "schema": "uqreport/1",
        "alpha": cfg.alpha,
        "folds": cfg.folds,
        "seed": cfg.seed,
        "n": int(n),
        "clamp_01": cfg.clamp_01,
        "nll_convention": NLL_CONVENTION,
        "rows": rows,
    }


def report_csv(report: dict) -> str:
    """Flat CSV mirror of the uncertainty columns."""
    lines = ["row,mae_mean,mae_se,interval_length,coverage,nll,crps"]
    for key in sorted(report["rows"]):
        row = report["rows"][key]
        cells = [key, f"{row['mae_mean']:.6f}", f"{row['mae_se']:.6f}"]
        for col in ("interval_length", "coverage", "nll", "crps"):
            cells.append(f"{row[col]:.6f}" if col in row else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
