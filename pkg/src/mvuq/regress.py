"""Point prediction: ridge regression with cross-validated penalty selection.

The solver works on column-centered data, solving
    (Xc' Xc + alpha I) w = Xc' yc
with an unpenalized intercept b = mean(y) - mean(x)' w. Optional column
scaling is recorded on the model and replayed at prediction time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyTraining, SingularSystem

DEFAULT_ALPHA_GRID = tuple(float(a) for a in np.logspace(-4.0, 4.0, 17))


@dataclass
class RidgeModel:
    w: np.ndarray
    b: float
    alpha: float
    column_means: np.ndarray
    column_sds: np.ndarray  # all ones unless standardize=True at fit time
    target_mean: float

    def to_json(self) -> str:
        return json.dumps({
            "w": self.w.tolist(),
            "b": self.b,
            "alpha": self.alpha,
            "column_means": self.column_means.tolist(),
            "column_sds": self.column_sds.tolist(),
            "target_mean": self.target_mean,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RidgeModel":
        obj = json.loads(text)
        return cls(w=np.asarray(obj["w"], dtype=np.float64), b=float(obj["b"]),
                   alpha=float(obj["alpha"]),
                   column_means=np.asarray(obj["column_means"], dtype=np.float64),
                   column_sds=np.asarray(obj["column_sds"], dtype=np.float64),
                   target_mean=float(obj["target_mean"]))


@dataclass
class CvReport:
    folds: int
    fold_mae: list[float]
    mae_mean: float
    mae_se: float
    chosen_alpha: float
    grid: list[float] = field(default_factory=list)
    grid_mean_mae: list[float] = field(default_factory=list)


def _as_xy(features, y) -> tuple[np.ndarray, np.ndarray]:
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2:
        raise ValueError(f"feature array must be 2-D, got {x.shape}")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} rows vs {y.shape[0]} targets")
    return x, y


def fit_ridge(features, y, alpha: float = 1.0, standardize: bool = False) -> RidgeModel:
    """Solve the centered normal equations; the intercept is unpenalized."""
    x, y = _as_xy(features, y)
    n, d = x.shape
    if n < 2:
        raise EmptyTraining("ridge needs at least 2 observations")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    means = x.mean(axis=0)
    if standardize:
        sds = x.std(axis=0, ddof=0)
        sds = np.where(sds < 1e-12, 1.0, sds)
    else:
        sds = np.ones(d)
    xc = (x - means) / sds
    ybar = float(y.mean())
    yc = y - ybar
    gram = xc.T @ xc
    gram[np.diag_indices(d)] += alpha
    rhs = xc.T @ yc
    if alpha == 0.0 and np.linalg.matrix_rank(xc) < d:
        raise SingularSystem("alpha=0 with rank-deficient centered design")
    w_scaled = np.linalg.solve(gram, rhs)
    # report in the uncentered parameterization: yhat = F w + b
    w = w_scaled / sds
    b = ybar - float(means @ w)
    return RidgeModel(w=w, b=b, alpha=float(alpha), column_means=means,
                      column_sds=sds, target_mean=ybar)


def predict(model: RidgeModel, features) -> np.ndarray:
    """yhat = F w + b (weights already absorb the stored standardization)."""
    x = features.values if hasattr(features, "values") else np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w.shape[0]:
        raise DimensionMismatch(
            f"feature dim {x.shape[1] if x.ndim == 2 else x.shape} vs model dim {model.w.shape[0]}")
    return x @ model.w + model.b


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle, then contiguous blocks: the package's fold contract."""
    if k < 2:
        raise ValueError("K must be >= 2")
    if k > n:
        raise ValueError(f"K={k} exceeds n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(block) for block in np.array_split(perm, k)]


def fit_ridge_cv(features, y, alpha_grid=DEFAULT_ALPHA_GRID, k: int = 5,
                 seed: int = 0, standardize: bool = False) -> tuple[RidgeModel, CvReport]:
    """Pick alpha by mean fold MAE (ties to the smaller alpha), refit on all rows."""
    x, y = _as_xy(features, y)
    n = x.shape[0]
    grid = sorted(float(a) for a in alpha_grid)
    if not grid:
        raise ValueError("alpha grid is empty")
    folds = kfold_indices(n, k, seed)
    mean_maes = []
    fold_maes_per_alpha = []
    for alpha in grid:
        maes = []
        for test_idx in folds:
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            model = fit_ridge(x[mask], y[mask], alpha=alpha, standardize=standardize)
            pred = predict(model, x[test_idx])
            maes.append(float(np.mean(np.abs(pred - y[test_idx]))))
        fold_maes_per_alpha.append(maes)
        mean_maes.append(float(np.mean(maes)))
    best = int(np.argmin(mean_maes))  # argmin takes the first == smallest alpha on ties
    chosen = grid[best]
    fold_mae = fold_maes_per_alpha[best]
    model = fit_ridge(x, y, alpha=chosen, standardize=standardize)
    se = float(np.std(fold_mae, ddof=1) / np.sqrt(k))
    report = CvReport(folds=k, fold_mae=fold_mae, mae_mean=float(np.mean(fold_mae)),
                      mae_se=se, chosen_alpha=chosen, grid=grid, grid_mean_mae=mean_maes)
    return model, report


@dataclass
class MeanBaseline:
    prediction: float

    def predict(self, features) -> np.ndarray:
        x = features.values if hasattr(features, "values") else np.asarray(features)
        return np.full(x.shape[0], self.prediction)


def mean_baseline(y_train) -> MeanBaseline:
    """Constant predictor at the training-target mean."""
    y = np.asarray(y_train, dtype=np.float64).ravel()
    if y.size == 0:
        raise EmptyTraining("mean baseline needs at least one target")
    return MeanBaseline(prediction=float(y.mean()))


def save_model(model: RidgeModel, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(model.to_json())


def load_model(path: str | os.PathLike) -> RidgeModel:
    with open(path) as fh:
        return RidgeModel.from_json(fh.read())
