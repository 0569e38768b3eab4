"""Per-view feature extraction, linear-head fine-tuning, and view fusion.

The featurizer is a random-convolution encoder in the random-kitchen-sinks
style: fixed Gaussian filters, rectified responses pooled over patches. It
stands in for a heavyweight vision backbone while keeping the same dataflow
(view image -> feature row -> optional head -> fused representation).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .containers import read_fmx, write_fmx
from .errors import Diverged, ImageTooSmall, ManifestMismatch, RowCountMismatch
from .raster import ViewImage


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are locations, columns are per-view or fused features."""

    values: np.ndarray              # (n, d) float64, finite
    provenance: str                 # "random_conv" | "imported"
    view_name: str                  # view name or "fused"
    location_ids: tuple[str, ...]   # row manifest, in order
    column_blocks: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] == 0:
            raise ValueError(f"feature matrix must be (n, d>0), got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("feature matrix contains non-finite entries")
        if len(self.location_ids) != values.shape[0]:
            raise ValueError("manifest length does not match row count")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "location_ids", tuple(str(x) for x in self.location_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


class RandomConvFeaturizer:
    """Seeded random filter bank; output dimension is 2 * n_filters.

    Filters are unit Gaussians scaled by 1/sqrt(3 * patch^2). Biases default
    to zero; given a calibration image, each bias is that filter's response
    to one randomly drawn patch of it.
    """

    def __init__(self, n_filters: int = 512, patch_size: int = 3, seed: int = 0,
                 stride: int | None = None, calibration_image: ViewImage | None = None):
        if n_filters < 1 or patch_size < 1:
            raise ValueError("n_filters and patch_size must be positive")
        self.n_filters = int(n_filters)
        self.patch_size = int(patch_size)
        self.stride = int(stride) if stride is not None else int(patch_size)
        if self.stride < 1:
            raise ValueError("stride must be positive")
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        scale = 1.0 / np.sqrt(3.0 * patch_size * patch_size)
        self.filters = rng.standard_normal((self.n_filters, 3 * patch_size * patch_size)) * scale
        if calibration_image is not None:
            self.biases = self._calibrate_biases(calibration_image, rng)
        else:
            self.biases = np.zeros(self.n_filters)
        self.filters.setflags(write=False)
        self.biases.setflags(write=False)

    @property
    def d(self) -> int:
        return 2 * self.n_filters

    def _calibrate_biases(self, image: ViewImage, rng: np.random.Generator) -> np.ndarray:
        p = self.patch_size
        c, h, w = image.channels.shape
        if h < p or w < p:
            raise ImageTooSmall(f"calibration image {h}x{w} smaller than patch {p}")
        rows = rng.integers(0, h - p + 1, size=self.n_filters)
        cols = rng.integers(0, w - p + 1, size=self.n_filters)
        biases = np.empty(self.n_filters)
        for k in range(self.n_filters):
            patch = image.channels[:, rows[k]:rows[k] + p, cols[k]:cols[k] + p]
            biases[k] = float(self.filters[k] @ patch.ravel())
        return biases


def extract_features(view: ViewImage, featurizer: RandomConvFeaturizer) -> np.ndarray:
    """One feature row: per filter, mean relu(r - b) and mean relu(b - r)."""
    p = featurizer.patch_size
    if view.height < p or view.width < p:
        raise ImageTooSmall(
            f"image {view.height}x{view.width} smaller than patch size {p}")
    return _kernels.conv_features(view.channels, featurizer.filters,
                                  featurizer.biases, p, featurizer.stride)


def build_feature_matrix(views: list[ViewImage], featurizer: RandomConvFeaturizer,
                         location_ids: list[str], view_name: str) -> FeatureMatrix:
    """Featurize one view image per location into a matrix."""
    if len(views) != len(location_ids):
        raise ValueError("one view image per location id required")
    rows = np.vstack([extract_features(v, featurizer) for v in views])
    return FeatureMatrix(rows, provenance="random_conv", view_name=view_name,
                         location_ids=tuple(location_ids))


# --- interchange --------------------------------------------------------

def export_features(fm: FeatureMatrix, path: str | os.PathLike,
                    extra_sidecar: dict | None = None) -> None:
    write_fmx(path, fm.values, list(fm.location_ids), fm.view_name,
              extra_sidecar=extra_sidecar)


def import_features(path: str | os.PathLike) -> FeatureMatrix:
    """Read an FMX file; shape, checksum, and finiteness are validated."""
    values, location_ids, view_name, _ = read_fmx(path)
    return FeatureMatrix(values, provenance="imported", view_name=view_name,
                         location_ids=tuple(location_ids))


# --- linear head -------------------------------------------------------------

@dataclass
class LinearHead:
    """Linear map from features to auxiliary targets, with its loss history."""

    weights: np.ndarray  # (d, m)
    bias: np.ndarray     # (m,)
    loss_kind: str       # "L1" | "L2"
    loss_history: list[float] = field(default_factory=list)


def _head_loss(pred: np.ndarray, targets: np.ndarray, loss_kind: str) -> float:
    resid = pred - targets
    if loss_kind == "L2":
        return float(np.mean(np.sum(resid * resid, axis=1)))
    return float(np.mean(np.sum(np.abs(resid), axis=1)))


def fit_linear_head(features: FeatureMatrix, targets: np.ndarray, loss_kind: str = "L2",
                    lr: float = 1e-3, epochs: int = 200) -> LinearHead:
    """Full-batch gradient descent on mean per-row L1 or L2 loss.

    The L2 objective is (1/N) sum_i ||Z_i W + b - s_i||^2 (squared norm);
    L1 uses the sum of absolute residuals.
    """
    if loss_kind not in ("L1", "L2"):
        raise ValueError(f"loss_kind must be L1 or L2, got {loss_kind!r}")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[0] == 1 and features.n != 1:
        targets = targets.T
    if targets.shape[0] != features.n:
        raise RowCountMismatch(
            f"{features.n} feature rows vs {targets.shape[0]} target rows")
    z = features.values
    n, d = z.shape
    m = targets.shape[1]
    weights = np.zeros((d, m))
    bias = np.zeros(m)
    history: list[float] = []
    increases = 0
    prev = np.inf
    for _ in range(epochs):
        pred = z @ weights + bias
        loss = _head_loss(pred, targets, loss_kind)
        history.append(loss)
        if not np.isfinite(loss):
            raise Diverged(f"linear-head loss became non-finite ({loss})")
        if loss > prev:
            increases += 1
            if increases >= 10:
                raise Diverged("linear-head loss increased for 10 consecutive epochs")
        else:
            increases = 0
        prev = loss
        resid = pred - targets
        if loss_kind == "L2":
            grad_out = 2.0 * resid / n
        else:
            grad_out = np.sign(resid) / n
        weights = weights - lr * (z.T @ grad_out)
        bias = bias - lr * grad_out.sum(axis=0)
    final = _head_loss(z @ weights + bias, targets, loss_kind)
    if not np.isfinite(final):
        raise Diverged("linear-head loss became non-finite")
    history.append(final)
    return LinearHead(weights=weights, bias=bias, loss_kind=loss_kind, loss_history=history)


# --- standardization ("fine-tuned" representation) -----------------------

@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean/sd fitted on training rows; sd floors at tiny."""

    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, fm: FeatureMatrix) -> "ColumnStats":
        means = fm.values.mean(axis=0)
        sds = fm.values.std(axis=0, ddof=0)
        sds = np.where(sds < 1e-12, 1.0, sds)
        return cls(means=means, sds=sds)


def apply_head_residual(fm: FeatureMatrix, head: LinearHead | None = None,
                        stats: ColumnStats | None = None,
                        standardize: bool = True) -> FeatureMatrix:
    """Downstream representation of a feature matrix.

    With a frozen featurizer the head only monitors auxiliary-target fit; the
    representation handed downstream is the features themselves, optionally
    standardized per column. Pass ``stats`` fitted on training rows to
    transform held-out rows without leakage; with ``stats=None`` the stats are
    fitted on ``fm`` itself.
    """
    del head  # training diagnostic only; does not reshape the representation
    if not standardize:
        return fm
    if stats is None:
        stats = ColumnStats.fit(fm)
    values = (fm.values - stats.means) / stats.sds
    return replace(fm, values=values)


# --- fusion --------------------------------------------------------------

def fuse_views(*matrices: FeatureMatrix) -> FeatureMatrix:
    """Column-wise concatenation of per-view matrices into the fused row."""
    if not matrices:
        raise ValueError("need at least one feature matrix")
    first = matrices[0]
    for fm in matrices[1:]:
        if fm.n != first.n:
            raise RowCountMismatch(f"{fm.view_name}: {fm.n} rows vs {first.n}")
        if fm.location_ids != first.location_ids:
            raise ManifestMismatch(
                f"{fm.view_name}: location manifest differs from {first.view_name}")
    if len(matrices) == 1:
        return first
    blocks: dict[str, tuple[int, int]] = {}
    start = 0
    for fm in matrices:
        blocks[fm.view_name] = (start, start + fm.d)
        start += fm.d
    values = np.hstack([fm.values for fm in matrices])
    provenance = first.provenance if all(
        fm.provenance == first.provenance for fm in matrices) else "imported"
    return FeatureMatrix(values, provenance=provenance, view_name="fused",
                         location_ids=first.location_ids, column_blocks=blocks)
