"""Kriged heatmap grids from scattered predictions and uncertainties.

Ordinary kriging with an exponential variogram fitted to the empirical
semivariogram by weighted least squares; distances are haversine km. Each
grid node is solved against its 32 nearest observations with the
unbiasedness constraint (weights sum to 1).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from . import _kernels
from .containers import write_btsr
from .errors import DegenerateFieldWarning, SingularKrigingSystem, TooFewPoints

NEIGHBORHOOD = 32


@dataclass(frozen=True)
class ScatterField:
    """Scattered (lon, lat) observations of one value kind."""

    points: np.ndarray  # (n, 2) lon, lat degrees
    values: np.ndarray  # (n,)
    kind: str = "target"  # target | posterior_mean | posterior_variance

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        vals = np.asarray(self.values, dtype=np.float64).ravel()
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values disagree in length")
        if pts.shape[0] < 1:
            raise ValueError("need at least one point")
        if not (np.isfinite(pts).all() and np.isfinite(vals).all()):
            raise ValueError("coordinates and values must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def deduplicated(self) -> "ScatterField":
        """Average values at duplicate coordinates (warning when conflicting)."""
        uniq, inverse = np.unique(self.points, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        if uniq.shape[0] == self.points.shape[0]:
            return self
        sums = np.zeros(uniq.shape[0])
        counts = np.zeros(uniq.shape[0])
        np.add.at(sums, inverse, self.values)
        np.add.at(counts, inverse, 1.0)
        merged = sums / counts
        if np.any(np.abs(merged[inverse] - self.values) > 1e-12):
            warnings.warn("duplicate coordinates with conflicting values averaged",
                          UserWarning)
        return ScatterField(points=uniq, values=merged, kind=self.kind)


@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram gamma(h) = nugget + (sill-nugget)(1-e^{-h/range})."""

    nugget: float
    sill: float
    range_km: float
    kind: str = "exponential"

    def __post_init__(self):
        if self.nugget < 0 or self.sill < 0 or self.range_km <= 0:
            raise ValueError("nugget >= 0, sill >= 0, range > 0 required")
        if self.sill < self.nugget:
            raise ValueError("sill must be >= nugget")

    @property
    def degenerate(self) -> bool:
        return self.sill <= 1e-300

    def gamma(self, h) -> np.ndarray:
        """Semivariance at distance h km; gamma(0) = 0 exactly."""
        h = np.asarray(h, dtype=np.float64)
        g = self.nugget + (self.sill - self.nugget) * (1.0 - np.exp(-h / self.range_km))
        return np.where(h <= 0.0, 0.0, g)


def empirical_semivariogram(field: ScatterField, n_bins: int = 12
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bin-averaged semivariance: returns (lag_km, gamma, pair_counts)."""
    pts = field.points
    vals = field.values
    n = pts.shape[0]
    iu = np.triu_indices(n, k=1)
    d = _kernels.haversine_km(pts[iu[0], 0], pts[iu[0], 1], pts[iu[1], 0], pts[iu[1], 1])
    g = 0.5 * (vals[iu[0]] - vals[iu[1]]) ** 2
    dmax = float(d.max())
    if dmax <= 0:
        return np.array([0.0]), np.array([float(g.mean())]), np.array([d.size])
    edges = np.linspace(0.0, dmax * (1 + 1e-9), n_bins + 1)
    which = np.digitize(d, edges) - 1
    lags, gammas, counts = [], [], []
    for b in range(n_bins):
        mask = which == b
        if mask.any():
            lags.append(float(d[mask].mean()))
            gammas.append(float(g[mask].mean()))
            counts.append(int(mask.sum()))
    return np.array(lags), np.array(gammas), np.array(counts)


def fit_variogram(field: ScatterField, n_bins: int = 12) -> VariogramModel:
    """Weighted least-squares fit of the exponential model (pair-count weights)."""
    field = field.deduplicated()
    if field.points.shape[0] < 10:
        raise TooFewPoints(f"variogram fit needs >= 10 points, got {field.points.shape[0]}")
    var = float(np.var(field.values))
    scale = max(float(np.mean(field.values**2)), 1e-300)
    if var <= 1e-12 * scale:
        warnings.warn("field has (near-)zero variance; returning degenerate "
                      "nugget-only model", DegenerateFieldWarning)
        return VariogramModel(nugget=0.0, sill=0.0, range_km=1.0)

    lags, gammas, counts = empirical_semivariogram(field, n_bins=n_bins)
    wts = np.sqrt(counts.astype(np.float64))
    dmax = float(lags.max())

    def residuals(params):
        nugget, psill, rng = params
        model = nugget + psill * (1.0 - np.exp(-lags / rng))
        return wts * (model - gammas)

    g_hi = float(gammas.max())
    x0 = np.array([min(gammas[0], g_hi) * 0.1, max(var, 1e-12), max(dmax / 3.0, 1e-6)])
    bounds = ([0.0, 1e-12, 1e-6], [g_hi + var, 10.0 * (g_hi + var), 10.0 * dmax])
    sol = least_squares(residuals, x0, bounds=bounds)
    nugget, psill, rng = sol.x
    return VariogramModel(nugget=float(nugget), sill=float(nugget + psill),
                          range_km=float(rng))


@dataclass(frozen=True)
class KrigedGrid:
    lons: np.ndarray        # (nx,) node longitudes
    lats: np.ndarray        # (ny,) node latitudes
    estimate: np.ndarray    # (ny, nx)
    variance: np.ndarray    # (ny, nx)


def krige(field: ScatterField, model: VariogramModel,
          bbox: tuple[float, float, float, float], res_km: float = 1.0,
          neighborhood: int = NEIGHBORHOOD) -> KrigedGrid:
    """Ordinary kriging of the field over a lon/lat grid.

    bbox is (lon0, lat0, lon1, lat1); node spacing approximates res_km on the
    ground. Returns node estimates and kriging variances.
    """
    field = field.deduplicated()
    lon0, lat0, lon1, lat1 = bbox
    lon0, lon1 = min(lon0, lon1), max(lon0, lon1)
    lat0, lat1 = min(lat0, lat1), max(lat0, lat1)
    mid_lat = np.radians((lat0 + lat1) / 2.0)
    km_per_deg_lat = np.pi * _kernels._EARTH_RADIUS_KM / 180.0
    km_per_deg_lon = km_per_deg_lat * max(np.cos(mid_lat), 1e-6)
    nx = max(2, int(np.ceil((lon1 - lon0) * km_per_deg_lon / res_km)) + 1)
    ny = max(2, int(np.ceil((lat1 - lat0) * km_per_deg_lat / res_km)) + 1)
    lons = np.linspace(lon0, lon1, nx)
    lats = np.linspace(lat0, lat1, ny)

    n = field.points.shape[0]
    if model.degenerate or n == 1:
        const = float(field.values.mean())
        est = np.full((ny, nx), const)
        if n == 1 and not model.degenerate:
            glon, glat = np.meshgrid(lons, lats)
            d = _kernels.haversine_km(glon.ravel(), glat.ravel(),
                                      field.points[0, 0], field.points[0, 1])
            var = (2.0 * model.gamma(d)).reshape(ny, nx)
        else:
            var = np.zeros((ny, nx))
        return KrigedGrid(lons=lons, lats=lats, estimate=est, variance=var)

    k = min(neighborhood, n)
    # chord-distance KD-tree on the unit sphere ranks identically to haversine
    def to_xyz(lon, lat):
        lam, phi = np.radians(lon), np.radians(lat)
        return np.column_stack([np.cos(phi) * np.cos(lam),
                                np.cos(phi) * np.sin(lam),
                                np.sin(phi)])

    tree = cKDTree(to_xyz(field.points[:, 0], field.points[:, 1]))
    glon, glat = np.meshgrid(lons, lats)
    nodes = np.column_stack([glon.ravel(), glat.ravel()])
    _, neighbor_idx = tree.query(to_xyz(nodes[:, 0], nodes[:, 1]), k=k)
    neighbor_idx = np.atleast_2d(neighbor_idx)
    if neighbor_idx.shape[0] == 1 and nodes.shape[0] > 1:
        neighbor_idx = neighbor_idx.T

    points_rad = np.radians(field.points)
    nodes_rad = np.radians(nodes)
    est, var, wsum, failed = _kernels.ok_solve(
        points_rad, field.values, nodes_rad, neighbor_idx,
        model.nugget, model.sill, model.range_km)
    if failed.any():
        raise SingularKrigingSystem(
            f"{int(failed.sum())} node systems singular after jitter")
    return KrigedGrid(lons=lons, lats=lats, estimate=est.reshape(ny, nx),
                      variance=var.reshape(ny, nx))


def kriging_weights(field: ScatterField, model: VariogramModel,
                    node: tuple[float, float]) -> tuple[np.ndarray, float]:
    """Weights and Lagrange multiplier of the full OK system at one node."""
    field = field.deduplicated()
    pts = field.points
    n = pts.shape[0]
    iu_x, iu_y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    dmat = _kernels.haversine_km(pts[iu_x.ravel(), 0], pts[iu_x.ravel(), 1],
                                 pts[iu_y.ravel(), 0], pts[iu_y.ravel(), 1]).reshape(n, n)
    d0 = _kernels.haversine_km(pts[:, 0], pts[:, 1], node[0], node[1])
    a = np.zeros((n + 1, n + 1))
    a[:n, :n] = model.gamma(dmat)
    np.fill_diagonal(a[:n, :n], 0.0)
    a[n, :] = 1.0
    a[:, n] = 1.0
    a[n, n] = 0.0
    b = np.append(model.gamma(d0), 1.0)
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        a[:n, :n][np.diag_indices(n)] += 1e-10
        try:
            sol = np.linalg.solve(a, b)
        except np.linalg.LinAlgError as exc:
            raise SingularKrigingSystem("full kriging system singular after jitter") from exc
    return sol[:n], float(sol[n])


# --- rendering -------------------------------------------------------------

# fixed perceptually-uniform ramp (17 anchors, linearly interpolated)
_RAMP = np.array([
    (0.267004, 0.004874, 0.329415),
    (0.282327, 0.094955, 0.417331),
    (0.278826, 0.175490, 0.483397),
    (0.258965, 0.251537, 0.524736),
    (0.229739, 0.322361, 0.545706),
    (0.199430, 0.387607, 0.554642),
    (0.172719, 0.448791, 0.557885),
    (0.149039, 0.508051, 0.557250),
    (0.127568, 0.566949, 0.550556),
    (0.120638, 0.625828, 0.533488),
    (0.157851, 0.683765, 0.501686),
    (0.246070, 0.738910, 0.452024),
    (0.369214, 0.788888, 0.382914),
    (0.515992, 0.831158, 0.294279),
    (0.678489, 0.863742, 0.189503),
    (0.845561, 0.887322, 0.099702),
    (0.993248, 0.906157, 0.143936),
])


def colorize(grid: np.ndarray, vmin: float | None = None,
             vmax: float | None = None) -> tuple[np.ndarray, float, float]:
    """Map a grid to 8-bit RGB via the fixed ramp; returns (rgb, vmin, vmax)."""
    grid = np.asarray(grid, dtype=np.float64)
    vmin = float(np.min(grid)) if vmin is None else float(vmin)
    vmax = float(np.max(grid)) if vmax is None else float(vmax)
    span = vmax - vmin if vmax > vmin else 1.0
    t = np.clip((grid - vmin) / span, 0.0, 1.0)
    anchors = np.linspace(0.0, 1.0, _RAMP.shape[0])
    rgb = np.stack([np.interp(t, anchors, _RAMP[:, c]) for c in range(3)], axis=-1)
    return (np.clip(np.rint(rgb * 255.0), 0, 255)).astype(np.uint8), vmin, vmax


def save_grid(grid: KrigedGrid, btsr_path: str | os.PathLike,
              png_path: str | os.PathLike | None = None,
              legend_path: str | os.PathLike | None = None) -> None:
    """Write grid layers as BTSR (estimate, variance) and optionally a PNG."""
    write_btsr(btsr_path, np.stack([grid.estimate, grid.variance]))
    if png_path is not None:
        rgb, vmin, vmax = colorize(grid.estimate)
        Image.fromarray(rgb[::-1], mode="RGB").save(png_path, format="PNG")
        if legend_path is None:
            legend_path = os.fspath(png_path) + ".legend.json"
        with open(legend_path, "w") as fh:
            json.dump({"vmin": vmin, "vmax": vmax, "ramp": "viridis-17"},
                      fh, indent=2, sort_keys=True)


def markers_geojson(field: ScatterField) -> dict:
    """GeoJSON overlay of the training points (the blue-marker layer)."""
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [float(lon), float(lat)]},
                "properties": {"value": float(v), "kind": field.kind},
            }
            for (lon, lat), v in zip(field.points, field.values)
        ],
    }
