"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

Setting ``MVUQ_NO_NUMBA=1`` forces the numpy path everywhere; otherwise each
kernel dispatches to whichever implementation benchmarks faster on this
workload (see ``benchmarks/bench_kernels.py``): the kriging node loop is a
clear numba win, while the patch-feature kernel is a large matmul that BLAS
already executes faster than scalar jitted loops, so its default is the
numpy path. Both implementations of each kernel are kept and compared in the
benchmark; they agree to float tolerance (summation order differs, so not
bitwise).
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FORCE_NUMPY = os.environ.get("MVUQ_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled via MVUQ_NO_NUMBA")
    from numba import njit

    _HAS_NUMBA = True
except ImportError:
    _HAS_NUMBA = False

    def njit(*args, **kwargs):  # no-op decorator so the jitted defs still parse
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    """Name of the active kernel backend: "numba" or "numpy"."""
    return "numba" if _HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Random-convolution patch features
#
# For each filter k and each valid patch P (stride-spaced), the response is
# r = <filter_k, P>; the pooled features are mean(relu(r - bias_k)) and
# mean(relu(bias_k - r)), giving 2 features per filter, interleaved.
# ---------------------------------------------------------------------------


def conv_features_numpy(channels: np.ndarray, filters: np.ndarray, biases: np.ndarray,
                        patch: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(channels, (patch, patch), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    c, nh, nw = windows.shape[0], windows.shape[1], windows.shape[2]
    flat = windows.transpose(1, 2, 0, 3, 4).reshape(nh * nw, c * patch * patch)
    resp = flat @ filters.T  # (n_patches, n_filters)
    pos = np.maximum(resp - biases, 0.0).mean(axis=0)
    neg = np.maximum(biases - resp, 0.0).mean(axis=0)
    out = np.empty(2 * filters.shape[0])
    out[0::2] = pos
    out[1::2] = neg
    return out


@njit(cache=True)
def conv_features_numba(channels, filters, biases, patch, stride):  # pragma: no cover - timed path
    c, h, w = channels.shape
    k = filters.shape[0]
    nh = (h - patch) // stride + 1
    nw = (w - patch) // stride + 1
    n_patches = nh * nw
    pos = np.zeros(k)
    neg = np.zeros(k)
    for i in range(nh):
        for j in range(nw):
            r0 = i * stride
            c0 = j * stride
            for f in range(k):
                acc = 0.0
                idx = 0
                for ch in range(c):
                    for pr in range(patch):
                        for pc in range(patch):
                            acc += filters[f, idx] * channels[ch, r0 + pr, c0 + pc]
                            idx += 1
                d = acc - biases[f]
                if d > 0.0:
                    pos[f] += d
                else:
                    neg[f] -= d
    out = np.empty(2 * k)
    for f in range(k):
        out[2 * f] = pos[f] / n_patches
        out[2 * f + 1] = neg[f] / n_patches
    return out


def conv_features(channels: np.ndarray, filters: np.ndarray, biases: np.ndarray,
                  patch: int, stride: int) -> np.ndarray:
    """Pooled rectified responses of random filters over image patches.

    The BLAS-backed numpy path wins this benchmark (the work is one big
    patch-matrix @ filter-matrix product), so it is the default; the numba
    loop is kept for the benchmark comparison.
    """
    channels = np.ascontiguousarray(channels, dtype=np.float64)
    filters = np.ascontiguousarray(filters, dtype=np.float64)
    biases = np.ascontiguousarray(biases, dtype=np.float64)
    return conv_features_numpy(channels, filters, biases, patch, stride)


# ---------------------------------------------------------------------------
# Ordinary-kriging node solves
#
# Per grid node: take its k nearest observations, assemble the OK system
#   [gamma(d_ij)  1] [w ]   [gamma(d_i0)]
#   [1^T          0] [mu] = [1          ]
# and return estimate w.z, variance w.gamma0 + mu, and the weight sum.
# gamma is the exponential semivariogram with gamma(0) = 0 exactly.
# ---------------------------------------------------------------------------

_EARTH_RADIUS_KM = 6371.0088


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km between points given in degrees."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(a, dtype=np.float64))
                              for a in (lon1, lat1, lon2, lat2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _gamma_exp(h, nugget, sill, range_km):
    g = nugget + (sill - nugget) * (1.0 - np.exp(-h / range_km))
    return np.where(h <= 0.0, 0.0, g)


def ok_solve_numpy(points_rad: np.ndarray, values: np.ndarray, nodes_rad: np.ndarray,
                   neighbor_idx: np.ndarray, nugget: float, sill: float,
                   range_km: float, jitter: float = 1e-10) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    g = nodes_rad.shape[0]
    k = neighbor_idx.shape[1]
    est = np.empty(g)
    var = np.empty(g)
    wsum = np.empty(g)
    failed = np.zeros(g, dtype=np.bool_)
    for node in range(g):
        idx = neighbor_idx[node]
        lon = points_rad[idx, 0]
        lat = points_rad[idx, 1]
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        h = np.sin(dlat / 2.0) ** 2 + np.cos(lat[:, None]) * np.cos(lat[None, :]) * np.sin(dlon / 2.0) ** 2
        dmat = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
        dlat0 = nodes_rad[node, 1] - lat
        dlon0 = nodes_rad[node, 0] - lon
        h0 = np.sin(dlat0 / 2.0) ** 2 + np.cos(lat) * np.cos(nodes_rad[node, 1]) * np.sin(dlon0 / 2.0) ** 2
        d0 = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h0, 0.0, 1.0)))

        a = np.empty((k + 1, k + 1))
        a[:k, :k] = _gamma_exp(dmat, nugget, sill, range_km)
        np.fill_diagonal(a[:k, :k], 0.0)
        a[k, :] = 1.0
        a[:, k] = 1.0
        a[k, k] = 0.0
        b = np.empty(k + 1)
        b[:k] = _gamma_exp(d0, nugget, sill, range_km)
        b[k] = 1.0

        sol = None
        for attempt in range(2):
            try:
                sol = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                break
            a[:k, :k][np.diag_indices(k)] += jitter
            sol = None
        if sol is None:
            failed[node] = True
            est[node] = np.nan
            var[node] = np.nan
            wsum[node] = np.nan
            continue
        w = sol[:k]
        est[node] = w @ values[idx]
        var[node] = max(w @ b[:k] + sol[k], 0.0)
        wsum[node] = w.sum()
    return est, var, wsum, failed


@njit(cache=True)
def _gauss_solve(a, b):  # pragma: no cover - timed path
    """In-place Gaussian elimination with partial pivoting; returns success flag."""
    n = a.shape[0]
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best < 1e-300:
            return False
        if piv != col:
            for cc in range(n):
                tmp = a[col, cc]
                a[col, cc] = a[piv, cc]
                a[piv, cc] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, n):
            f = a[r, col] / a[col, col]
            if f != 0.0:
                for cc in range(col, n):
                    a[r, cc] -= f * a[col, cc]
                b[r] -= f * b[col]
    for col in range(n - 1, -1, -1):
        s = b[col]
        for cc in range(col + 1, n):
            s -= a[col, cc] * b[cc]
        b[col] = s / a[col, col]
    return True


@njit(cache=True)
def ok_solve_numba(points_rad, values, nodes_rad, neighbor_idx, nugget, sill,
                   range_km, jitter):  # pragma: no cover - timed path
    g = nodes_rad.shape[0]
    k = neighbor_idx.shape[1]
    est = np.empty(g)
    var = np.empty(g)
    wsum = np.empty(g)
    failed = np.zeros(g, dtype=np.bool_)
    a = np.empty((k + 1, k + 1))
    b = np.empty(k + 1)
    rhs = np.empty(k + 1)
    work = np.empty((k + 1, k + 1))
    for node in range(g):
        for i in range(k):
            ii = neighbor_idx[node, i]
            for j in range(k):
                jj = neighbor_idx[node, j]
                if i == j:
                    a[i, j] = 0.0
                else:
                    dlat = points_rad[jj, 1] - points_rad[ii, 1]
                    dlon = points_rad[jj, 0] - points_rad[ii, 0]
                    h = (np.sin(dlat / 2.0) ** 2
                         + np.cos(points_rad[ii, 1]) * np.cos(points_rad[jj, 1]) * np.sin(dlon / 2.0) ** 2)
                    if h < 0.0:
                        h = 0.0
                    elif h > 1.0:
                        h = 1.0
                    d = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))
                    if d <= 0.0:
                        a[i, j] = 0.0
                    else:
                        a[i, j] = nugget + (sill - nugget) * (1.0 - np.exp(-d / range_km))
            a[k, i] = 1.0
            a[i, k] = 1.0
        a[k, k] = 0.0
        for i in range(k):
            ii = neighbor_idx[node, i]
            dlat = nodes_rad[node, 1] - points_rad[ii, 1]
            dlon = nodes_rad[node, 0] - points_rad[ii, 0]
            h = (np.sin(dlat / 2.0) ** 2
                 + np.cos(points_rad[ii, 1]) * np.cos(nodes_rad[node, 1]) * np.sin(dlon / 2.0) ** 2)
            if h < 0.0:
                h = 0.0
            elif h > 1.0:
                h = 1.0
            d = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))
            if d <= 0.0:
                b[i] = 0.0
            else:
                b[i] = nugget + (sill - nugget) * (1.0 - np.exp(-d / range_km))
        b[k] = 1.0

        ok = False
        for attempt in range(2):
            for r in range(k + 1):
                for cc in range(k + 1):
                    work[r, cc] = a[r, cc]
                rhs[r] = b[r]
            if attempt == 1:
                for r in range(k):
                    work[r, r] += jitter
            ok = _gauss_solve(work, rhs)
            if ok:
                allfin = True
                for r in range(k + 1):
                    if not np.isfinite(rhs[r]):
                        allfin = False
                        break
                ok = allfin
            if ok:
                break
        if not ok:
            failed[node] = True
            est[node] = np.nan
            var[node] = np.nan
            wsum[node] = np.nan
            continue
        e = 0.0
        v = sol_k = 0.0
        ws = 0.0
        for i in range(k):
            e += rhs[i] * values[neighbor_idx[node, i]]
            v += rhs[i] * b[i]
            ws += rhs[i]
        sol_k = rhs[k]
        est[node] = e
        var[node] = max(v + sol_k, 0.0)
        wsum[node] = ws
    return est, var, wsum, failed


def ok_solve(points_rad: np.ndarray, values: np.ndarray, nodes_rad: np.ndarray,
             neighbor_idx: np.ndarray, nugget: float, sill: float, range_km: float,
             jitter: float = 1e-10):
    """Solve the ordinary-kriging system at every node; backend-dispatched."""
    points_rad = np.ascontiguousarray(points_rad, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    nodes_rad = np.ascontiguousarray(nodes_rad, dtype=np.float64)
    neighbor_idx = np.ascontiguousarray(neighbor_idx, dtype=np.int64)
    if _HAS_NUMBA:
        return ok_solve_numba(points_rad, values, nodes_rad, neighbor_idx,
                              float(nugget), float(sill), float(range_km), float(jitter))
    return ok_solve_numpy(points_rad, values, nodes_rad, neighbor_idx,
                          float(nugget), float(sill), float(range_km), float(jitter))
