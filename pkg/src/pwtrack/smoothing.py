"""Robust smoothing of gridded data via DCT-penalized least squares.

The smoothing parameter is selected by generalized cross-validation and
outliers are down-weighted iteratively with a bisquare weight, following
the classical unsupervised discrete-smoothing-spline scheme. Cells with
zero weight (missing / invalid) are inpainted.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import distance_transform_edt
from scipy.optimize import fminbound


def _laplacian_eigenvalues(shape):
    lam = np.zeros(shape)
    for axis, n in enumerate(shape):
        freq = 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)
        lam += freq.reshape([-1 if a == axis else 1 for a in range(len(shape))])
    return lam


def _nearest_fill(y, missing):
    if not missing.any():
        return y.copy()
    idx = distance_transform_edt(missing, return_distances=False,
                                 return_indices=True)
    return y[tuple(idx)]


def smooth_grid(y, weights=None, robust=True, max_outer=3, max_inner=50,
                tol=1e-5):
    """Smooth a 2-D array, choosing the penalty by GCV.

    Parameters
    ----------
    y : 2-D array. NaNs are treated as missing.
    weights : optional array in [0, 1]; zero marks missing cells, which
        are inpainted from their smoothed neighborhood.
    robust : iterate bisquare reweighting of residual outliers.

    Returns
    -------
    (z, s) : the smoothed array and the selected smoothing parameter.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("smooth_grid expects a 2-D array")
    finite = np.isfinite(y)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    w = np.where(finite, w, 0.0)
    if not (w > 0).any():
        raise ValueError("no valid cells to smooth")
    y_filled = _nearest_fill(np.where(finite, y, 0.0), ~finite)

    lam = _laplacian_eigenvalues(y.shape)
    lam2 = lam**2
    n = y.size
    n_valid = float((w > 0).sum())

    z = _nearest_fill(np.where(w > 0, y_filled, 0.0), w == 0)
    s = None
    w_robust = np.ones_like(y)

    outer_steps = max_outer if robust else 1
    for _ in range(outer_steps):
        w_total = w * w_robust
        for _ in range(max_inner):
            rhs = dctn(w_total * (y_filled - z) + z, norm="ortho")

            def gcv_score(log_s):
                gamma = 1.0 / (1.0 + 10.0**log_s * lam2)
                z_hat = idctn(gamma * rhs, norm="ortho")
                rss = np.sum(w_total * (y_filled - z_hat) ** 2)
                trace_h = gamma.sum()
                return (rss / n_valid) / (1.0 - trace_h / n) ** 2

            log_s = fminbound(gcv_score, -9.0, 9.0, xtol=0.05)
            s = 10.0**log_s
            gamma = 1.0 / (1.0 + s * lam2)
            z_new = idctn(gamma * rhs, norm="ortho")
            change = np.linalg.norm(z_new - z) / max(np.linalg.norm(z_new), 1e-30)
            z = z_new
            if change < tol:
                break
        if not robust:
            break
        residual = (y_filled - z)[w > 0]
        mad = np.median(np.abs(residual - np.median(residual)))
        scale = 1.4826 * mad
        if scale < 1e-30:
            break
        u = np.abs(y_filled - z) / scale
        w_robust = np.where(u < 4.685, (1.0 - (u / 4.685) ** 2) ** 2, 0.0)
    return z, s
