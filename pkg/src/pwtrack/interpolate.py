"""Cubic B-spline interpolation with recursive prefiltering.

The prefilter converts samples into B-spline coefficients (scipy's
recursive causal/anticausal filter, mirror boundary). Evaluation is a
four-tap kernel sum, compiled with numba so it can run inside the
beamforming inner loop.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.ndimage import spline_filter1d


def prefilter(samples, axis=0):
    """B-spline coefficients of `samples` along `axis` (mirror extension).

    Accepts real or complex input; complex data is filtered part-wise
    (the filter is linear).
    """
    samples = np.asarray(samples)
    if np.iscomplexobj(samples):
        re = spline_filter1d(samples.real, order=3, axis=axis, mode="mirror")
        im = spline_filter1d(samples.imag, order=3, axis=axis, mode="mirror")
        return re + 1j * im
    return spline_filter1d(np.asarray(samples, dtype=np.float64), order=3,
                           axis=axis, mode="mirror")


@njit(cache=True, inline="always")
def mirror_index(i, n):
    """Fold index i into [0, n) by mirror reflection about the end samples."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


@njit(cache=True, inline="always")
def bspline_eval(coeffs, x):
    """Evaluate the cubic B-spline defined by `coeffs` at position x."""
    n = coeffs.shape[0]
    i0 = int(np.floor(x))
    t = x - i0
    # kernel weights for taps i0-1 .. i0+2
    w0 = (1.0 - t) ** 3 / 6.0
    w1 = (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0
    w2 = (1.0 + 3.0 * t + 3.0 * t * t - 3.0 * t * t * t) / 6.0
    w3 = t * t * t / 6.0
    acc = w0 * coeffs[mirror_index(i0 - 1, n)]
    acc += w1 * coeffs[mirror_index(i0, n)]
    acc += w2 * coeffs[mirror_index(i0 + 1, n)]
    acc += w3 * coeffs[mirror_index(i0 + 2, n)]
    return acc


@njit(cache=True)
def _sample1d_real(coeffs, positions, out):
    for k in range(positions.shape[0]):
        out[k] = bspline_eval(coeffs, positions[k])


def sample1d(coeffs, positions):
    """Evaluate prefiltered coefficients at fractional sample positions."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if np.iscomplexobj(coeffs):
        re = np.empty(positions.shape[0])
        im = np.empty(positions.shape[0])
        _sample1d_real(np.ascontiguousarray(coeffs.real), positions, re)
        _sample1d_real(np.ascontiguousarray(coeffs.imag), positions, im)
        return re + 1j * im
    out = np.empty(positions.shape[0])
    _sample1d_real(np.ascontiguousarray(coeffs, dtype=np.float64), positions, out)
    return out
