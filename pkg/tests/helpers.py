"""Shared test utilities: brute-force correlation oracles and synthetic
speckle generation."""

import numpy as np
from scipy.ndimage import gaussian_filter

from pwtrack import EnvelopeImage
from pwtrack.config import ImageGrid


def zncc_direct(a, b, lag):
    """Direct-definition zero-normalized cross-correlation at one lag.

    Positive lag means the matching content of `b` sits at larger
    indices than in `a`. Returns None when either overlap patch has zero
    variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = a.shape
    dz, dx = lag
    az0, az1 = max(0, -dz), m + min(0, -dz)
    ax0, ax1 = max(0, -dx), n + min(0, -dx)
    pa = a[az0:az1, ax0:ax1]
    pb = b[az0 + dz:az1 + dz, ax0 + dx:ax1 + dx]
    if pa.size == 0:
        return None
    da = pa - pa.mean()
    db = pb - pb.mean()
    var = np.sum(da * da) * np.sum(db * db)
    if var <= 0:
        return None
    return float(np.sum(da * db) / np.sqrt(var))


def zncc_surface_direct(a, b, max_lag, min_overlap=0.5):
    """Brute-force surface over lags [-max_lag, max_lag]^2 with the same
    overlap-admissibility rule as the production path."""
    m, n = np.asarray(a).shape
    values = np.zeros((2 * max_lag + 1, 2 * max_lag + 1))
    admissible = np.zeros_like(values, dtype=bool)
    for dz in range(-max_lag, max_lag + 1):
        for dx in range(-max_lag, max_lag + 1):
            count = (m - abs(dz)) * (n - abs(dx))
            if count < min_overlap * m * n:
                continue
            v = zncc_direct(a, b, (dz, dx))
            if v is None:
                continue
            values[dz + max_lag, dx + max_lag] = v
            admissible[dz + max_lag, dx + max_lag] = True
    return values, admissible


def speckle_envelope_pair(seed, shift_m, dx=73.925e-6, n=256, oversample=8,
                          correlation_px=1.0):
    """Two envelope frames of one speckle realization, the second shifted.

    The speckle is a complex Gaussian field low-pass filtered to a
    correlation length of `correlation_px` coarse pixels, shifted by the
    exact (sub)pixel amount in the Fourier domain (periodic), and
    decimated to the coarse grid. Returns (frame_a, frame_b) as
    EnvelopeImage objects; content of frame_b sits at +shift relative to
    frame_a.
    """
    rng = np.random.default_rng(seed)
    nf = n * oversample
    field = rng.standard_normal((nf, nf)) + 1j * rng.standard_normal((nf, nf))
    sigma = correlation_px * oversample
    field = gaussian_filter(field.real, sigma) + 1j * gaussian_filter(
        field.imag, sigma)

    shift_px = (np.asarray(shift_m, dtype=np.float64) / dx) * oversample
    kz = np.fft.fftfreq(nf)[:, None]
    kx = np.fft.fftfreq(nf)[None, :]
    # shifting content by +s means sampling the original at x - s
    phase = np.exp(-2j * np.pi * (kz * shift_px[0] + kx * shift_px[1]))
    shifted = np.fft.ifft2(np.fft.fft2(field) * phase)

    grid = ImageGrid(x_min=0.0, x_max=(n - 1) * dx, z_min=0.0,
                     z_max=(n - 1) * dx, dx=dx, dz=dx, nx=n, nz=n)
    env_a = np.abs(field[::oversample, ::oversample])
    env_b = np.abs(shifted[::oversample, ::oversample])
    return (EnvelopeImage(pixels=env_a, grid=grid),
            EnvelopeImage(pixels=env_b, grid=grid))


def gaussian_surface(offset, sigma=(1.3, 0.9), rho=0.0, max_lag=4):
    """Sampled anisotropic Gaussian correlation surface peaking at `offset`."""
    oz, ox = offset
    z = np.arange(-max_lag, max_lag + 1)[:, None] - oz
    x = np.arange(-max_lag, max_lag + 1)[None, :] - ox
    sz, sx = sigma
    q = (z / sz) ** 2 - 2 * rho * (z / sz) * (x / sx) + (x / sx) ** 2
    return np.exp(-q / (2 * (1 - rho**2)))
