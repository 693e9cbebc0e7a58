import numpy as np
import pytest

from pwtrack.smoothing import smooth_grid


def test_constant_field_is_preserved():
    y = np.full((20, 30), 3.7)
    z, _ = smooth_grid(y)
    np.testing.assert_allclose(z, y, atol=1e-12)


def test_noiseless_ramp_passes_through():
    zz, xx = np.meshgrid(np.linspace(0, 1, 25), np.linspace(0, 2, 40),
                         indexing="ij")
    y = 3.0 * xx - 1.5 * zz + 0.25
    z, _ = smooth_grid(y)
    rms = np.sqrt(np.mean((z - y) ** 2)) / np.sqrt(np.mean(y**2))
    assert rms < 1e-6


def test_single_outlier_is_suppressed():
    y = np.full((24, 24), 1.0)
    y[12, 12] = 10.0
    z, _ = smooth_grid(y, robust=True)
    assert abs(z[12, 12] - 1.0) < 0.05 * 9.0
    assert np.abs(z - 1.0).max() < 0.05 * 9.0


def test_noise_is_reduced_on_a_smooth_signal():
    rng = np.random.default_rng(5)
    zz, xx = np.meshgrid(np.linspace(0, np.pi, 40), np.linspace(0, np.pi, 40),
                         indexing="ij")
    truth = np.sin(zz) * np.cos(xx)
    noisy = truth + 0.2 * rng.standard_normal(truth.shape)
    z, s = smooth_grid(noisy, robust=False)
    assert np.sqrt(np.mean((z - truth) ** 2)) < 0.5 * np.sqrt(
        np.mean((noisy - truth) ** 2))
    assert s > 0


def test_missing_cells_are_inpainted():
    zz, xx = np.meshgrid(np.linspace(0, 1, 30), np.linspace(0, 1, 30),
                         indexing="ij")
    y = xx + zz
    y_holed = y.copy()
    y_holed[10:14, 10:14] = np.nan
    z, _ = smooth_grid(y_holed)
    assert np.all(np.isfinite(z))
    # filled values stay within the range of the surrounding ramp
    hole = z[10:14, 10:14]
    assert hole.min() >= y[9:15, 9:15].min() - 0.05
    assert hole.max() <= y[9:15, 9:15].max() + 0.05
    np.testing.assert_allclose(hole, y[10:14, 10:14], atol=0.15)


def test_zero_weight_cells_are_ignored():
    y = np.full((20, 20), 2.0)
    y[5, 5] = 1e6  # wild value, but weighted out
    w = np.ones_like(y)
    w[5, 5] = 0.0
    z, _ = smooth_grid(y, weights=w, robust=False)
    np.testing.assert_allclose(z, 2.0, atol=1e-6)


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        smooth_grid(np.zeros(10))
    with pytest.raises(ValueError):
        smooth_grid(np.full((5, 5), np.nan))
