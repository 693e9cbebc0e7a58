import numpy as np
import pytest

from helpers import zncc_surface_direct
from pwtrack import zncc_surface


def test_fft_path_matches_brute_force_on_random_pairs():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(200):
        m = rng.integers(9, 18)
        n = rng.integers(9, 18)
        a = rng.standard_normal((m, n))
        b = rng.standard_normal((m, n))
        max_lag = int(rng.integers(2, 5))
        surf = zncc_surface(a, b, max_lag, min_overlap=0.5)
        ref_values, ref_adm = zncc_surface_direct(a, b, max_lag,
                                                  min_overlap=0.5)
        np.testing.assert_array_equal(surf.admissible, ref_adm)
        diff = np.abs(surf.values - ref_values)[ref_adm]
        worst = max(worst, diff.max() if diff.size else 0.0)
    assert worst < 1e-6


def test_known_integer_shift_peaks_at_the_shift():
    rng = np.random.default_rng(0)
    big = rng.standard_normal((40, 40))
    a = big[10:25, 10:25]
    # same window location on a scene that moved by (+3, -2): the content
    # seen in window a now sits 3 rows later / 2 columns earlier
    b = big[7:22, 12:27]
    surf = zncc_surface(a, b, 5)
    assert surf.peak_lag == (3, -2)
    assert surf.values[3 + 5, -2 + 5] == pytest.approx(1.0, abs=1e-12)


def test_affine_intensity_change_leaves_surface_unchanged():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((17, 17))
    b = rng.standard_normal((17, 17))
    base = zncc_surface(a, b, 3)
    scaled = zncc_surface(a, 3.0 * b + 5.0, 3)
    np.testing.assert_allclose(scaled.values[scaled.admissible],
                               base.values[base.admissible], atol=1e-9)
    assert scaled.peak_lag == base.peak_lag


def test_anticorrelated_windows():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((15, 15))
    surf = zncc_surface(a, -a, 2)
    center = surf.values[2, 2]
    assert center == pytest.approx(-1.0, abs=1e-12)


def test_zero_variance_window_rejected():
    with pytest.raises(ValueError, match="zero-variance"):
        zncc_surface(np.ones((9, 9)), np.random.default_rng(0).standard_normal((9, 9)), 2)


def test_min_overlap_gates_extreme_lags():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((11, 11))
    b = rng.standard_normal((11, 11))
    surf = zncc_surface(a, b, 8, min_overlap=0.5)
    # a lag of (8, 8) leaves a 3x3 overlap, far below half the area
    assert not surf.admissible[-1, -1]
    assert surf.admissible[8, 8]  # zero lag stays admissible


def test_mismatched_window_shapes_rejected():
    with pytest.raises(ValueError):
        zncc_surface(np.zeros((9, 9)), np.zeros((9, 8)), 2)


def test_peak_invalid_when_nothing_admissible():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((9, 9))
    b = rng.standard_normal((9, 9))
    surf = zncc_surface(a, b, 2, min_overlap=1.1)
    assert not surf.peak_valid
