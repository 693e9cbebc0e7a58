import numpy as np
import pytest

from pwtrack import (
    CylinderGeometry,
    MotionLaw,
    ProbeConfig,
    ScattererPhantom,
    advance_motion,
    build_rotating_cylinder_phantom,
)
from pwtrack.phantom import resolution_cell_volume

DESK_PROBE = ProbeConfig(element_count=96, aperture=95 * 230e-6)
GEOMETRY = CylinderGeometry(
    centers=((-5e-3, 16e-3), (5e-3, 12e-3)), radius=3e-3, height=1e-3)


def build(amplitudes_db=(20.0, 0.0), density=10.0, seed=0, omega=0.0):
    return build_rotating_cylinder_phantom(
        probe=DESK_PROBE, density=density, amplitudes_db=amplitudes_db,
        geometry=GEOMETRY, angular_velocity=omega,
        rng=np.random.default_rng(seed))


def test_resolution_cell_volume_components():
    probe = ProbeConfig()
    # axial: c / (2 * bandwidth); lateral: wavelength * depth / aperture
    axial = 1540.0 / (2.0 * 0.75 * 5.3e6)
    lateral = (1540.0 / 5.208e6) * 30e-3 / 43.93e-3
    expected = axial * lateral * 1e-3
    assert resolution_cell_volume(probe, 30e-3) == pytest.approx(expected)


def test_scatterer_count_follows_density():
    phantom = build()
    depth = np.mean([c[1] for c in GEOMETRY.centers])
    cell = resolution_cell_volume(DESK_PROBE, depth,
                                  elevation_cell=GEOMETRY.height)
    per_cylinder = round(10.0 * GEOMETRY.volume / cell)
    assert len(phantom) == 2 * per_cylinder
    assert np.sum(phantom.zones == 0) == per_cylinder
    assert np.sum(phantom.zones == 1) == per_cylinder


def test_positions_inside_cylinders():
    phantom = build()
    for zone, (cx, cz) in enumerate(GEOMETRY.centers):
        sel = phantom.zones == zone
        r = np.hypot(phantom.positions[sel, 0] - cx,
                     phantom.positions[sel, 2] - cz)
        assert r.max() <= GEOMETRY.radius
        assert np.abs(phantom.positions[sel, 1]).max() <= GEOMETRY.height / 2


def test_positions_fill_cylinder_uniformly():
    phantom = build(density=40.0, seed=3)
    cx, cz = GEOMETRY.centers[0]
    sel = phantom.zones == 0
    r = np.hypot(phantom.positions[sel, 0] - cx,
                 phantom.positions[sel, 2] - cz)
    # for a uniform disk, P(r <= R/sqrt(2)) = 1/2
    inner = np.mean(r <= GEOMETRY.radius / np.sqrt(2.0))
    assert inner == pytest.approx(0.5, abs=0.03)


def test_mean_amplitude_magnitude_matches_db_levels():
    phantom = build(amplitudes_db=(20.0, 0.0), density=40.0, seed=1)
    mags = [np.mean(np.abs(phantom.amplitudes[phantom.zones == z]))
            for z in (0, 1)]
    assert mags[0] / mags[1] == pytest.approx(10.0, rel=0.1)
    assert mags[1] == pytest.approx(1.0, rel=0.05)


def test_build_is_deterministic_for_a_seed():
    a, b = build(seed=7), build(seed=7)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)
    c = build(seed=8)
    assert not np.array_equal(a.positions, c.positions)


def test_rotation_preserves_distance_to_center():
    phantom = build(omega=50.0)
    moved = advance_motion(phantom, 1e-3)
    for zone, (cx, cz) in enumerate(GEOMETRY.centers):
        sel = phantom.zones == zone
        r0 = np.hypot(phantom.positions[sel, 0] - cx,
                      phantom.positions[sel, 2] - cz)
        r1 = np.hypot(moved.positions[sel, 0] - cx,
                      moved.positions[sel, 2] - cz)
        np.testing.assert_allclose(r1, r0, rtol=0, atol=1e-12)


def test_rotation_angle_and_sense():
    phantom = ScattererPhantom(
        positions=np.array([[1e-3, 0.0, 16e-3]]),
        amplitudes=np.array([1.0]),
        zones=np.array([0], dtype=np.int32),
        motion=MotionLaw(kind="rigid_rotation", centers=((0.0, 16e-3),),
                         angular_velocity=10.0),
    )
    moved = advance_motion(phantom, 1e-2)  # 0.1 rad
    x, _, z = moved.positions[0]
    assert x == pytest.approx(1e-3 * np.cos(0.1))
    # a point lateral of the center moves toward smaller depth
    assert z == pytest.approx(16e-3 - 1e-3 * np.sin(0.1))


def test_static_motion_is_identity():
    phantom = build()
    assert advance_motion(phantom, 1e-3) is phantom
    rotating = build(omega=50.0)
    assert advance_motion(rotating, 0.0) is rotating


def test_negative_dt_rejected():
    with pytest.raises(ValueError):
        advance_motion(build(), -1e-3)


def test_phantom_validation():
    with pytest.raises(ValueError):
        ScattererPhantom(positions=np.zeros((3, 2)),
                         amplitudes=np.zeros(3),
                         zones=np.zeros(3, dtype=np.int32))
    with pytest.raises(ValueError):
        ScattererPhantom(positions=np.full((1, 3), np.nan),
                         amplitudes=np.zeros(1),
                         zones=np.zeros(1, dtype=np.int32))


def test_build_rejects_mismatched_amplitudes():
    with pytest.raises(ValueError):
        build(amplitudes_db=(20.0,))
