"""Relative endpoint-error evaluation of displacement estimates.

REPE is ||estimate - truth|| / ||truth||; MREPE its sample mean over a
set; RVE the fraction of cells whose realization-averaged REPE stays at
or below a threshold (100% by default). Cells with zero reference
displacement are undefined and reported as missing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tracking import DisplacementField


@dataclass(frozen=True)
class RepeMap:
    """Local REPE values (fraction, 1.0 = 100%) with an evaluation mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must share one shape")
        if np.any(self.values[self.mask & np.isfinite(self.values)] < 0):
            raise ValueError("REPE values must be non-negative")


def repe(estimate, truth) -> float:
    """Relative endpoint error of one 2-D displacement estimate.

    Returns NaN (missing) when the reference displacement is zero, where
    the metric is undefined.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    norm_truth = np.linalg.norm(truth)
    if norm_truth == 0.0:
        return float("nan")
    return float(np.linalg.norm(estimate - truth) / norm_truth)


def mrepe(pairs):
    """Mean REPE over valid pairs.

    Returns (mean, n_skipped) where n_skipped counts zero-truth pairs.
    Raises if no valid pair remains.
    """
    values = [repe(est, tru) for est, tru in pairs]
    valid = [v for v in values if np.isfinite(v)]
    if not valid:
        raise ValueError("no valid (non-zero-truth) pairs")
    return float(np.mean(valid)), len(values) - len(valid)


def repe_field(field: DisplacementField, reference: DisplacementField) -> RepeMap:
    """Local REPE of a field against a reference on the same center grid."""
    if field.u_x.shape != reference.u_x.shape:
        raise ValueError("fields must share one center grid")
    diff = np.hypot(field.u_x - reference.u_x, field.u_z - reference.u_z)
    norm_ref = np.hypot(reference.u_x, reference.u_z)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(norm_ref > 0, diff / norm_ref, np.nan)
    return RepeMap(values=values, mask=norm_ref > 0)


def rve(avg_repe_map: RepeMap, threshold: float = 1.0) -> float:
    """Fraction of masked cells whose averaged REPE is <= threshold."""
    mask = avg_repe_map.mask & np.isfinite(avg_repe_map.values)
    if not mask.any():
        raise ValueError("empty evaluation mask")
    return float(np.mean(avg_repe_map.values[mask] <= threshold))


def analytic_rotation_field(center, angular_velocity: float,
                            frame_interval: float,
                            centers_x, centers_z,
                            valid=None) -> DisplacementField:
    """Exact rigid-rotation displacement over one frame interval.

    u(p) = R(theta) (p - c) - (p - c), with the same rotation sense as
    the phantom motion law (counter-clockwise in the x-z image plane).
    """
    centers_x = np.asarray(centers_x, dtype=np.float64)
    centers_z = np.asarray(centers_z, dtype=np.float64)
    theta = angular_velocity * frame_interval
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cx, cz = center
    xx, zz = np.meshgrid(centers_x - cx, centers_z - cz)
    u_x = (cos_t * xx + sin_t * zz) - xx
    u_z = (-sin_t * xx + cos_t * zz) - zz
    if valid is None:
        valid = np.ones(u_x.shape, dtype=bool)
    return DisplacementField(u_x=u_x, u_z=u_z, centers_x=centers_x,
                             centers_z=centers_z, valid=valid)


def zone_mask(centers_x, centers_z, cylinder_center, cylinder_radius: float,
              inner_margin: float, outer_margin: float):
    """Annulus evaluation mask around one cylinder center.

    True where inner_margin <= r <= cylinder_radius - outer_margin.
    """
    if inner_margin < 0 or outer_margin < 0:
        raise ValueError("margins must be >= 0")
    outer = cylinder_radius - outer_margin
    if outer <= inner_margin:
        raise ValueError("margins leave an empty evaluation zone")
    cx, cz = cylinder_center
    xx, zz = np.meshgrid(np.asarray(centers_x) - cx, np.asarray(centers_z) - cz)
    r = np.hypot(xx, zz)
    mask = (r >= inner_margin) & (r <= outer)
    if not mask.any():
        raise ValueError("margins leave an empty evaluation zone")
    return mask
